//! Detection of dictionary features in paper text.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionaryEntry, FeatureKind};
use crate::error::{Error, Result};
use crate::matcher::SurfaceMatcher;
use crate::text::{split_sentences, subdivide_at, years_in, SentenceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    De,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperText {
    pub paper_id: String,
    pub text: String,
    pub language_hint: Option<Language>,
}

impl PaperText {
    pub fn new(paper_id: impl Into<String>, text: impl Into<String>) -> Self {
        PaperText {
            paper_id: paper_id.into(),
            text: text.into(),
            language_hint: None,
        }
    }

    /// Reads a UTF-8 text file; the paper id is the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let paper_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Config(format!("no file name in {}", path.display())))?;
        Ok(PaperText::new(paper_id, text))
    }
}

/// One occurrence of a feature in a paper.
///
/// `query` is the text of the sentence, or of the piece of it left after
/// subdividing a sentence with repeated occurrences, and is used verbatim
/// as the ranking query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceMention {
    pub paper_id: String,
    pub feature: String,
    pub kind: FeatureKind,
    pub start: usize,
    pub end: usize,
    pub sentence_index: usize,
    pub segment_start: usize,
    pub segment_end: usize,
    pub query: String,
    pub years_in_context: Vec<i32>,
}

impl ReferenceMention {
    /// Identifies the mention within its paper.
    pub fn key(&self) -> String {
        format!("{}-{}:{}", self.start, self.end, self.feature)
    }

    pub fn segment_text(&self) -> &str {
        &self.query
    }
}

/// Finds every occurrence of every non-blacklisted dictionary entry.
///
/// Occurrences are assigned to sentences; a sentence holding an entry more
/// than once is cut into one segment per occurrence so that each mention
/// gets its own context (and its own years).
pub fn detect_references(paper: &PaperText, dictionary: &Dictionary) -> Vec<ReferenceMention> {
    let entries: Vec<&DictionaryEntry> = dictionary.active().collect();
    detect_with_entries(paper, &entries, &split_sentences(&paper.text))
}

pub(crate) fn detect_with_entries(
    paper: &PaperText,
    entries: &[&DictionaryEntry],
    sentences: &[SentenceSpan],
) -> Vec<ReferenceMention> {
    let text = paper.text.as_str();
    let matcher = SurfaceMatcher::new(entries.iter().map(|e| (e.surface.as_str(), e.kind.match_rule())));

    // (sentence, entry) -> absolute occurrence ranges
    let mut grouped: BTreeMap<(usize, usize), Vec<std::ops::Range<usize>>> = BTreeMap::new();
    for m in matcher.find_all(text) {
        let idx = sentences.partition_point(|s| s.end <= m.range.start);
        if let Some(s) = sentences.get(idx) {
            if s.start <= m.range.start && m.range.end <= s.end {
                grouped.entry((idx, m.surface)).or_default().push(m.range);
            }
        }
    }

    let mut mentions = Vec::new();
    for ((sentence_idx, entry_idx), ranges) in grouped {
        let sentence = &sentences[sentence_idx];
        let entry = entries[entry_idx];
        let relative: Vec<_> = ranges
            .iter()
            .map(|r| r.start - sentence.start..r.end - sentence.start)
            .collect();
        let segments = subdivide_at(&text[sentence.range()], &relative);
        for (occurrence, segment) in ranges.iter().zip(segments) {
            let seg_start = sentence.start + segment.start;
            let seg_end = sentence.start + segment.end;
            let query = text[seg_start..seg_end].to_string();
            mentions.push(ReferenceMention {
                paper_id: paper.paper_id.clone(),
                feature: entry.surface.clone(),
                kind: entry.kind,
                start: occurrence.start,
                end: occurrence.end,
                sentence_index: sentence.index,
                segment_start: seg_start,
                segment_end: seg_end,
                years_in_context: years_in(&query),
                query,
            });
        }
    }
    mentions.sort_by(|a, b| (a.start, a.end, a.kind, &a.feature).cmp(&(b.start, b.end, b.kind, &b.feature)));
    mentions
}

/// Partitions mentions by feature surface, keeping document order inside
/// each group.
pub fn group_by_feature(mentions: &[ReferenceMention]) -> BTreeMap<&str, Vec<&ReferenceMention>> {
    let mut groups: BTreeMap<&str, Vec<&ReferenceMention>> = BTreeMap::new();
    for m in mentions {
        groups.entry(m.feature.as_str()).or_default().push(m);
    }
    groups
}

/// Writes mentions as JSON lines ordered by (paper_id, start).
pub fn write_mentions(path: &Path, mentions: &[ReferenceMention]) -> Result<()> {
    let mut sorted: Vec<&ReferenceMention> = mentions.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.paper_id, a.start, a.end, a.kind, &a.feature).cmp(&(&b.paper_id, b.start, b.end, b.kind, &b.feature))
    });
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for m in sorted {
        serde_json::to_writer(&mut out, m)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_mentions(path: &Path) -> Result<Vec<ReferenceMention>> {
    read_jsonl(path)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
