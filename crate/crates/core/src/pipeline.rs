//! Batch run over a set of papers: detect, rank and open review sessions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_references, write_mentions, PaperText, ReferenceMention};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::rank::{rank_paper, write_ranked, RankOptions, RankedList, DEFAULT_THRESHOLD};
use crate::registry::DatasetRecord;
use crate::review::{build_session, Caps, ReviewSession, SessionStore, Workflow};
use crate::text::split_sentences;

fn default_workflows() -> Vec<Workflow> {
    vec![Workflow::PerReference]
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

/// Settings shared by the command-line verbs; every field has a default
/// so a configuration file only names what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub records: PathBuf,
    pub dictionary: PathBuf,
    /// Directory of word lists; the bundled lists are used when unset.
    pub wordlists: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
    pub threshold: f64,
    pub caps: Caps,
    pub workflows: Vec<Workflow>,
    pub include_all_types: bool,
    pub listen: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            records: PathBuf::from("records.jsonl"),
            dictionary: PathBuf::from("dictionary.tsv"),
            wordlists: None,
            seeds: None,
            blacklist: None,
            threshold: DEFAULT_THRESHOLD,
            caps: Caps::default(),
            workflows: default_workflows(),
            include_all_types: false,
            listen: default_listen(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.caps.per_reference == 0 || self.caps.per_feature == 0 {
            return Err(Error::Config("candidate caps must be at least 1".into()));
        }
        if self.workflows.is_empty() {
            return Err(Error::Config("no review workflow configured".into()));
        }
        Ok(())
    }

    pub fn rank_options(&self) -> RankOptions {
        RankOptions {
            threshold: self.threshold,
            include_all_types: self.include_all_types,
        }
    }
}

/// The sentences of a paper, used as the paper's share of the tf-idf
/// corpus.
pub fn paper_documents(text: &str) -> Vec<&str> {
    split_sentences(text).iter().map(|s| &text[s.range()]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaperOutput {
    pub paper_id: String,
    pub mentions: Vec<ReferenceMention>,
    pub ranked: Vec<RankedList>,
    pub sessions: Vec<ReviewSession>,
}

/// Detection, ranking and session construction for one paper, in memory.
pub fn process_paper(
    paper: &PaperText,
    records: &[DatasetRecord],
    dictionary: &Dictionary,
    config: &PipelineConfig,
) -> Result<PaperOutput> {
    let mentions = detect_references(paper, dictionary);
    let ranked = rank_paper(
        &mentions,
        &paper_documents(&paper.text),
        records,
        &config.rank_options(),
    )?;
    let sessions = config
        .workflows
        .iter()
        .map(|&w| build_session(&paper.paper_id, w, &mentions, &ranked, records, config.caps))
        .collect();
    Ok(PaperOutput {
        paper_id: paper.paper_id.clone(),
        mentions,
        ranked,
        sessions,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperFailure {
    pub paper: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub items: usize,
    /// Set when the paper yielded no mentions.
    pub empty: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub papers: usize,
    pub mentions: usize,
    pub sessions: Vec<SessionInfo>,
    pub failures: Vec<PaperFailure>,
}

impl PipelineSummary {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

fn paper_id_of(path: &Path) -> Option<String> {
    path.file_stem().map(|s| s.to_string_lossy().into_owned())
}

/// Runs every paper through detection, ranking and session creation and
/// writes `mentions.jsonl`, `ranked.jsonl`, `sessions/` and
/// `summary.json` under `out_dir`.
///
/// Papers are processed in parallel but written in paper-id order, so
/// identical inputs give byte-identical files. A paper that fails is
/// recorded in the summary and the rest of the batch continues.
pub fn run_pipeline(
    config: &PipelineConfig,
    records: &[DatasetRecord],
    dictionary: &Dictionary,
    papers: &[PathBuf],
    out_dir: &Path,
) -> Result<PipelineSummary> {
    config.validate()?;
    let mut by_id: BTreeMap<String, &Path> = BTreeMap::new();
    for path in papers {
        let id = paper_id_of(path).ok_or_else(|| Error::Config(format!("no file name in {}", path.display())))?;
        if let Some(prev) = by_id.insert(id.clone(), path) {
            return Err(Error::Config(format!(
                "papers {} and {} share the id {id:?}",
                prev.display(),
                path.display()
            )));
        }
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let store = SessionStore::open(out_dir.join("sessions"))?;

    let outcomes: Vec<(String, Result<PaperOutput>)> = by_id
        .par_iter()
        .map(|(id, path)| {
            let out = PaperText::load(path).and_then(|paper| process_paper(&paper, records, dictionary, config));
            (id.clone(), out)
        })
        .collect();

    let mut summary = PipelineSummary {
        papers: by_id.len(),
        ..Default::default()
    };
    let mut mentions = Vec::new();
    let mut ranked = Vec::new();
    for (id, outcome) in outcomes {
        let written = outcome.and_then(|out| {
            for s in &out.sessions {
                store.create(s)?;
            }
            Ok(out)
        });
        match written {
            Ok(out) => {
                summary.sessions.extend(out.sessions.iter().map(|s| SessionInfo {
                    session_id: s.session_id.clone(),
                    items: s.items.len(),
                    empty: s.is_empty(),
                }));
                mentions.extend(out.mentions);
                ranked.extend(out.ranked);
            }
            Err(e) => {
                log::error!("{id}: {e}");
                summary.failures.push(PaperFailure {
                    paper: id,
                    error: e.to_string(),
                });
            }
        }
    }
    summary.mentions = mentions.len();

    write_mentions(&out_dir.join("mentions.jsonl"), &mentions)?;
    write_ranked(&out_dir.join("ranked.jsonl"), &ranked)?;
    let summary_path = out_dir.join("summary.json");
    let mut body = serde_json::to_string_pretty(&summary)?;
    body.push('\n');
    fs::write(&summary_path, body).map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}
