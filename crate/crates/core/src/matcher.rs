//! Surface matching on token boundaries.
//!
//! Abbreviations match case-sensitively, phrases case-insensitively. A
//! match is only accepted when it does not extend a letter/digit run on
//! either side, so "DAWN" does not match inside "DAWNING".

use std::ops::Range;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchRule {
    CaseSensitive,
    CaseInsensitive,
}

/// True when `range` neither starts nor ends inside a letter/digit run.
pub fn on_token_boundary(text: &str, range: &Range<usize>) -> bool {
    let needle = &text[range.clone()];
    let first_alnum = needle.chars().next().is_some_and(char::is_alphanumeric);
    let last_alnum = needle.chars().next_back().is_some_and(char::is_alphanumeric);
    let before_ok = !first_alnum
        || text[..range.start]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric());
    let after_ok = !last_alnum || text[range.end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
    before_ok && after_ok
}

/// Lowercased copy of a text with a map back to the original byte offsets.
struct Folded {
    text: String,
    /// `origin[i]` is the original offset of the character that produced
    /// folded byte `i`; one extra entry maps the end of the text.
    origin: Vec<usize>,
}

impl Folded {
    fn new(source: &str) -> Self {
        let mut text = String::with_capacity(source.len());
        let mut origin = Vec::with_capacity(source.len() + 1);
        for (i, c) in source.char_indices() {
            for lower in c.to_lowercase() {
                let before = text.len();
                text.push(lower);
                origin.extend(std::iter::repeat_n(i, text.len() - before));
            }
        }
        origin.push(source.len());
        Folded { text, origin }
    }

    /// Maps a folded range back, rejecting ranges that cut through the
    /// expansion of a single original character.
    fn original(&self, range: Range<usize>) -> Option<Range<usize>> {
        let starts_clean = range.start == 0 || self.origin[range.start - 1] != self.origin[range.start];
        let ends_clean = range.end == self.text.len() || self.origin[range.end - 1] != self.origin[range.end];
        (starts_clean && ends_clean).then(|| self.origin[range.start]..self.origin[range.end])
    }
}

fn fold(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

/// All token-boundary occurrences of `needle` in `haystack`, in order.
pub fn find_occurrences(haystack: &str, needle: &str, rule: MatchRule) -> Vec<Range<usize>> {
    if needle.is_empty() {
        return Vec::new();
    }
    match rule {
        MatchRule::CaseSensitive => haystack
            .match_indices(needle)
            .map(|(i, m)| i..i + m.len())
            .filter(|r| on_token_boundary(haystack, r))
            .collect(),
        MatchRule::CaseInsensitive => {
            let folded = Folded::new(haystack);
            let needle = fold(needle);
            folded
                .text
                .match_indices(needle.as_str())
                .filter_map(|(i, m)| folded.original(i..i + m.len()))
                .filter(|r| on_token_boundary(haystack, r))
                .collect()
        }
    }
}

pub fn contains(haystack: &str, needle: &str, rule: MatchRule) -> bool {
    !find_occurrences(haystack, needle, rule).is_empty()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceMatch {
    /// Index of the surface in the order given to [`SurfaceMatcher::new`].
    pub surface: usize,
    pub range: Range<usize>,
}

/// Multi-pattern matcher over a fixed set of surfaces.
pub struct SurfaceMatcher {
    exact: Option<AhoCorasick>,
    exact_ids: Vec<usize>,
    folded: Option<AhoCorasick>,
    folded_ids: Vec<usize>,
}

impl SurfaceMatcher {
    pub fn new<'a, I>(surfaces: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, MatchRule)>,
    {
        let mut exact = Vec::new();
        let mut exact_ids = Vec::new();
        let mut folded = Vec::new();
        let mut folded_ids = Vec::new();
        for (id, (surface, rule)) in surfaces.into_iter().enumerate() {
            if surface.is_empty() {
                continue;
            }
            match rule {
                MatchRule::CaseSensitive => {
                    exact.push(surface.to_string());
                    exact_ids.push(id);
                }
                MatchRule::CaseInsensitive => {
                    folded.push(fold(surface));
                    folded_ids.push(id);
                }
            }
        }
        let build = |patterns: &[String]| {
            (!patterns.is_empty()).then(|| {
                AhoCorasickBuilder::new()
                    .match_kind(MatchKind::Standard)
                    .build(patterns)
                    .expect("automaton over plain string patterns")
            })
        };
        SurfaceMatcher {
            exact: build(&exact),
            exact_ids,
            folded: build(&folded),
            folded_ids,
        }
    }

    /// Every boundary-respecting match, sorted by (start, end, surface).
    pub fn find_all(&self, text: &str) -> Vec<SurfaceMatch> {
        let mut out = Vec::new();
        if let Some(ac) = &self.exact {
            for m in ac.find_overlapping_iter(text) {
                let range = m.start()..m.end();
                if on_token_boundary(text, &range) {
                    out.push(SurfaceMatch {
                        surface: self.exact_ids[m.pattern().as_usize()],
                        range,
                    });
                }
            }
        }
        if let Some(ac) = &self.folded {
            let folded = Folded::new(text);
            for m in ac.find_overlapping_iter(&folded.text) {
                let Some(range) = folded.original(m.start()..m.end()) else {
                    continue;
                };
                if on_token_boundary(text, &range) {
                    out.push(SurfaceMatch {
                        surface: self.folded_ids[m.pattern().as_usize()],
                        range,
                    });
                }
            }
        }
        out.sort_by(|a, b| (a.range.start, a.range.end, a.surface).cmp(&(b.range.start, b.range.end, b.surface)));
        out
    }
}
