//! Two-phase evaluation against an expert gold standard.
//!
//! Detection compares the features found in each paper with the gold
//! references. Matching then looks only at the detection true positives
//! and asks whether the system's suggestions hit one of the acceptable
//! records. A wrong suggestion is at once a missed match and a false one,
//! so the matching phase counts fp = fn.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::ReferenceMention;
use crate::error::{Error, Result};
use crate::rank::RankedList;
use crate::review::LinksDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Detection,
    Matching,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Detection => "detection",
            Phase::Matching => "matching",
        })
    }
}

/// 2pr/(p+r), or 0 when both are 0.
pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub phase: Phase,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl EvalReport {
    pub fn from_counts(phase: Phase, tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        EvalReport {
            phase,
            tp,
            fp,
            fn_,
            precision,
            recall,
            f_measure: f_measure(precision, recall),
        }
    }
}

/// Plain-text table of reports, rounded for display only.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = format!(
        "{:<10} {:>5} {:>5} {:>5} {:>9} {:>9} {:>9}\n",
        "phase", "tp", "fp", "fn", "precision", "recall", "f"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<10} {:>5} {:>5} {:>5} {:>9.4} {:>9.4} {:>9.4}\n",
            r.phase.to_string(),
            r.tp,
            r.fp,
            r.fn_,
            r.precision,
            r.recall,
            r.f_measure
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldReference {
    pub feature: String,
    /// Records that count as a correct match; empty when the registry holds
    /// none.
    pub acceptable: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<(usize, usize)>,
}

/// Gold references per paper, in file order.
///
/// File format: a `[paper_id]` header opens each paper block; every
/// following non-comment line is
/// `feature<TAB>id,id,...[<TAB>start-end]`, where the id list may be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStandard {
    pub papers: BTreeMap<String, Vec<GoldReference>>,
}

impl GoldStandard {
    pub fn parse(content: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut papers: BTreeMap<String, Vec<GoldReference>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (n, raw) in content.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            if let Some(id) = line.trim().strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let id = id.trim();
                if id.is_empty() {
                    return Err(err(n + 1, "empty paper id".into()));
                }
                papers.entry(id.to_string()).or_default();
                current = Some(id.to_string());
                continue;
            }
            let paper = current
                .as_ref()
                .ok_or_else(|| err(n + 1, "reference before the first [paper] header".into()))?;
            let mut fields = line.split('\t');
            let feature = fields.next().unwrap_or_default().trim();
            if feature.is_empty() {
                return Err(err(n + 1, "empty feature".into()));
            }
            let acceptable = fields
                .next()
                .unwrap_or_default()
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            let offsets = match fields.next().map(str::trim).filter(|s| !s.is_empty()) {
                None => None,
                Some(span) => {
                    let parsed = span
                        .split_once('-')
                        .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                        .filter(|(a, b)| a < b);
                    Some(parsed.ok_or_else(|| err(n + 1, format!("bad offsets {span:?}")))?)
                }
            };
            if fields.next().is_some() {
                return Err(err(n + 1, "too many fields".into()));
            }
            papers.get_mut(paper).expect("header seen").push(GoldReference {
                feature: feature.to_string(),
                acceptable,
                offsets,
            });
        }
        Ok(GoldStandard { papers })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (paper, refs) in &self.papers {
            out.push_str(&format!("[{paper}]\n"));
            for r in refs {
                let ids: Vec<&str> = r.acceptable.iter().map(String::as_str).collect();
                out.push_str(&r.feature);
                out.push('\t');
                out.push_str(&ids.join(","));
                if let Some((s, e)) = r.offsets {
                    out.push_str(&format!("\t{s}-{e}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn reference_count(&self) -> usize {
        self.papers.values().map(Vec::len).sum()
    }
}

/// A detection true positive carried into the matching phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruePositive {
    pub paper_id: String,
    pub mention: String,
    pub feature: String,
    pub acceptable: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub report: EvalReport,
    pub true_positives: Vec<TruePositive>,
}

impl DetectionOutcome {
    /// True positives whose gold reference has no acceptable record; the
    /// matching phase leaves them out.
    pub fn unmatchable(&self) -> usize {
        self.true_positives.iter().filter(|t| t.acceptable.is_empty()).count()
    }
}

struct PaperCounts {
    tp: usize,
    fp: usize,
    fn_: usize,
    items: Vec<TruePositive>,
}

fn align_paper(
    paper: &str,
    system: &[&ReferenceMention],
    gold: &[GoldReference],
    offset_strict: bool,
) -> Result<PaperCounts> {
    let mut sys_by_feature: BTreeMap<&str, Vec<&ReferenceMention>> = BTreeMap::new();
    for m in system {
        sys_by_feature.entry(m.feature.as_str()).or_default().push(m);
    }
    let mut gold_by_feature: BTreeMap<&str, Vec<&GoldReference>> = BTreeMap::new();
    for g in gold {
        gold_by_feature.entry(g.feature.as_str()).or_default().push(g);
    }

    let mut items = Vec::new();
    for (feature, golds) in &gold_by_feature {
        let mut sys = sys_by_feature.get(feature).cloned().unwrap_or_default();
        sys.sort_by_key(|m| (m.start, m.end));
        if offset_strict {
            let mut used = vec![false; sys.len()];
            for g in golds {
                let (s, e) = g.offsets.ok_or_else(|| {
                    Error::Config(format!(
                        "offset-strict evaluation needs offsets for {feature:?} in {paper}"
                    ))
                })?;
                if let Some(i) = (0..sys.len()).find(|&i| !used[i] && sys[i].start == s && sys[i].end == e) {
                    used[i] = true;
                    items.push(tp_item(paper, sys[i], g));
                }
            }
        } else {
            items.extend(sys.iter().zip(golds).map(|(m, g)| tp_item(paper, m, g)));
        }
    }
    let tp = items.len();
    Ok(PaperCounts {
        tp,
        fp: system.len() - tp,
        fn_: gold.len() - tp,
        items,
    })
}

fn tp_item(paper: &str, m: &ReferenceMention, g: &GoldReference) -> TruePositive {
    TruePositive {
        paper_id: paper.to_string(),
        mention: m.key(),
        feature: m.feature.clone(),
        acceptable: g.acceptable.clone(),
    }
}

/// Counts per (paper, feature) occurrence: the system and gold
/// occurrences of a feature in a paper are paired in document and file
/// order, so `tp = min(system, gold)` per pair. With `offset_strict`, a
/// pair also needs identical offsets.
pub fn evaluate_detection(
    system: &[ReferenceMention],
    gold: &GoldStandard,
    offset_strict: bool,
) -> Result<DetectionOutcome> {
    let mut by_paper: BTreeMap<&str, Vec<&ReferenceMention>> = BTreeMap::new();
    for m in system {
        if !gold.papers.contains_key(&m.paper_id) {
            return Err(Error::CorpusMismatch(m.paper_id.clone()));
        }
        by_paper.entry(m.paper_id.as_str()).or_default().push(m);
    }
    let per_paper: Vec<PaperCounts> = gold
        .papers
        .par_iter()
        .map(|(paper, refs)| {
            let sys = by_paper.get(paper.as_str()).map(Vec::as_slice).unwrap_or_default();
            align_paper(paper, sys, refs, offset_strict)
        })
        .collect::<Result<_>>()?;

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut true_positives = Vec::new();
    for c in per_paper {
        tp += c.tp;
        fp += c.fp;
        fn_ += c.fn_;
        true_positives.extend(c.items);
    }
    Ok(DetectionOutcome {
        report: EvalReport::from_counts(Phase::Detection, tp, fp, fn_),
        true_positives,
    })
}

/// The records the system offers for one detected mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemMatch {
    pub paper_id: String,
    pub mention: String,
    pub suggestions: BTreeSet<String>,
}

/// Top-`k` ranked candidates of each mention.
pub fn suggestions_from_ranked(ranked: &[RankedList], k: usize) -> Vec<SystemMatch> {
    ranked
        .iter()
        .map(|l| SystemMatch {
            paper_id: l.paper_id.clone(),
            mention: l.mention.clone(),
            suggestions: l.candidates.iter().take(k).map(|c| c.record_id.clone()).collect(),
        })
        .collect()
}

/// The expert's chosen record for each linked mention.
pub fn suggestions_from_links(documents: &[LinksDocument]) -> Vec<SystemMatch> {
    documents
        .iter()
        .flat_map(|d| &d.links)
        .map(|l| SystemMatch {
            paper_id: l.paper_id.clone(),
            mention: format!("{}-{}:{}", l.start, l.end, l.feature),
            suggestions: BTreeSet::from([l.record_id.clone()]),
        })
        .collect()
}

fn true_positive_keys(detection: &DetectionOutcome) -> BTreeSet<(&str, &str)> {
    detection
        .true_positives
        .iter()
        .map(|t| (t.paper_id.as_str(), t.mention.as_str()))
        .collect()
}

/// Drops entries for mentions that are not detection true positives, e.g.
/// the ranked lists of detection false positives.
pub fn restrict_to_true_positives(system: Vec<SystemMatch>, detection: &DetectionOutcome) -> Vec<SystemMatch> {
    let known = true_positive_keys(detection);
    system
        .into_iter()
        .filter(|s| known.contains(&(s.paper_id.as_str(), s.mention.as_str())))
        .collect()
}

/// Scores the suggestions for the detection true positives. Items with an
/// empty acceptable set are left out; a true positive without a system
/// entry counts as a miss.
pub fn evaluate_matching(system: &[SystemMatch], detection: &DetectionOutcome) -> Result<EvalReport> {
    let known = true_positive_keys(detection);
    let mut suggestions: HashMap<(&str, &str), &BTreeSet<String>> = HashMap::new();
    for s in system {
        let key = (s.paper_id.as_str(), s.mention.as_str());
        if !known.contains(&key) {
            return Err(Error::NotATruePositive {
                paper_id: s.paper_id.clone(),
                mention: s.mention.clone(),
            });
        }
        suggestions.insert(key, &s.suggestions);
    }
    let (mut tp, mut missed) = (0, 0);
    for t in detection.true_positives.iter().filter(|t| !t.acceptable.is_empty()) {
        let hit = suggestions
            .get(&(t.paper_id.as_str(), t.mention.as_str()))
            .is_some_and(|s| !s.is_disjoint(&t.acceptable));
        if hit {
            tp += 1;
        } else {
            missed += 1;
        }
    }
    Ok(EvalReport::from_counts(Phase::Matching, tp, missed, missed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::FeatureKind;
    use approx::assert_abs_diff_eq;

    fn m(paper: &str, feature: &str, start: usize) -> ReferenceMention {
        ReferenceMention {
            paper_id: paper.into(),
            feature: feature.into(),
            kind: FeatureKind::Abbreviation,
            start,
            end: start + feature.len(),
            sentence_index: 0,
            segment_start: start,
            segment_end: start + feature.len(),
            query: feature.into(),
            years_in_context: vec![],
        }
    }

    const GOLD: &str = "# two papers\n[p1]\nALLBUS\t10.1/a\t0-6\nALLBUS\t10.1/b,10.1/c\nEVS\t\n\n[p2]\nPIAAC\t10.1/p\n";

    fn gold() -> GoldStandard {
        GoldStandard::parse(GOLD, Path::new("gold.txt")).unwrap()
    }

    #[test]
    fn gold_file_round_trip() {
        let g = gold();
        assert_eq!(g.reference_count(), 4);
        assert_eq!(g.papers["p1"][1].acceptable.len(), 2);
        assert!(g.papers["p1"][2].acceptable.is_empty());
        assert_eq!(g.papers["p1"][0].offsets, Some((0, 6)));
        assert_eq!(GoldStandard::parse(&g.to_text(), Path::new("x")).unwrap(), g);
    }

    #[test]
    fn gold_parse_errors_carry_line_numbers() {
        let bad = "[p]\nEVS\tx\t9-3\n";
        match GoldStandard::parse(bad, Path::new("g")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(GoldStandard::parse("EVS\tx\n", Path::new("g")).is_err());
    }

    #[test]
    fn f_measure_examples() {
        assert_abs_diff_eq!(f_measure(0.83, 0.83), 0.83, epsilon = 1e-12);
        assert_eq!(f_measure(1.0, 0.0), 0.0);
        assert_eq!(f_measure(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(f_measure(0.91, 0.77), 0.8342, epsilon = 5e-4);
    }

    #[test]
    fn counts_from_known_totals() {
        let r = EvalReport::from_counts(Phase::Detection, 10, 1, 3);
        assert_abs_diff_eq!(r.precision, 10.0 / 11.0);
        assert_abs_diff_eq!(r.recall, 10.0 / 13.0);
        let empty = EvalReport::from_counts(Phase::Detection, 0, 0, 0);
        assert_eq!((empty.precision, empty.recall, empty.f_measure), (0.0, 0.0, 0.0));
    }

    #[test]
    fn detection_multiset_alignment() {
        let sys = [
            m("p1", "ALLBUS", 0),
            m("p1", "ALLBUS", 40),
            m("p1", "ALLBUS", 90),
            m("p1", "NYPD", 5),
        ];
        let out = evaluate_detection(&sys, &gold(), false).unwrap();
        assert_eq!((out.report.tp, out.report.fp, out.report.fn_), (2, 2, 2));
        assert_eq!(out.report.tp + out.report.fn_, gold().reference_count());
        assert_eq!(out.report.tp + out.report.fp, sys.len());
        assert_eq!(out.true_positives[0].mention, "0-6:ALLBUS");
        assert_eq!(out.true_positives[1].mention, "40-46:ALLBUS");
    }

    #[test]
    fn offset_strict_needs_offsets() {
        let sys = [m("p1", "ALLBUS", 0)];
        assert!(matches!(evaluate_detection(&sys, &gold(), true), Err(Error::Config(_))));
        let only_offsets = GoldStandard::parse("[p1]\nALLBUS\ta\t0-6\nALLBUS\tb\t10-16\n", Path::new("g")).unwrap();
        let sys = [m("p1", "ALLBUS", 0), m("p1", "ALLBUS", 20)];
        let out = evaluate_detection(&sys, &only_offsets, true).unwrap();
        assert_eq!((out.report.tp, out.report.fp, out.report.fn_), (1, 1, 1));
    }

    #[test]
    fn unknown_paper_is_a_corpus_mismatch() {
        assert!(matches!(
            evaluate_detection(&[m("p9", "EVS", 0)], &gold(), false),
            Err(Error::CorpusMismatch(p)) if p == "p9"
        ));
    }

    fn tp(paper: &str, mention: &str, ok: &[&str]) -> TruePositive {
        TruePositive {
            paper_id: paper.into(),
            mention: mention.into(),
            feature: "F".into(),
            acceptable: ok.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn sm(paper: &str, mention: &str, ids: &[&str]) -> SystemMatch {
        SystemMatch {
            paper_id: paper.into(),
            mention: mention.into(),
            suggestions: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn matching_ten_items_two_wrong() {
        let tps: Vec<_> = (0..10).map(|i| tp("p", &format!("k{i}"), &["good"])).collect();
        let detection = DetectionOutcome {
            report: EvalReport::from_counts(Phase::Detection, 10, 0, 0),
            true_positives: tps,
        };
        let system: Vec<_> = (0..10)
            .map(|i| sm("p", &format!("k{i}"), if i < 8 { &["good", "x"] } else { &["bad"] }))
            .collect();
        let r = evaluate_matching(&system, &detection).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (8, 2, 2));
        assert_abs_diff_eq!(r.precision, 0.8);
        assert_abs_diff_eq!(r.recall, 0.8);
    }

    #[test]
    fn matching_rules() {
        let detection = DetectionOutcome {
            report: EvalReport::from_counts(Phase::Detection, 3, 0, 0),
            true_positives: vec![tp("p", "a", &["x"]), tp("p", "b", &["y"]), tp("p", "c", &[])],
        };
        // "b" has no entry and counts as missed; "c" is unmatchable
        let r = evaluate_matching(&[sm("p", "a", &["x"])], &detection).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
        assert_eq!(detection.unmatchable(), 1);
        let stray = vec![sm("p", "a", &["x"]), sm("p", "zzz", &["x"])];
        assert!(matches!(
            evaluate_matching(&stray, &detection),
            Err(Error::NotATruePositive { .. })
        ));
        assert_eq!(restrict_to_true_positives(stray, &detection).len(), 1);
    }
}
