//! tf-idf weighting, cosine similarity and the year re-ranking heuristic.
//!
//! Each feature detected in a paper has a candidate pool: the registry
//! records whose titles contain the feature. The tf-idf model for the pool
//! is built over the pool's titles together with the sentences of the
//! paper, so terms that recur throughout the paper (a study year quoted in
//! every other sentence) receive little weight.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{group_by_feature, read_jsonl, ReferenceMention};
use crate::dictionary::FeatureKind;
use crate::error::{Error, Result};
use crate::matcher::contains;
use crate::registry::{DatasetRecord, ResourceType};
use crate::text::tokenize_with;

pub const DEFAULT_THRESHOLD: f64 = 0.1;

/// Lowercased terms of `text`; '.', '-', '&' and '/' survive inside terms.
pub fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    tokenize_with(text, |c| matches!(c, '.' | '-' | '&' | '/'))
        .into_iter()
        .map(|t| t.text.trim_end_matches('.').to_lowercase())
}

/// Document frequencies over a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfModel {
    doc_count: usize,
    doc_freq: HashMap<String, usize>,
}

impl TfidfModel {
    pub fn build<'a, I>(documents: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut doc_count = 0;
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            doc_count += 1;
            let distinct: BTreeSet<String> = terms(doc).collect();
            for t in distinct {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
        if doc_count == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(TfidfModel { doc_count, doc_freq })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    /// Number of documents holding `term`; zero for unseen terms.
    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    /// `ln(N/n)`; unseen terms count as occurring in a single document.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq(term).max(1);
        (self.doc_count as f64 / n as f64).ln()
    }
}

/// Builds a model from `(doc_id, text)` pairs.
pub fn build_tfidf<S: AsRef<str>, T: AsRef<str>>(documents: &[(S, T)]) -> Result<TfidfModel> {
    TfidfModel::build(documents.iter().map(|(_, text)| text.as_ref()))
}

/// Sparse non-negative term weights. Zero weights are not stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TermVector {
    weights: BTreeMap<String, f64>,
}

impl TermVector {
    pub fn from_weights<I, S>(weights: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        TermVector {
            weights: weights
                .into_iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|(t, w)| (t.into(), w))
                .collect(),
        }
    }

    pub fn get(&self, term: &str) -> f64 {
        self.weights.get(term).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        TermVector::from_weights(self.weights.iter().map(|(t, w)| (t.clone(), w * alpha)))
    }
}

/// Raw term frequency times idf.
pub fn vectorize(text: &str, model: &TfidfModel) -> TermVector {
    let mut tf: BTreeMap<String, f64> = BTreeMap::new();
    for t in terms(text) {
        *tf.entry(t).or_default() += 1.0;
    }
    TermVector::from_weights(tf.into_iter().map(|(t, f)| {
        let w = f * model.idf(&t);
        (t, w)
    }))
}

/// Cosine of the angle between two vectors; 0 when either is zero.
pub fn cosine_similarity(q: &TermVector, d: &TermVector) -> f64 {
    let (qn, dn) = (q.norm(), d.norm());
    if qn == 0.0 || dn == 0.0 {
        return 0.0;
    }
    let dot: f64 = q.iter().map(|(t, w)| w * d.get(t)).sum();
    (dot / (qn * dn)).clamp(0.0, 1.0)
}

/// A scored pool member before ranks are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub record_id: String,
    pub base_score: f64,
    pub years: BTreeSet<i32>,
    pub year_boosted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub record_id: String,
    pub base_score: f64,
    pub year_boosted: bool,
    pub final_rank: usize,
}

/// Moves candidates whose years meet the query's years in front of all
/// others. Both blocks keep their incoming order; with no query years the
/// list is returned as is.
pub fn year_adjust(candidates: Vec<ScoredCandidate>, query_years: &[i32]) -> Vec<ScoredCandidate> {
    if query_years.is_empty() {
        return candidates;
    }
    let (mut boosted, rest): (Vec<_>, Vec<_>) = candidates
        .into_iter()
        .map(|mut c| {
            c.year_boosted = query_years.iter().any(|y| c.years.contains(y));
            c
        })
        .partition(|c| c.year_boosted);
    boosted.extend(rest);
    boosted
}

/// Records whose title contains `feature` under the kind's match rule.
/// Non-dataset records are left out unless `include_all_types` is set.
pub fn candidate_pool<'r>(
    feature: &str,
    kind: FeatureKind,
    records: &'r [DatasetRecord],
    include_all_types: bool,
) -> Vec<&'r DatasetRecord> {
    records
        .par_iter()
        .filter(|r| include_all_types || r.resource_type == ResourceType::Dataset)
        .filter(|r| contains(&r.title, feature, kind.match_rule()))
        .collect()
}

/// A candidate pool with its title vectors computed once.
pub struct PoolRanker<'r> {
    model: &'r TfidfModel,
    pool: Vec<(&'r DatasetRecord, TermVector)>,
}

impl<'r> PoolRanker<'r> {
    pub fn new(pool: &[&'r DatasetRecord], model: &'r TfidfModel) -> Self {
        PoolRanker {
            model,
            pool: pool.iter().map(|r| (*r, vectorize(&r.title, model))).collect(),
        }
    }

    pub fn rank(&self, query: &str, query_years: &[i32], threshold: f64) -> Vec<RankedCandidate> {
        let q = vectorize(query, self.model);
        let mut scored: Vec<ScoredCandidate> = self
            .pool
            .iter()
            .map(|(r, v)| ScoredCandidate {
                record_id: r.id.clone(),
                base_score: cosine_similarity(&q, v),
                years: r.years(),
                year_boosted: false,
            })
            .filter(|c| c.base_score >= threshold)
            .collect();
        scored.sort_by(|a, b| {
            b.base_score
                .total_cmp(&a.base_score)
                .then_with(|| a.record_id.cmp(&b.record_id))
        });
        year_adjust(scored, query_years)
            .into_iter()
            .enumerate()
            .map(|(i, c)| RankedCandidate {
                record_id: c.record_id,
                base_score: c.base_score,
                year_boosted: c.year_boosted,
                final_rank: i + 1,
            })
            .collect()
    }
}

/// Scores a mention's query against each pool record, drops those under
/// `threshold`, applies the year heuristic and numbers the result from 1.
/// Order: year-boosted first, then by score, then by record id.
pub fn rank_candidates(
    mention: &ReferenceMention,
    pool: &[&DatasetRecord],
    model: &TfidfModel,
    threshold: f64,
) -> Vec<RankedCandidate> {
    PoolRanker::new(pool, model).rank(&mention.query, &mention.years_in_context, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankOptions {
    pub threshold: f64,
    pub include_all_types: bool,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            threshold: DEFAULT_THRESHOLD,
            include_all_types: false,
        }
    }
}

/// Ranked candidates for one mention, as written to the ranked file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub paper_id: String,
    pub mention: String,
    pub feature: String,
    pub candidates: Vec<RankedCandidate>,
}

/// Ranks all mentions of one paper. `paper_documents` are the paper's
/// sentences and join the pool titles in each feature's tf-idf corpus.
/// Output follows the order of `mentions`.
pub fn rank_paper(
    mentions: &[ReferenceMention],
    paper_documents: &[&str],
    records: &[DatasetRecord],
    options: &RankOptions,
) -> Result<Vec<RankedList>> {
    let groups = group_by_feature(mentions);
    let per_feature: Vec<Vec<(String, Vec<RankedCandidate>)>> = groups
        .into_par_iter()
        .map(|(feature, members)| -> Result<_> {
            let pool = candidate_pool(feature, members[0].kind, records, options.include_all_types);
            if pool.is_empty() {
                return Ok(members.iter().map(|m| (m.key(), Vec::new())).collect());
            }
            let model = TfidfModel::build(
                pool.iter()
                    .map(|r| r.title.as_str())
                    .chain(paper_documents.iter().copied()),
            )?;
            let ranker = PoolRanker::new(&pool, &model);
            Ok(members
                .iter()
                .map(|m| (m.key(), ranker.rank(&m.query, &m.years_in_context, options.threshold)))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut by_key: HashMap<String, Vec<RankedCandidate>> = per_feature.into_iter().flatten().collect();
    Ok(mentions
        .iter()
        .map(|m| RankedList {
            paper_id: m.paper_id.clone(),
            mention: m.key(),
            feature: m.feature.clone(),
            candidates: by_key.remove(&m.key()).unwrap_or_default(),
        })
        .collect())
}

pub fn write_ranked(path: &Path, lists: &[RankedList]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for l in lists {
        serde_json::to_writer(&mut out, l)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ranked(path: &Path) -> Result<Vec<RankedList>> {
    read_jsonl(path)
}
