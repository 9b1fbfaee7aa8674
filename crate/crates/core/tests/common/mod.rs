//! Reference implementations shared by the oracle tests and the
//! acceptance run.

use std::collections::BTreeMap;

use dataref_core::rank::terms;
use dataref_core::text::years_in;
use dataref_core::{DatasetRecord, FeatureKind, ReferenceMention, TfidfModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Digit-table encoder for 1..=3999.
pub fn to_roman(mut n: u32) -> String {
    const TABLE: [(u32, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for (value, digits) in TABLE {
        while n >= value {
            out.push_str(digits);
            n -= value;
        }
    }
    out
}

const WORDS: &[&str] = &[
    "allbus",
    "ALLBUS",
    "study",
    "survey",
    "german",
    "social",
    "2000",
    "2004",
    "2014",
    "wave",
    "panel",
    "cumulation",
    "compact",
    "1980-2012",
    "data",
];

pub struct Oracle<'a> {
    pub docs: Vec<&'a str>,
}

impl Oracle<'_> {
    fn idf(&self, term: &str) -> f64 {
        let n = self.docs.iter().filter(|d| terms(d).any(|t| t == term)).count().max(1);
        (self.docs.len() as f64 / n as f64).ln()
    }

    fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut v = BTreeMap::new();
        for t in terms(text) {
            *v.entry(t).or_insert(0.0) += 1.0;
        }
        v.into_iter()
            .map(|(t, f)| {
                let w = f * self.idf(&t);
                (t, w)
            })
            .filter(|(_, w)| *w > 0.0)
            .collect()
    }

    fn cosine(&self, a: &str, b: &str) -> f64 {
        let (va, vb) = (self.vector(a), self.vector(b));
        let norm = |v: &BTreeMap<String, f64>| v.values().map(|w| w * w).sum::<f64>().sqrt();
        let (na, nb) = (norm(&va), norm(&vb));
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = va.iter().map(|(t, w)| w * vb.get(t).copied().unwrap_or(0.0)).sum();
        (dot / (na * nb)).clamp(0.0, 1.0)
    }

    pub fn rank(&self, query: &str, pool: &[DatasetRecord], threshold: f64) -> Vec<(String, bool)> {
        let qyears = years_in(query);
        let mut scored: Vec<(bool, f64, String)> = pool
            .iter()
            .map(|r| {
                let boosted = years_in(&r.title).iter().any(|y| qyears.contains(y));
                (boosted, self.cosine(query, &r.title), r.id.clone())
            })
            .filter(|(_, s, _)| *s >= threshold)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
        scored.into_iter().map(|(b, _, id)| (id, b)).collect()
    }
}

pub fn random_text(rng: &mut ChaCha8Rng, len: std::ops::Range<usize>) -> String {
    let n = rng.gen_range(len);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Ranks 100 random pools of at most 20 titles with both the library and
/// the oracle; returns the first disagreement.
pub fn compare_random_pools(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pool_no in 0..100 {
        let size = rng.gen_range(1..=20);
        let pool: Vec<DatasetRecord> = (0..size)
            .map(|i| {
                let title = format!("ALLBUS {}", random_text(&mut rng, 0..6));
                // duplicate titles force ties that only the id can break
                let title = if i > 0 && rng.gen_bool(0.15) {
                    format!("ALLBUS {}", WORDS[i % 3])
                } else {
                    title
                };
                DatasetRecord::new(format!("r{:02}", rng.gen_range(0..100) * 100 + i), title)
            })
            .collect();
        let sentences: Vec<String> = (0..rng.gen_range(0..6)).map(|_| random_text(&mut rng, 1..8)).collect();
        let query = format!("we use ALLBUS {}", random_text(&mut rng, 0..5));
        let threshold = [0.0, 0.1, 0.3][pool_no % 3];

        let docs: Vec<&str> = pool
            .iter()
            .map(|r| r.title.as_str())
            .chain(sentences.iter().map(String::as_str))
            .collect();
        let model = TfidfModel::build(docs.iter().copied()).unwrap();
        let mention = ReferenceMention {
            paper_id: "p".into(),
            feature: "ALLBUS".into(),
            kind: FeatureKind::Abbreviation,
            start: 7,
            end: 13,
            sentence_index: 0,
            segment_start: 0,
            segment_end: query.len(),
            query: query.clone(),
            years_in_context: years_in(&query),
        };
        let refs: Vec<&DatasetRecord> = pool.iter().collect();
        let got: Vec<(String, bool)> = dataref_core::rank::rank_candidates(&mention, &refs, &model, threshold)
            .into_iter()
            .map(|c| (c.record_id, c.year_boosted))
            .collect();
        let expected = Oracle { docs }.rank(&query, &pool, threshold);
        if got != expected {
            return Err(format!(
                "pool {pool_no}, query {query:?}: got {got:?}, oracle {expected:?}"
            ));
        }
    }
    Ok(100)
}
