//! Seeded synthetic corpora for tests, benchmarks and the acceptance run.
//!
//! A small registry of yearly study waves, a dictionary naming the study
//! families, and papers of filler prose with known references whose gold
//! record is the wave of the cited year.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detect::{PaperText, ReferenceMention};
use crate::dictionary::{Dictionary, DictionaryEntry, FeatureKind};
use crate::error::{Error, Result};
use crate::eval::{GoldReference, GoldStandard, SystemMatch};
use crate::registry::{write_records, DatasetRecord};

/// (surface, kind, title prefix)
pub const FAMILIES: &[(&str, FeatureKind, &str)] = &[
    (
        "ALLBUS",
        FeatureKind::Abbreviation,
        "German General Social Survey ALLBUS",
    ),
    ("EVS", FeatureKind::Abbreviation, "European Values Study EVS"),
    (
        "PIAAC",
        FeatureKind::Abbreviation,
        "Programme for the International Assessment of Adult Competencies PIAAC",
    ),
    ("SOEP", FeatureKind::Abbreviation, "Socio-Economic Panel SOEP"),
    (
        "ISSP",
        FeatureKind::Abbreviation,
        "International Social Survey Programme ISSP",
    ),
    ("Exit Poll", FeatureKind::Phrase, "Exit Poll Federal Election"),
];

pub const WAVE_YEARS: std::ops::RangeInclusive<i32> = 2000..=2018;

const FILLER: &[&str] = &[
    "We estimate a linear model with robust standard errors.",
    "Table two reports the coefficients for all specifications.",
    "The sample includes respondents aged eighteen and older.",
    "Education shows a strong association with income.",
    "Weights are applied throughout the analysis.",
    "Missing values were imputed with chained equations.",
    "The effect remains stable across subgroups.",
    "Our results confirm earlier findings on social mobility.",
    "Trust in institutions declined over the observed period.",
    "Figure one plots the predicted probabilities.",
    "These patterns hold for men and women alike.",
    "Further research should address regional differences.",
];

const LEADS: &[&str] = &[
    "We draw on data from the",
    "Our analysis uses the",
    "Respondents in the",
    "Estimates are based on the",
    "Comparable items appear in the",
];

const TAILS: &[&str] = &[
    "for the main models",
    "as a robustness check",
    "with identical coding",
    "which covers the adult population",
    "to measure attitudes",
];

pub fn record_id(family: usize, year: i32) -> String {
    format!("10.9999/synth.{family}.{year}")
}

/// One record per family and wave year, every second year.
pub fn registry() -> Vec<DatasetRecord> {
    FAMILIES
        .iter()
        .enumerate()
        .flat_map(|(f, (_, _, prefix))| {
            WAVE_YEARS
                .step_by(2)
                .map(move |y| DatasetRecord::new(record_id(f, y), format!("{prefix} {y}")))
        })
        .collect()
}

pub fn dictionary() -> Dictionary {
    Dictionary::new(
        FAMILIES
            .iter()
            .enumerate()
            .map(|(f, (surface, kind, _))| DictionaryEntry {
                surface: surface.to_string(),
                kind: *kind,
                source_title_ids: WAVE_YEARS.step_by(2).map(|y| record_id(f, y)).collect(),
                blacklisted: false,
            })
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<DatasetRecord>,
    pub dictionary: Dictionary,
    pub papers: Vec<PaperText>,
    pub gold: GoldStandard,
}

fn paper_text(rng: &mut ChaCha8Rng, refs: &[usize]) -> (String, Vec<GoldReference>) {
    let mut sentences: Vec<Option<usize>> = refs.iter().map(|&f| Some(f)).collect();
    sentences.extend((0..refs.len() + 3).map(|_| None));
    sentences.shuffle(rng);

    let mut text = String::new();
    let mut gold = Vec::new();
    for (i, slot) in sentences.into_iter().enumerate() {
        if i > 0 {
            text.push_str(if i % 4 == 0 { "\n\n" } else { " " });
        }
        match slot {
            None => text.push_str(FILLER.choose(rng).expect("filler")),
            Some(f) => {
                let (surface, kind, _) = FAMILIES[f];
                let year = WAVE_YEARS.start() + 2 * rng.gen_range(0..10);
                text.push_str(LEADS.choose(rng).expect("lead"));
                text.push(' ');
                let start = text.len();
                match kind {
                    // phrases are matched case-insensitively; cite them in lower case
                    FeatureKind::Phrase => text.push_str(&surface.to_lowercase()),
                    FeatureKind::Abbreviation => text.push_str(surface),
                }
                let end = text.len();
                text.push_str(&format!(" {year} {}.", TAILS.choose(rng).expect("tail")));
                gold.push(GoldReference {
                    feature: surface.to_string(),
                    acceptable: BTreeSet::from([record_id(f, year)]),
                    offsets: Some((start, end)),
                });
            }
        }
    }
    text.push('\n');
    (text, gold)
}

/// `refs_per_paper[i]` references in paper `i`, drawn from all families.
pub fn corpus(seed: u64, refs_per_paper: &[usize]) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut papers = Vec::new();
    let mut gold = BTreeMap::new();
    for (i, &n) in refs_per_paper.iter().enumerate() {
        let refs: Vec<usize> = (0..n).map(|_| rng.gen_range(0..FAMILIES.len())).collect();
        let (text, refs) = paper_text(&mut rng, &refs);
        let id = format!("paper{i:02}");
        papers.push(PaperText::new(&id, text));
        gold.insert(id, refs);
    }
    SyntheticCorpus {
        records: registry(),
        dictionary: dictionary(),
        papers,
        gold: GoldStandard { papers: gold },
    }
}

/// One paper citing each of ALLBUS, PIAAC and the exit poll
/// `per_feature` times.
pub fn workflow_paper(seed: u64, per_feature: usize) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = [0, 2, 5];
    let mut refs: Vec<usize> = features
        .iter()
        .flat_map(|&f| std::iter::repeat_n(f, per_feature))
        .collect();
    refs.shuffle(&mut rng);
    let (text, gold) = paper_text(&mut rng, &refs);
    SyntheticCorpus {
        records: registry(),
        dictionary: dictionary(),
        papers: vec![PaperText::new("workflow", text)],
        gold: GoldStandard {
            papers: BTreeMap::from([("workflow".to_string(), gold)]),
        },
    }
}

impl SyntheticCorpus {
    /// Gold references as detector output.
    pub fn gold_mentions(&self) -> Vec<ReferenceMention> {
        self.gold_pairs().into_iter().map(|(m, _)| m).collect()
    }

    fn gold_pairs(&self) -> Vec<(ReferenceMention, &GoldReference)> {
        let mut out = Vec::new();
        for paper in &self.papers {
            for g in self.gold.papers.get(&paper.paper_id).into_iter().flatten() {
                let (start, end) = g.offsets.expect("synthetic gold has offsets");
                let kind = FAMILIES
                    .iter()
                    .find(|(s, _, _)| *s == g.feature)
                    .map_or(FeatureKind::Abbreviation, |f| f.1);
                let query = paper.text[start..end].to_string();
                let mention = ReferenceMention {
                    paper_id: paper.paper_id.clone(),
                    feature: g.feature.clone(),
                    kind,
                    start,
                    end,
                    sentence_index: 0,
                    segment_start: start,
                    segment_end: end,
                    query,
                    years_in_context: vec![],
                };
                out.push((mention, g));
            }
        }
        out
    }

    /// Gold acceptable sets as matcher output.
    pub fn gold_matches(&self) -> Vec<SystemMatch> {
        self.gold_pairs()
            .into_iter()
            .map(|(m, g)| SystemMatch {
                paper_id: m.paper_id.clone(),
                mention: m.key(),
                suggestions: g.acceptable.clone(),
            })
            .collect()
    }

    pub fn reference_count(&self) -> usize {
        self.gold.reference_count()
    }

    /// Writes `records.jsonl`, `dictionary.tsv`, `gold.txt` and
    /// `papers/<id>.txt`; returns the paper paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let papers_dir = dir.join("papers");
        fs::create_dir_all(&papers_dir).map_err(|e| Error::io(&papers_dir, e))?;
        write_records(&dir.join("records.jsonl"), &self.records)?;
        self.dictionary.save(&dir.join("dictionary.tsv"))?;
        let gold = dir.join("gold.txt");
        fs::write(&gold, self.gold.to_text()).map_err(|e| Error::io(&gold, e))?;
        self.papers
            .iter()
            .map(|p| {
                let path = papers_dir.join(format!("{}.txt", p.paper_id));
                fs::write(&path, &p.text).map_err(|e| Error::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}
