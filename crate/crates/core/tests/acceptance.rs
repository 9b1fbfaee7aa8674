//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances and time limits are pinned below.

#[allow(dead_code)]
mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use dataref_core::detect::{detect_references, PaperText};
use dataref_core::dictionary::{derive_phrases, extract_abbreviations, Dictionary, WordLists};
use dataref_core::eval::{
    evaluate_detection, evaluate_matching, f_measure, restrict_to_true_positives, suggestions_from_ranked, SystemMatch,
};
use dataref_core::pipeline::{paper_documents, run_pipeline, PipelineConfig};
use dataref_core::rank::{
    cosine_similarity, rank_paper, vectorize, year_adjust, ScoredCandidate, TermVector, TfidfModel,
};
use dataref_core::review::{per_feature_items, per_reference_items, Caps, Workflow};
use dataref_core::synthetic;
use dataref_core::text::years_in;
use dataref_core::DatasetRecord;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

const METRIC_TOLERANCE: f64 = 1e-4;
const PROPERTY_CASES: u32 = 1000;
const FAST: Duration = Duration::from_secs(1);
const END_TO_END: Duration = Duration::from_secs(30);

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn close(got: f64, want: f64, what: &str) -> Result<(), String> {
    check(
        (got - want).abs() <= METRIC_TOLERANCE,
        format!("{what} = {got:.6}, expected {want} ± {METRIC_TOLERANCE}"),
    )
}

fn titles<'a>(list: &'a [(&'a str, &'a str)]) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
    list.iter().copied()
}

fn dictionary_examples() -> Outcome {
    let lists = WordLists::bundled();
    let fixtures = [
        ("t1", "Drug Abuse Warning Network (DAWN), 2008"),
        (
            "t2",
            "New York Police Department (NYPD) Stop, Question, and Frisk Database, 2006",
        ),
        (
            "t3",
            "Programme for the International Assessment of Adult Competencies (PIAAC), Cyprus",
        ),
        ("t4", "EVS - European Values Study 1999 - Italy"),
        ("t5", "European Values Study 2008: Azerbaijan (EVS 2008)"),
    ];
    let got: BTreeSet<String> = extract_abbreviations(titles(&fixtures), &lists)
        .into_iter()
        .map(|e| e.surface)
        .collect();
    let want: BTreeSet<String> = ["DAWN", "EVS", "NYPD", "PIAAC"].map(String::from).into();
    check(got == want, format!("abbreviations {got:?}, expected {want:?}"))?;

    let mut dict = Dictionary::build(titles(&fixtures), &lists).map_err(|e| e.to_string())?;
    let paper = PaperText::new("p", "Stops recorded by the NYPD were compared with DAWN visits.");
    let before = detect_references(&paper, &dict)
        .iter()
        .filter(|m| m.feature == "NYPD")
        .count();
    check(before == 1, format!("{before} NYPD mentions before blacklisting"))?;
    dict.blacklist("NYPD");
    let after = detect_references(&paper, &dict);
    check(
        after.iter().all(|m| m.feature != "NYPD"),
        "NYPD still detected after blacklisting",
    )?;
    check(after.len() == 1, "DAWN lost after blacklisting NYPD")?;
    Ok(format!("{} abbreviations; NYPD mentions {before} -> 0", got.len()))
}

fn phrase_examples() -> Outcome {
    let lists = WordLists::bundled();
    let fixtures = [
        ("t1", "Singularisierungsstudie 1988"),
        ("t2", "Survey of Hunting, 1980"),
        ("t3", "Freedom Poll 2000"),
        ("t4", "Czech Exit Poll 1996"),
    ];
    let got: BTreeSet<String> = derive_phrases(titles(&fixtures), &lists)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|e| e.surface)
        .collect();
    let want: BTreeSet<String> = [
        "Exit Poll",
        "Freedom Poll",
        "Singularisierungsstudie",
        "Survey of Hunting",
    ]
    .map(String::from)
    .into();
    check(got == want, format!("phrases {got:?}, expected {want:?}"))?;
    Ok(format!("{} phrases", got.len()))
}

fn year_heuristic_toy() -> Outcome {
    // Paper 1 mentions "2014" often and "study" once; every document
    // mentions "allbus".
    let query = "study allbus 2014";
    let sentences = [
        query,
        "allbus 2014 was fielded",
        "the allbus 2014 sample",
        "allbus weights",
        "allbus codebook",
        "allbus items",
    ];
    let records = [
        DatasetRecord::new("allbus-2014", "Allbus 2014"),
        DatasetRecord::new("study-allbus-2000", "Study Allbus 2000"),
    ];
    let model =
        TfidfModel::build(records.iter().map(|r| r.title.as_str()).chain(sentences)).map_err(|e| e.to_string())?;
    check(
        model.idf("study") > model.idf("2014"),
        "idf(study) should exceed idf(2014)",
    )?;

    let q = vectorize(query, &model);
    let mut scored: Vec<ScoredCandidate> = records
        .iter()
        .map(|r| ScoredCandidate {
            record_id: r.id.clone(),
            base_score: cosine_similarity(&q, &vectorize(&r.title, &model)),
            years: r.years(),
            year_boosted: false,
        })
        .collect();
    scored.sort_by(|a, b| {
        b.base_score
            .total_cmp(&a.base_score)
            .then(a.record_id.cmp(&b.record_id))
    });
    let plain: Vec<&str> = scored.iter().map(|c| c.record_id.as_str()).collect();
    check(
        plain == ["study-allbus-2000", "allbus-2014"],
        format!("plain cosine order {plain:?}"),
    )?;
    let plain_scores = (scored[0].base_score, scored[1].base_score);

    let adjusted = year_adjust(scored, &years_in(query));
    let order: Vec<&str> = adjusted.iter().map(|c| c.record_id.as_str()).collect();
    check(
        order == ["allbus-2014", "study-allbus-2000"],
        format!("adjusted order {order:?}"),
    )?;
    Ok(format!(
        "cosine {:.3} vs {:.3}; year heuristic puts \"Allbus 2014\" first",
        plain_scores.0, plain_scores.1
    ))
}

fn runner(seed: u8) -> TestRunner {
    let config = Config {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn vector() -> impl Strategy<Value = TermVector> {
    prop::collection::btree_map("[a-e]", 0.0f64..10.0, 0..6).prop_map(TermVector::from_weights)
}

fn metric_properties() -> Outcome {
    runner(1)
        .run(&(vector(), vector()), |(a, b)| {
            let ab = cosine_similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, cosine_similarity(&b, &a));
            Ok(())
        })
        .map_err(|e| format!("cosine range/symmetry: {e}"))?;

    runner(2)
        .run(
            &(vector(), prop::collection::vec(vector(), 1..8), 1e-3f64..1e3),
            |(q, docs, alpha)| {
                let score = |q: &TermVector| docs.iter().map(|d| cosine_similarity(q, d)).collect::<Vec<_>>();
                let (base, scaled) = (score(&q), score(&q.scaled(alpha)));
                let best = (0..docs.len()).max_by(|&i, &j| base[i].total_cmp(&base[j])).unwrap();
                let top = scaled.iter().cloned().fold(0.0, f64::max);
                prop_assert!(scaled[best] >= top - 1e-12);
                Ok(())
            },
        )
        .map_err(|e| format!("scale invariance: {e}"))?;

    runner(3)
        .run(&prop::collection::vec("[a-e]( [a-e]){0,4}", 1..10), |docs| {
            let model = TfidfModel::build(docs.iter().map(String::as_str)).unwrap();
            for a in ["a", "b", "c", "d", "e"] {
                for b in ["a", "b", "c", "d", "e"] {
                    if model.doc_freq(a) <= model.doc_freq(b) {
                        prop_assert!(model.idf(a) >= model.idf(b));
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| format!("idf monotonicity: {e}"))?;

    runner(4)
        .run(&(0.0f64..=1.0), |p| {
            prop_assert!((f_measure(p, p) - p).abs() < 1e-12);
            Ok(())
        })
        .map_err(|e| format!("f(p,p)=p: {e}"))?;
    Ok(format!("4 properties x {PROPERTY_CASES} cases"))
}

fn brute_force_oracle() -> Outcome {
    let pools = common::compare_random_pools(0xacce97)?;
    Ok(format!("{pools} pools ranked identically"))
}

fn evaluation_self_consistency() -> Outcome {
    let corpus = synthetic::corpus(42, &[2, 2, 2, 1, 1, 1, 1, 1, 1, 1]);
    check(
        corpus.papers.len() == 10 && corpus.reference_count() == 13,
        "unexpected corpus shape",
    )?;

    // (a) gold fed back as system output, and the real detector
    let gold_system = corpus.gold_mentions();
    let detection = evaluate_detection(&gold_system, &corpus.gold, false).map_err(|e| e.to_string())?;
    let matching = evaluate_matching(&corpus.gold_matches(), &detection).map_err(|e| e.to_string())?;
    for r in [&detection.report, &matching] {
        check(
            r.precision == 1.0 && r.recall == 1.0 && r.f_measure == 1.0,
            format!("gold-as-system {} phase: {r:?}", r.phase),
        )?;
    }
    let detected: Vec<_> = corpus
        .papers
        .iter()
        .flat_map(|p| detect_references(p, &corpus.dictionary))
        .collect();
    let strict = evaluate_detection(&detected, &corpus.gold, true).map_err(|e| e.to_string())?;
    check(
        strict.report.f_measure == 1.0,
        format!("detector vs gold: {:?}", strict.report),
    )?;

    // (b) drop three references, invent one
    let mut perturbed = gold_system.clone();
    for id in ["paper00", "paper01", "paper05"] {
        let at = perturbed
            .iter()
            .position(|m| m.paper_id == id)
            .expect("paper has a reference");
        perturbed.remove(at);
    }
    let mut spurious = perturbed[0].clone();
    spurious.feature = "NYPD".into();
    perturbed.push(spurious);
    let r = evaluate_detection(&perturbed, &corpus.gold, false)
        .map_err(|e| e.to_string())?
        .report;
    check(
        (r.tp, r.fp, r.fn_) == (10, 1, 3),
        format!("counts {:?}", (r.tp, r.fp, r.fn_)),
    )?;
    close(r.precision, 0.9091, "precision")?;
    close(r.recall, 0.7692, "recall")?;
    close(r.f_measure, 0.8333, "F")?;

    // (c) fp = fn for every matching run: gold, ranked top-5, top-1, all wrong
    let mut ranked = Vec::new();
    for p in &corpus.papers {
        let mentions = detect_references(p, &corpus.dictionary);
        ranked.extend(
            rank_paper(
                &mentions,
                &paper_documents(&p.text),
                &corpus.records,
                &Default::default(),
            )
            .map_err(|e| e.to_string())?,
        );
    }
    let wrong: Vec<SystemMatch> = corpus
        .gold_matches()
        .into_iter()
        .map(|mut m| {
            m.suggestions = BTreeSet::from(["10.0/none".to_string()]);
            m
        })
        .collect();
    let runs = [
        corpus.gold_matches(),
        restrict_to_true_positives(suggestions_from_ranked(&ranked, 5), &strict),
        restrict_to_true_positives(suggestions_from_ranked(&ranked, 1), &strict),
        wrong,
    ];
    let mut shown = Vec::new();
    for run in &runs {
        let m = evaluate_matching(run, &strict).map_err(|e| e.to_string())?;
        check(m.fp == m.fn_, format!("matching fp {} != fn {}", m.fp, m.fn_))?;
        shown.push(format!("{:.3}", m.f_measure));
    }
    Ok(format!(
        "P={:.4} R={:.4} F={:.4}; matching F over runs [{}]",
        r.precision,
        r.recall,
        r.f_measure,
        shown.join(", ")
    ))
}

fn workflow_shape() -> Outcome {
    let corpus = synthetic::workflow_paper(7, 15);
    let paper = &corpus.papers[0];
    let mentions = detect_references(paper, &corpus.dictionary);
    let features: BTreeSet<&str> = mentions.iter().map(|m| m.feature.as_str()).collect();
    check(
        mentions.len() == 45 && features.len() == 3,
        format!("{} mentions over {} features", mentions.len(), features.len()),
    )?;
    let ranked = rank_paper(
        &mentions,
        &paper_documents(&paper.text),
        &corpus.records,
        &Default::default(),
    )
    .map_err(|e| e.to_string())?;

    let caps = Caps::default();
    let per_ref = per_reference_items(&mentions, &ranked, &corpus.records, caps.per_reference);
    check(per_ref.len() == 45, format!("{} per-reference items", per_ref.len()))?;
    check(
        per_ref.iter().all(|i| i.candidates.len() <= 5),
        "per-reference item over 5 candidates",
    )?;

    let per_feature = per_feature_items(&mentions, &ranked, &corpus.records, caps);
    check(
        per_feature.len() == 3,
        format!("{} per-feature items", per_feature.len()),
    )?;
    for item in &per_feature {
        check(
            item.candidates.len() <= 6,
            format!("{} has {} candidates", item.key, item.candidates.len()),
        )?;
        let union: BTreeSet<&str> = ranked
            .iter()
            .filter(|l| l.feature == item.feature)
            .flat_map(|l| l.candidates.iter().take(5).map(|c| c.record_id.as_str()))
            .collect();
        check(
            item.candidates.iter().all(|c| union.contains(c.record_id.as_str())),
            format!("{} offers a candidate outside its members' top-5 lists", item.key),
        )?;
    }
    let sizes: Vec<String> = per_feature
        .iter()
        .map(|i| format!("{}:{}", i.key, i.mentions.len()))
        .collect();
    Ok(format!("45 items of <=5 vs 3 items of <=6 ({})", sizes.join(", ")))
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = synthetic::corpus(2016, &[3, 5, 0, 8, 2, 4, 6, 1, 7, 3]);
    let papers = corpus.write_to(&tmp.path().join("input")).map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        workflows: vec![Workflow::PerReference, Workflow::PerFeature],
        ..Default::default()
    };
    let mut trees = Vec::new();
    for run in ["run1", "run2"] {
        let out = tmp.path().join(run);
        let summary =
            run_pipeline(&config, &corpus.records, &corpus.dictionary, &papers, &out).map_err(|e| e.to_string())?;
        check(summary.is_success(), format!("{run} failures: {:?}", summary.failures))?;
        trees.push(read_tree(&out));
    }
    check(trees[0] == trees[1], "artifacts differ between runs")?;
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files, {bytes} bytes identical", trees[0].len()))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("dictionary worked examples", FAST, dictionary_examples),
        ("phrase worked examples", FAST, phrase_examples),
        ("year heuristic toy example", FAST, year_heuristic_toy),
        ("metric properties", Duration::MAX, metric_properties),
        ("brute-force ranking oracle", Duration::MAX, brute_force_oracle),
        (
            "evaluation self-consistency",
            Duration::MAX,
            evaluation_self_consistency,
        ),
        ("workflow shape", Duration::MAX, workflow_shape),
        ("end-to-end determinism", END_TO_END, end_to_end_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed > limit {
                Err(format!("took {elapsed:.2?}, limit {limit:?}"))
            } else {
                Ok(detail)
            }
        });
        match outcome {
            Ok(detail) => println!("PASS  {name:<30} {elapsed:>10.2?}  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<30} {elapsed:>10.2?}  {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
