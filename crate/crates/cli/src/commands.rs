use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use dataref_core::detect::{read_mentions, write_mentions};
use dataref_core::eval::{
    evaluate_detection, evaluate_matching, format_table, restrict_to_true_positives, suggestions_from_links,
    suggestions_from_ranked, EvalReport,
};
use dataref_core::pipeline::{paper_documents, run_pipeline, PipelineConfig};
use dataref_core::rank::{rank_paper, read_ranked, write_ranked};
use dataref_core::registry::{
    analyze_title_patterns, harvest_oai, load_records, merge_records, write_records, HarvestRequest, Transport,
    TransportError,
};
use dataref_core::review::{build_session, export_links, SessionStatus, SessionStore};
use dataref_core::{
    detect_references, DatasetRecord, Dictionary, FeatureKind, GoldStandard, PaperText, ReferenceMention, WordLists,
    Workflow,
};
use serde::Serialize;

use crate::cli::*;
use crate::server::{self, AppState};

/// Reads the TOML configuration; relative paths in it are taken relative
/// to the file's directory.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut config: PipelineConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    resolve(&mut config.records);
    resolve(&mut config.dictionary);
    for p in [&mut config.wordlists, &mut config.seeds, &mut config.blacklist]
        .into_iter()
        .flatten()
    {
        resolve(p);
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Harvest(a) => harvest(&config, a),
        Command::AnalyzeTitles(a) => analyze_titles(&config, a),
        Command::BuildDict(a) => build_dict(&config, a),
        Command::Detect(a) => detect(&config, a),
        Command::Rank(a) => rank(&config, a),
        Command::Review(a) => review(&config, a),
        Command::Evaluate(a) => evaluate(a),
        Command::Serve(a) => serve(&config, a),
        Command::Export(a) => export(a),
        Command::Run(a) => run_batch(config, a),
    }
}

fn records_path(config: &PipelineConfig, arg: &RecordsArg) -> PathBuf {
    arg.records.clone().unwrap_or_else(|| config.records.clone())
}

fn dictionary_path(config: &PipelineConfig, arg: &DictionaryArg) -> PathBuf {
    arg.dictionary.clone().unwrap_or_else(|| config.dictionary.clone())
}

fn read_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let loaded = load_records(path).with_context(|| format!("loading records from {}", path.display()))?;
    if !loaded.warnings.is_empty() {
        log::warn!(
            "{}: {} problem line(s) skipped or replaced",
            path.display(),
            loaded.warnings.len()
        );
    }
    Ok(loaded.records)
}

fn workflows(config: &PipelineConfig, args: &[WorkflowArg]) -> Vec<Workflow> {
    if args.is_empty() {
        return config.workflows.clone();
    }
    args.iter()
        .map(|w| match w {
            WorkflowArg::PerReference => Workflow::PerReference,
            WorkflowArg::PerFeature => Workflow::PerFeature,
        })
        .collect()
}

struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    fn new() -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .user_agent(concat!("dataref/", env!("CARGO_PKG_VERSION")))
            .build()?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<String, TransportError> {
        let response = self.client.get(url).send().map_err(|e| TransportError(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(TransportError(format!("HTTP {status} from {url}")));
        }
        response.text().map_err(|e| TransportError(e.to_string()))
    }
}

fn harvest(config: &PipelineConfig, args: HarvestArgs) -> Result<ExitCode> {
    let path = records_path(config, &args.records);
    let existing = if path.exists() {
        read_records(&path)?
    } else {
        Vec::new()
    };
    let before = existing.len();
    let request = HarvestRequest {
        set_spec: args.set,
        from_date: args.from,
        resume_token: args.resume,
        ..HarvestRequest::new(args.endpoint)
    };
    let transport = HttpTransport::new()?;
    let mut harvest = harvest_oai(&transport, request);
    let mut fresh = Vec::new();
    let mut failure = None;
    for item in harvest.by_ref() {
        match item {
            Ok(r) => fresh.push(r),
            Err(e) => failure = Some(e),
        }
    }
    let (received, skipped, pages) = (fresh.len(), harvest.skipped().len(), harvest.pages());
    let merged = merge_records(existing, fresh);
    write_records(&path, &merged)?;
    println!(
        "{received} records from {pages} page(s), {skipped} skipped; store {} now holds {} ({} new)",
        path.display(),
        merged.len(),
        merged.len() - before
    );
    match failure {
        None => Ok(ExitCode::SUCCESS),
        Some(e) => {
            eprintln!("harvest interrupted: {e}");
            if let Some(token) = e.resume_token() {
                eprintln!("resume with: --resume {token}");
            }
            Ok(ExitCode::from(2))
        }
    }
}

fn analyze_titles(config: &PipelineConfig, args: AnalyzeArgs) -> Result<ExitCode> {
    let records = read_records(&records_path(config, &args.records))?;
    let dict = Dictionary::load(&dictionary_path(config, &args.dictionary))?;
    let abbreviations: Vec<_> = dict.of_kind(FeatureKind::Abbreviation).cloned().collect();
    let phrases: Vec<_> = dict.of_kind(FeatureKind::Phrase).cloned().collect();
    let stats = analyze_title_patterns(&records, &abbreviations, &phrases);
    println!("titles               {:>8}", stats.total_titles);
    for (label, n) in [
        ("with abbreviation", stats.with_abbreviation),
        ("with phrase", stats.with_phrase),
        ("with both", stats.with_both),
        ("with file name", stats.with_filename),
    ] {
        println!("{label:<20} {n:>8}  {:>6.2}%", 100.0 * stats.share(n));
    }
    Ok(ExitCode::SUCCESS)
}

fn word_lists(
    config: &PipelineConfig,
    dir: Option<&Path>,
    seeds: Option<&Path>,
    blacklist: Option<&Path>,
) -> Result<WordLists> {
    let mut lists = match dir.or(config.wordlists.as_deref()) {
        Some(dir) => WordLists::load_dir(dir)?,
        None => WordLists::bundled(),
    };
    if let Some(seeds) = seeds.or(config.seeds.as_deref()) {
        lists.load_seeds(seeds)?;
    }
    if let Some(bl) = blacklist.or(config.blacklist.as_deref()) {
        lists.load_blacklist(bl)?;
    }
    Ok(lists)
}

fn build_dictionary(records: &[DatasetRecord], lists: &WordLists, out: &Path) -> Result<Dictionary> {
    let dict = Dictionary::build(records.iter().map(|r| (r.id.as_str(), r.title.as_str())), lists)?;
    dict.save(out)?;
    let abbreviations = dict.of_kind(FeatureKind::Abbreviation).count();
    let blacklisted = dict.entries().iter().filter(|e| e.blacklisted).count();
    println!(
        "{} entries ({abbreviations} abbreviations, {} phrases, {blacklisted} blacklisted) written to {}",
        dict.len(),
        dict.len() - abbreviations,
        out.display()
    );
    Ok(dict)
}

fn build_dict(config: &PipelineConfig, args: BuildDictArgs) -> Result<ExitCode> {
    let records = read_records(&records_path(config, &args.records))?;
    let lists = word_lists(
        config,
        args.wordlists.as_deref(),
        args.seeds.as_deref(),
        args.blacklist.as_deref(),
    )?;
    let out = args.out.unwrap_or_else(|| config.dictionary.clone());
    build_dictionary(&records, &lists, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn detect(config: &PipelineConfig, args: DetectArgs) -> Result<ExitCode> {
    let dict = Dictionary::load(&dictionary_path(config, &args.dictionary))?;
    let mut mentions = Vec::new();
    for path in &args.papers {
        let paper = PaperText::load(path)?;
        let found = detect_references(&paper, &dict);
        println!("{}: {} mention(s)", paper.paper_id, found.len());
        mentions.extend(found);
    }
    write_mentions(&args.out, &mentions)?;
    Ok(ExitCode::SUCCESS)
}

fn by_paper(mentions: Vec<ReferenceMention>) -> BTreeMap<String, Vec<ReferenceMention>> {
    let mut out: BTreeMap<String, Vec<ReferenceMention>> = BTreeMap::new();
    for m in mentions {
        out.entry(m.paper_id.clone()).or_default().push(m);
    }
    out
}

fn rank(config: &PipelineConfig, args: RankArgs) -> Result<ExitCode> {
    let records = read_records(&records_path(config, &args.records))?;
    let mut options = config.rank_options();
    if let Some(t) = args.threshold {
        if !(0.0..=1.0).contains(&t) {
            bail!("threshold {t} outside [0, 1]");
        }
        options.threshold = t;
    }
    options.include_all_types |= args.all_types;

    let mut ranked = Vec::new();
    for (paper_id, mentions) in by_paper(read_mentions(&args.mentions)?) {
        let lists = match &args.paper_dir {
            Some(dir) => {
                let path = dir.join(format!("{paper_id}.txt"));
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                rank_paper(&mentions, &paper_documents(&text), &records, &options)?
            }
            None => {
                let contexts: BTreeSet<&str> = mentions.iter().map(|m| m.query.as_str()).collect();
                let docs: Vec<&str> = contexts.into_iter().collect();
                rank_paper(&mentions, &docs, &records, &options)?
            }
        };
        ranked.extend(lists);
    }
    write_ranked(&args.out, &ranked)?;
    println!("{} ranked list(s) written to {}", ranked.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn review(config: &PipelineConfig, args: ReviewArgs) -> Result<ExitCode> {
    let records = read_records(&records_path(config, &args.records))?;
    let ranked = read_ranked(&args.ranked)?;
    let store = SessionStore::open(&args.sessions)?;
    for (paper_id, mentions) in by_paper(read_mentions(&args.mentions)?) {
        for w in workflows(config, &args.workflows) {
            let session = build_session(&paper_id, w, &mentions, &ranked, &records, config.caps);
            store.create(&session)?;
            println!("{}: {} item(s)", session.session_id, session.items.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvaluationFile {
    detection: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    matching: Option<EvalReport>,
    /// Detected gold references without any acceptable record.
    unmatchable: usize,
}

fn evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let gold = GoldStandard::load(&args.gold)?;
    let mentions = read_mentions(&args.mentions)?;
    let detection = evaluate_detection(&mentions, &gold, args.offset_strict)?;
    let matching = match args.phase {
        PhaseArg::Detection => None,
        PhaseArg::Matching | PhaseArg::Both => {
            let suggestions = match args.mode {
                ModeArg::Topk => suggestions_from_ranked(&read_ranked(&args.ranked)?, args.top_k),
                ModeArg::Decision => {
                    let store = SessionStore::open(&args.sessions)?;
                    let mut docs = Vec::new();
                    for id in store.list()? {
                        let session = store.load(&id)?;
                        if session.status() == SessionStatus::Completed {
                            docs.push(export_links(&session)?);
                        } else {
                            log::warn!("{id} is not completed; its decisions are not counted");
                        }
                    }
                    suggestions_from_links(&docs)
                }
            };
            let suggestions = restrict_to_true_positives(suggestions, &detection);
            Some(evaluate_matching(&suggestions, &detection)?)
        }
    };
    let mut shown = Vec::new();
    if args.phase != PhaseArg::Matching {
        shown.push(detection.report.clone());
    }
    shown.extend(matching.clone());
    print!("{}", format_table(&shown));
    let unmatchable = detection.unmatchable();
    if unmatchable > 0 && matching.is_some() {
        println!("{unmatchable} detected reference(s) have no acceptable record and are not scored for matching");
    }
    if let Some(path) = &args.report {
        let file = EvaluationFile {
            detection: detection.report,
            matching,
            unmatchable,
        };
        fs::write(path, serde_json::to_string_pretty(&file)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(config: &PipelineConfig, args: ServeArgs) -> Result<ExitCode> {
    let store = SessionStore::open(&args.sessions)?;
    let blacklist = args
        .blacklist
        .or_else(|| config.blacklist.clone())
        .unwrap_or_else(|| PathBuf::from("blacklist.txt"));
    let dictionary = dictionary_path(config, &args.dictionary);
    let state = AppState::new(store, blacklist, Some(dictionary));
    let listen = args.listen.unwrap_or_else(|| config.listen.clone());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(server::serve(&listen, state))?;
    Ok(ExitCode::SUCCESS)
}

fn export(args: ExportArgs) -> Result<ExitCode> {
    let store = SessionStore::open(&args.sessions)?;
    let links = export_links(&store.load(&args.session)?)?;
    let body = match args.format {
        FormatArg::Tsv => links.to_table(),
        FormatArg::Json => serde_json::to_string_pretty(&links)? + "\n",
    };
    match &args.out {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{body}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn run_batch(mut config: PipelineConfig, args: RunArgs) -> Result<ExitCode> {
    config.workflows = workflows(&config, &args.workflows);
    let records = read_records(&records_path(&config, &args.records))?;
    let dict_path = dictionary_path(&config, &args.dictionary);
    let dict = if args.build_dict {
        let lists = word_lists(&config, None, None, None)?;
        build_dictionary(&records, &lists, &dict_path)?
    } else {
        Dictionary::load(&dict_path)?
    };
    let summary = run_pipeline(&config, &records, &dict, &args.papers, &args.out)?;
    let empty = summary.sessions.iter().filter(|s| s.empty).count();
    println!(
        "{} paper(s), {} mention(s), {} session(s) ({empty} empty) in {}",
        summary.papers,
        summary.mentions,
        summary.sessions.len(),
        args.out.display()
    );
    for f in &summary.failures {
        eprintln!("failed: {}: {}", f.paper, f.error);
    }
    Ok(if summary.is_success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
