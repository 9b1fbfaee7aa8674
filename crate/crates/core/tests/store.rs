use std::cell::Cell;
use std::fs;

use dataref_core::registry::{
    harvest_oai, load_records, merge_records, write_records, HarvestError, HarvestRequest, TransportError,
};
use dataref_core::review::{build_session, Caps, Choice, SessionStore, Workflow};
use dataref_core::{detect_references, synthetic, DatasetRecord, ResourceType};

fn page(body: &str, token: &str) -> String {
    format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/"><responseDate>2016-01-01T00:00:00Z</responseDate>
<ListRecords>{body}<resumptionToken>{token}</resumptionToken></ListRecords></OAI-PMH>"#
    )
}

fn record(id: &str, title: &str, kind: &str) -> String {
    format!(
        r#"<record><header><identifier>oai:example:{id}</identifier><datestamp>2015-01-01</datestamp></header>
<metadata><oai_dc:dc xmlns:oai_dc="http://www.openarchives.org/OAI/2.0/oai_dc/" xmlns:dc="http://purl.org/dc/elements/1.1/">
<dc:title>{title}</dc:title><dc:identifier>https://doi.org/10.1234/{id}</dc:identifier><dc:type>{kind}</dc:type>
</oai_dc:dc></metadata></record>"#
    )
}

fn endpoint(url: &str) -> Result<String, TransportError> {
    if url.contains("resumptionToken=t2") {
        Ok(page(&record("c", "Politbarometer 2012", "Dataset"), ""))
    } else {
        Ok(page(
            &[
                record("a", "ALLBUS 2014", "Dataset"),
                record("b", "Report on &amp; EVS", "Text"),
            ]
            .concat(),
            "t2",
        ))
    }
}

fn harvest_all() -> Vec<DatasetRecord> {
    harvest_oai(&endpoint, HarvestRequest::new("http://oai.example.org/oai"))
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn harvested_records_carry_dois_and_types() {
    let records = harvest_all();
    let ids: Vec<_> = records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["10.1234/a", "10.1234/b", "10.1234/c"]);
    assert_eq!(records[1].title, "Report on & EVS");
    assert_eq!(records[1].resource_type, ResourceType::Text);
    assert_eq!(records[0].year, Some(2014));
}

#[test]
fn harvesting_twice_leaves_the_store_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    write_records(&path, &merge_records(Vec::new(), harvest_all())).unwrap();
    let first = fs::read(&path).unwrap();

    let existing = load_records(&path).unwrap();
    assert!(existing.warnings.is_empty());
    write_records(&path, &merge_records(existing.records, harvest_all())).unwrap();
    assert_eq!(fs::read(&path).unwrap(), first);
}

#[test]
fn interrupted_harvest_resumes_from_its_token() {
    let calls = Cell::new(0);
    let flaky = |url: &str| {
        calls.set(calls.get() + 1);
        if calls.get() == 2 {
            Err(TransportError("connection reset".into()))
        } else {
            endpoint(url)
        }
    };
    let mut got = Vec::new();
    let mut token = None;
    for item in harvest_oai(&flaky, HarvestRequest::new("http://oai.example.org/oai")) {
        match item {
            Ok(r) => got.push(r),
            Err(HarvestError::Network { resume_token, .. }) => token = resume_token,
            Err(e) => panic!("{e}"),
        }
    }
    assert_eq!(token.as_deref(), Some("t2"));
    let request = HarvestRequest {
        resume_token: token,
        ..HarvestRequest::new("http://oai.example.org/oai")
    };
    got.extend(harvest_oai(&flaky, request).map(Result::unwrap));
    assert_eq!(got, harvest_all());
}

#[test]
fn store_round_trip_and_last_wins() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let records = harvest_all();
    write_records(&path, &records).unwrap();
    assert_eq!(load_records(&path).unwrap().records, records);

    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("{\"id\":\"10.1234/a\",\"title\":\"ALLBUS 2016\"}\nnot json\n");
    fs::write(&path, text).unwrap();
    let loaded = load_records(&path).unwrap();
    assert_eq!(loaded.records.len(), 3);
    assert_eq!(loaded.records[0].title, "ALLBUS 2016");
    assert_eq!(loaded.warnings.len(), 2);
}

#[test]
fn session_log_replays_to_the_same_state_after_restart() {
    let corpus = synthetic::workflow_paper(11, 4);
    let paper = &corpus.papers[0];
    let mentions = detect_references(paper, &corpus.dictionary);
    let ranked = dataref_core::rank::rank_paper(
        &mentions,
        &dataref_core::pipeline::paper_documents(&paper.text),
        &corpus.records,
        &Default::default(),
    )
    .unwrap();
    let session = build_session(
        &paper.paper_id,
        Workflow::PerFeature,
        &mentions,
        &ranked,
        &corpus.records,
        Caps::default(),
    );

    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    store.create(&session).unwrap();
    for item in &session.items {
        let first = item.candidates[0].record_id.clone();
        store
            .decide(&session.session_id, &item.key, Choice::NoMatch, "a")
            .unwrap();
        store
            .decide(&session.session_id, &item.key, Choice::Record { record_id: first }, "b")
            .unwrap();
    }
    let live = store.load(&session.session_id).unwrap();
    drop(store);
    let replayed = SessionStore::open(dir.path())
        .unwrap()
        .load(&session.session_id)
        .unwrap();
    assert_eq!(replayed, live);
    assert_eq!(replayed.history.len(), 2 * session.items.len());
    let links = dataref_core::review::export_links(&replayed).unwrap();
    assert_eq!(links.links.len(), mentions.len());
}
