//! Dataset registry records: OAI-PMH harvesting, the line-delimited record
//! store and title pattern statistics.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use indexmap::IndexMap;
use log::warn;
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::DictionaryEntry;
use crate::error::{Error, Result};
use crate::matcher::SurfaceMatcher;
use crate::text::years_in;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceType {
    Dataset,
    Text,
    Collection,
    Video,
    Interactive,
    #[default]
    Other,
}

impl ResourceType {
    /// Maps a Dublin Core type value onto the registry typology.
    pub fn from_dc_type(value: &str) -> Self {
        let v = value.to_lowercase();
        if v.contains("dataset") || v == "data" {
            ResourceType::Dataset
        } else if v.contains("collection") {
            ResourceType::Collection
        } else if v.contains("video") || v.contains("movingimage") || v.contains("audiovisual") {
            ResourceType::Video
        } else if v.contains("interactive") {
            ResourceType::Interactive
        } else if v.contains("text") {
            ResourceType::Text
        } else {
            ResourceType::Other
        }
    }
}

/// One registry entry. Field order is the store's on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default)]
    pub resource_type: ResourceType,
    /// Carried through from the registry, unused downstream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
}

impl DatasetRecord {
    /// A dataset record whose year is taken from its title.
    pub fn new(id: impl Into<String>, title: impl Into<String>) -> Self {
        let title = title.into();
        DatasetRecord {
            id: id.into(),
            year: years_in(&title).last().copied(),
            title,
            language: None,
            resource_type: ResourceType::Dataset,
            author: None,
        }
    }

    /// Years mentioned in the title plus the record's own year.
    pub fn years(&self) -> BTreeSet<i32> {
        let mut years: BTreeSet<i32> = years_in(&self.title).into_iter().collect();
        years.extend(self.year);
        years
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.title.trim().is_empty() {
            return Err("empty title".into());
        }
        Ok(())
    }
}

/// Records loaded from a store, with any problems found along the way.
#[derive(Debug, Default)]
pub struct LoadedRecords {
    pub records: Vec<DatasetRecord>,
    pub warnings: Vec<String>,
}

/// Reads a record store. Invalid lines are skipped and reported with their
/// line number; a repeated id replaces the earlier record in place.
pub fn load_records(path: &Path) -> Result<LoadedRecords> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut by_id: IndexMap<String, DatasetRecord> = IndexMap::new();
    let mut warnings = Vec::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<DatasetRecord, String> = serde_json::from_str::<DatasetRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.validate().map(|()| r));
        match parsed {
            Ok(record) => {
                if by_id.contains_key(&record.id) {
                    let msg = format!(
                        "{}:{}: duplicate id {}, keeping the later record",
                        path.display(),
                        n + 1,
                        record.id
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                }
                by_id.insert(record.id.clone(), record);
            }
            Err(e) => {
                let msg = format!("{}:{}: skipped invalid record: {e}", path.display(), n + 1);
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    Ok(LoadedRecords {
        records: by_id.into_values().collect(),
        warnings,
    })
}

/// Upserts `incoming` into `existing`: a known id is replaced in place,
/// new ids are appended in arrival order.
pub fn merge_records<I>(existing: Vec<DatasetRecord>, incoming: I) -> Vec<DatasetRecord>
where
    I: IntoIterator<Item = DatasetRecord>,
{
    let mut by_id: IndexMap<String, DatasetRecord> = existing.into_iter().map(|r| (r.id.clone(), r)).collect();
    for r in incoming {
        by_id.insert(r.id.clone(), r);
    }
    by_id.into_values().collect()
}

/// Writes records one JSON object per line.
pub fn write_records<'a, I>(path: &Path, records: I) -> Result<()>
where
    I: IntoIterator<Item = &'a DatasetRecord>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// OAI-PMH

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Fetches a URL and returns the response body.
pub trait Transport {
    fn get(&self, url: &str) -> std::result::Result<String, TransportError>;
}

impl<F> Transport for F
where
    F: Fn(&str) -> std::result::Result<String, TransportError>,
{
    fn get(&self, url: &str) -> std::result::Result<String, TransportError> {
        self(url)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarvestError {
    /// Retrying with `resume_token` continues where the harvest stopped.
    #[error("network failure ({message}); resume with token {resume_token:?}")]
    Network {
        message: String,
        resume_token: Option<String>,
    },
    #[error("OAI-PMH error {code}: {message}")]
    Protocol {
        code: String,
        message: String,
        resume_token: Option<String>,
    },
    #[error("unparseable OAI-PMH response: {message}")]
    Xml {
        message: String,
        resume_token: Option<String>,
    },
    #[error("bad endpoint URL {0}")]
    Endpoint(String),
}

impl HarvestError {
    pub fn resume_token(&self) -> Option<&str> {
        match self {
            HarvestError::Network { resume_token, .. }
            | HarvestError::Protocol { resume_token, .. }
            | HarvestError::Xml { resume_token, .. } => resume_token.as_deref(),
            HarvestError::Endpoint(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub identifier: Option<String>,
    pub reason: String,
}

impl fmt::Display for SkippedRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}",
            self.identifier.as_deref().unwrap_or("<no identifier>"),
            self.reason
        )
    }
}

/// One parsed ListRecords response.
#[derive(Debug, Default)]
pub struct OaiPage {
    pub records: Vec<DatasetRecord>,
    pub skipped: Vec<SkippedRecord>,
    /// Non-empty token when more pages follow.
    pub resumption_token: Option<String>,
}

#[derive(Debug, Default)]
struct RawRecord {
    header_id: Option<String>,
    deleted: bool,
    titles: Vec<String>,
    identifiers: Vec<String>,
    dates: Vec<String>,
    languages: Vec<String>,
    types: Vec<String>,
    creators: Vec<String>,
}

impl RawRecord {
    fn into_record(self) -> std::result::Result<DatasetRecord, SkippedRecord> {
        let skip = |reason: &str, id: Option<String>| SkippedRecord {
            identifier: id,
            reason: reason.to_string(),
        };
        if self.deleted {
            return Err(skip("deleted record", self.header_id));
        }
        let id = self
            .identifiers
            .iter()
            .find_map(|i| normalize_doi(i))
            .or_else(|| self.header_id.clone().filter(|h| !h.trim().is_empty()));
        let Some(id) = id else {
            return Err(skip("no identifier", None));
        };
        let Some(title) = self
            .titles
            .iter()
            .map(|t| t.split_whitespace().collect::<Vec<_>>().join(" "))
            .find(|t| !t.is_empty())
        else {
            return Err(skip("no title", Some(id)));
        };
        let year = self
            .dates
            .iter()
            .find_map(|d| years_in(d).first().copied())
            .or_else(|| years_in(&title).last().copied());
        let resource_type = self
            .types
            .iter()
            .map(|t| ResourceType::from_dc_type(t))
            .find(|t| *t != ResourceType::Other)
            .unwrap_or_default();
        let author = (!self.creators.is_empty()).then(|| self.creators.join("; "));
        Ok(DatasetRecord {
            id,
            title,
            year,
            language: self.languages.iter().find_map(|l| normalize_language(l)),
            resource_type,
            author,
        })
    }
}

fn normalize_doi(identifier: &str) -> Option<String> {
    let s = identifier.trim();
    let lower = s.to_lowercase();
    let rest = [
        "https://doi.org/",
        "http://doi.org/",
        "https://dx.doi.org/",
        "http://dx.doi.org/",
        "doi:",
    ]
    .iter()
    .find_map(|p| lower.starts_with(p).then(|| &s[p.len()..]))
    .unwrap_or(s)
    .trim();
    rest.starts_with("10.").then(|| rest.to_string())
}

fn normalize_language(value: &str) -> Option<String> {
    let v = value.trim().to_lowercase();
    let code = match v.as_str() {
        "eng" | "english" => "en",
        "ger" | "deu" | "german" | "deutsch" => "de",
        "fre" | "fra" | "french" => "fr",
        "spa" | "spanish" => "es",
        "ita" | "italian" => "it",
        "dut" | "nld" | "dutch" => "nl",
        s if s.len() == 2 && s.chars().all(|c| c.is_ascii_alphabetic()) => s,
        s if s.len() > 2 && s.as_bytes()[2] == b'-' => &s[..2],
        _ => return None,
    };
    Some(code.to_string())
}

/// Parses a ListRecords response (`metadataPrefix=oai_dc`).
///
/// An OAI `noRecordsMatch` error is an empty page; other OAI errors are
/// reported as [`HarvestError::Protocol`].
pub fn parse_list_records(xml: &str) -> std::result::Result<OaiPage, HarvestError> {
    let xml_err = |e: &dyn fmt::Display| HarvestError::Xml {
        message: e.to_string(),
        resume_token: None,
    };
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);

    let mut page = OaiPage::default();
    let mut current: Option<RawRecord> = None;
    let mut stack: Vec<String> = Vec::new();
    let mut text = String::new();
    let mut error: Option<(String, String)> = None;
    let mut saw_root = false;

    loop {
        match reader.read_event().map_err(|e| xml_err(&e))? {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                text.clear();
                match name.as_str() {
                    "OAI-PMH" => saw_root = true,
                    "record" => current = Some(RawRecord::default()),
                    "header" => {
                        if let Some(rec) = current.as_mut() {
                            let status = e
                                .try_get_attribute("status")
                                .map_err(|e| xml_err(&e))?
                                .map(|a| a.unescape_value().map(|v| v.into_owned()))
                                .transpose()
                                .map_err(|e| xml_err(&e))?;
                            rec.deleted = status.as_deref() == Some("deleted");
                        }
                    }
                    "error" => {
                        let code = e
                            .try_get_attribute("code")
                            .map_err(|e| xml_err(&e))?
                            .map(|a| String::from_utf8_lossy(&a.value).into_owned())
                            .unwrap_or_default();
                        error = Some((code, String::new()));
                    }
                    _ => {}
                }
                stack.push(name);
            }
            Event::Empty(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if name == "error" {
                    let code = e
                        .try_get_attribute("code")
                        .map_err(|e| xml_err(&e))?
                        .map(|a| String::from_utf8_lossy(&a.value).into_owned())
                        .unwrap_or_default();
                    error = Some((code, String::new()));
                }
                if name == "OAI-PMH" {
                    saw_root = true;
                }
                // an empty <resumptionToken/> marks the last page
            }
            Event::Text(t) => {
                text.push_str(&t.unescape().map_err(|e| xml_err(&e))?);
            }
            Event::CData(t) => {
                text.push_str(&String::from_utf8_lossy(&t.into_inner()));
            }
            Event::End(_) => {
                let Some(name) = stack.pop() else {
                    return Err(xml_err(&"unbalanced end tag"));
                };
                let value = std::mem::take(&mut text);
                let parent = stack.last().map(String::as_str);
                if name == "record" {
                    match current.take().map(RawRecord::into_record) {
                        Some(Ok(r)) => page.records.push(r),
                        Some(Err(s)) => page.skipped.push(s),
                        None => {}
                    }
                    continue;
                }
                match (name.as_str(), current.as_mut()) {
                    ("identifier", Some(rec)) if parent == Some("header") => rec.header_id = Some(value),
                    ("title", Some(rec)) => rec.titles.push(value),
                    ("identifier", Some(rec)) => rec.identifiers.push(value),
                    ("date", Some(rec)) => rec.dates.push(value),
                    ("language", Some(rec)) => rec.languages.push(value),
                    ("type", Some(rec)) => rec.types.push(value),
                    ("creator", Some(rec)) => rec.creators.push(value),
                    ("resumptionToken", _) => {
                        let token = value.trim();
                        page.resumption_token = (!token.is_empty()).then(|| token.to_string());
                    }
                    ("error", _) => {
                        if let Some(err) = error.as_mut() {
                            err.1 = value;
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_root {
        return Err(xml_err(&"missing OAI-PMH root element"));
    }
    match error {
        Some((code, _)) if code == "noRecordsMatch" => Ok(OaiPage::default()),
        Some((code, message)) => Err(HarvestError::Protocol {
            code,
            message,
            resume_token: None,
        }),
        None => Ok(page),
    }
}

/// What to harvest. `resume_token` restarts an interrupted harvest.
#[derive(Debug, Clone, Default)]
pub struct HarvestRequest {
    pub endpoint: String,
    pub set_spec: Option<String>,
    pub from_date: Option<NaiveDate>,
    pub resume_token: Option<String>,
}

impl HarvestRequest {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HarvestRequest {
            endpoint: endpoint.into(),
            ..Default::default()
        }
    }

    fn url(&self, token: Option<&str>) -> std::result::Result<String, HarvestError> {
        let mut url =
            url::Url::parse(&self.endpoint).map_err(|e| HarvestError::Endpoint(format!("{}: {e}", self.endpoint)))?;
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("verb", "ListRecords");
            match token {
                Some(t) => {
                    q.append_pair("resumptionToken", t);
                }
                None => {
                    q.append_pair("metadataPrefix", "oai_dc");
                    if let Some(set) = &self.set_spec {
                        q.append_pair("set", set);
                    }
                    if let Some(from) = self.from_date {
                        q.append_pair("from", &from.format("%Y-%m-%d").to_string());
                    }
                }
            }
        }
        Ok(url.into())
    }
}

enum Next {
    First,
    Token(String),
    Done,
}

/// Lazily pages through a ListRecords result set.
///
/// Malformed records are logged and skipped. A transport failure yields a
/// single [`HarvestError::Network`] carrying the token to resume from and
/// ends the stream.
pub struct Harvest<'t, T: Transport + ?Sized> {
    transport: &'t T,
    request: HarvestRequest,
    next: Next,
    buffered: std::vec::IntoIter<DatasetRecord>,
    skipped: Vec<SkippedRecord>,
    pages: usize,
}

impl<'t, T: Transport + ?Sized> Harvest<'t, T> {
    pub fn new(transport: &'t T, request: HarvestRequest) -> Self {
        let next = match &request.resume_token {
            Some(t) => Next::Token(t.clone()),
            None => Next::First,
        };
        Harvest {
            transport,
            request,
            next,
            buffered: Vec::new().into_iter(),
            skipped: Vec::new(),
            pages: 0,
        }
    }

    pub fn skipped(&self) -> &[SkippedRecord] {
        &self.skipped
    }

    pub fn pages(&self) -> usize {
        self.pages
    }

    fn fetch(&mut self) -> std::result::Result<(), HarvestError> {
        let token = match std::mem::replace(&mut self.next, Next::Done) {
            Next::Done => return Ok(()),
            Next::First => None,
            Next::Token(t) => Some(t),
        };
        let url = self.request.url(token.as_deref())?;
        let body = self.transport.get(&url).map_err(|e| HarvestError::Network {
            message: e.0,
            resume_token: token.clone(),
        })?;
        let page = parse_list_records(&body).map_err(|e| match e {
            HarvestError::Protocol { code, message, .. } => HarvestError::Protocol {
                code,
                message,
                resume_token: token.clone(),
            },
            HarvestError::Xml { message, .. } => HarvestError::Xml {
                message,
                resume_token: token.clone(),
            },
            other => other,
        })?;
        self.pages += 1;
        for s in &page.skipped {
            warn!("skipping OAI record {s}");
        }
        self.skipped.extend(page.skipped);
        self.buffered = page.records.into_iter();
        if let Some(t) = page.resumption_token {
            self.next = Next::Token(t);
        }
        Ok(())
    }
}

impl<T: Transport + ?Sized> Iterator for Harvest<'_, T> {
    type Item = std::result::Result<DatasetRecord, HarvestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(r) = self.buffered.next() {
                return Some(Ok(r));
            }
            if matches!(self.next, Next::Done) {
                return None;
            }
            if let Err(e) = self.fetch() {
                self.next = Next::Done;
                return Some(Err(e));
            }
        }
    }
}

/// Starts a harvest over `transport`.
pub fn harvest_oai<T: Transport + ?Sized>(transport: &T, request: HarvestRequest) -> Harvest<'_, T> {
    Harvest::new(transport, request)
}

// ---------------------------------------------------------------------------
// Title patterns

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternStats {
    pub total_titles: usize,
    pub with_abbreviation: usize,
    pub with_phrase: usize,
    pub with_both: usize,
    pub with_filename: usize,
}

impl PatternStats {
    pub fn share(&self, count: usize) -> f64 {
        if self.total_titles == 0 {
            0.0
        } else {
            count as f64 / self.total_titles as f64
        }
    }
}

const FILE_EXTENSIONS: [&str; 6] = ["DAT", "TXT", "CSV", "SAV", "DTA", "POR"];

/// A title token naming a data file, e.g. "VIRGPT2.DAT".
pub fn is_filename_token(token: &str) -> bool {
    let token = token.trim_matches(|c: char| !c.is_alphanumeric());
    let Some((name, ext)) = token.rsplit_once('.') else {
        return false;
    };
    name.chars().count() >= 2 && FILE_EXTENSIONS.iter().any(|e| e.eq_ignore_ascii_case(ext))
}

/// Counts titles holding at least one abbreviation, phrase or filename.
pub fn analyze_title_patterns(
    records: &[DatasetRecord],
    abbreviations: &[DictionaryEntry],
    phrases: &[DictionaryEntry],
) -> PatternStats {
    let active = |entries: &'_ [DictionaryEntry]| -> SurfaceMatcher {
        SurfaceMatcher::new(
            entries
                .iter()
                .filter(|e| !e.blacklisted)
                .map(|e| (e.surface.as_str(), e.kind.match_rule())),
        )
    };
    let abbrev_matcher = active(abbreviations);
    let phrase_matcher = active(phrases);
    let mut stats = PatternStats::default();
    for r in records {
        stats.total_titles += 1;
        let a = !abbrev_matcher.find_all(&r.title).is_empty();
        let p = !phrase_matcher.find_all(&r.title).is_empty();
        stats.with_abbreviation += usize::from(a);
        stats.with_phrase += usize::from(p);
        stats.with_both += usize::from(a && p);
        stats.with_filename += usize::from(r.title.split_whitespace().any(is_filename_token));
    }
    stats
}
