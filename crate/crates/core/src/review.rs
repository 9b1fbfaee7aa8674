//! Expert review of ranked candidates.
//!
//! Two workflows are supported. Per reference, the expert sees the top
//! candidates of every single mention. Per feature, the top lists of all
//! mentions sharing a feature are pooled, candidates are ordered by how
//! often they occur across those lists, and one decision covers every
//! mention of the feature.
//!
//! Sessions are persisted as append-only event logs: a `created` event
//! holding the items, then one `decision` event per expert choice. The
//! current state is whatever replaying the log produces.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::detect::ReferenceMention;
use crate::dictionary::FeatureKind;
use crate::error::{Error, Result};
use crate::rank::RankedList;
use crate::registry::DatasetRecord;

pub const PER_REFERENCE_CAP: usize = 5;
pub const PER_FEATURE_CAP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workflow {
    PerReference,
    PerFeature,
}

impl Workflow {
    pub fn as_str(self) -> &'static str {
        match self {
            Workflow::PerReference => "per_reference",
            Workflow::PerFeature => "per_feature",
        }
    }
}

impl fmt::Display for Workflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Workflow {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "per_reference" => Ok(Workflow::PerReference),
            "per_feature" => Ok(Workflow::PerFeature),
            other => Err(format!("unknown workflow {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    pub per_reference: usize,
    pub per_feature: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            per_reference: PER_REFERENCE_CAP,
            per_feature: PER_FEATURE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub record_id: String,
    pub title: String,
    /// Cosine score; for pooled candidates the best score over all lists.
    pub score: f64,
    /// Number of member top lists holding the record (per-feature only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occurrences: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRef {
    pub key: String,
    pub start: usize,
    pub end: usize,
    pub sentence_index: usize,
    pub context: String,
}

impl From<&ReferenceMention> for MentionRef {
    fn from(m: &ReferenceMention) -> Self {
        MentionRef {
            key: m.key(),
            start: m.start,
            end: m.end,
            sentence_index: m.sentence_index,
            context: m.query.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    /// Mention key (per reference) or feature surface (per feature).
    pub key: String,
    pub feature: String,
    pub kind: FeatureKind,
    pub candidates: Vec<CandidateView>,
    /// Mentions the item's decision applies to.
    pub mentions: Vec<MentionRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Choice {
    /// One of the item's candidates.
    Record {
        record_id: String,
    },
    /// A record the expert found outside the candidate list.
    Override {
        record_id: String,
    },
    /// The reference has no counterpart in the registry.
    NoMatch,
    Skipped,
}

impl Choice {
    pub fn record_id(&self) -> Option<&str> {
        match self {
            Choice::Record { record_id } | Choice::Override { record_id } => Some(record_id),
            Choice::NoMatch | Choice::Skipped => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchDecision {
    pub session_id: String,
    pub paper_id: String,
    pub key: String,
    pub choice: Choice,
    pub decided_by: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSession {
    pub session_id: String,
    pub paper_id: String,
    pub workflow: Workflow,
    pub items: Vec<ReviewItem>,
    /// Every decision ever made, oldest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<MatchDecision>,
}

pub fn session_id(paper_id: &str, workflow: Workflow) -> String {
    format!("{paper_id}.{workflow}")
}

impl ReviewSession {
    pub fn new(paper_id: impl Into<String>, workflow: Workflow, items: Vec<ReviewItem>) -> Self {
        let paper_id = paper_id.into();
        ReviewSession {
            session_id: session_id(&paper_id, workflow),
            paper_id,
            workflow,
            items,
            history: Vec::new(),
        }
    }

    pub fn item(&self, key: &str) -> Option<&ReviewItem> {
        self.items.iter().find(|i| i.key == key)
    }

    /// The latest decision for `key`.
    pub fn decision(&self, key: &str) -> Option<&MatchDecision> {
        self.history.iter().rev().find(|d| d.key == key)
    }

    pub fn decided_count(&self) -> usize {
        self.items.iter().filter(|i| self.decision(&i.key).is_some()).count()
    }

    pub fn status(&self) -> SessionStatus {
        if self.decided_count() == self.items.len() {
            SessionStatus::Completed
        } else {
            SessionStatus::Open
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn title_index(records: &[DatasetRecord]) -> HashMap<&str, &str> {
    records.iter().map(|r| (r.id.as_str(), r.title.as_str())).collect()
}

fn ranked_index(ranked: &[RankedList]) -> HashMap<(&str, &str), &RankedList> {
    ranked
        .iter()
        .map(|l| ((l.paper_id.as_str(), l.mention.as_str()), l))
        .collect()
}

/// One item per mention holding the first `cap` ranked candidates.
pub fn per_reference_items(
    mentions: &[ReferenceMention],
    ranked: &[RankedList],
    records: &[DatasetRecord],
    cap: usize,
) -> Vec<ReviewItem> {
    let titles = title_index(records);
    let ranked = ranked_index(ranked);
    mentions
        .iter()
        .map(|m| {
            let key = m.key();
            let candidates = ranked
                .get(&(m.paper_id.as_str(), key.as_str()))
                .map(|l| {
                    l.candidates
                        .iter()
                        .take(cap)
                        .map(|c| CandidateView {
                            record_id: c.record_id.clone(),
                            title: titles.get(c.record_id.as_str()).unwrap_or(&"").to_string(),
                            score: c.base_score,
                            occurrences: None,
                        })
                        .collect()
                })
                .unwrap_or_default();
            ReviewItem {
                key,
                feature: m.feature.clone(),
                kind: m.kind,
                candidates,
                mentions: vec![m.into()],
            }
        })
        .collect()
}

/// One item per feature. Each member mention contributes its top
/// `caps.per_reference` list; records are ordered by how many of these
/// lists hold them (most first), then by best score, then by id, and the
/// first `caps.per_feature` are kept.
pub fn per_feature_items(
    mentions: &[ReferenceMention],
    ranked: &[RankedList],
    records: &[DatasetRecord],
    caps: Caps,
) -> Vec<ReviewItem> {
    let titles = title_index(records);
    let ranked = ranked_index(ranked);
    let mut groups: BTreeMap<&str, Vec<&ReferenceMention>> = BTreeMap::new();
    for m in mentions {
        groups.entry(m.feature.as_str()).or_default().push(m);
    }

    groups
        .into_iter()
        .map(|(feature, members)| {
            // record id -> (occurrences, best score)
            let mut tally: HashMap<&str, (usize, f64)> = HashMap::new();
            for m in &members {
                let key = m.key();
                let Some(list) = ranked.get(&(m.paper_id.as_str(), key.as_str())) else {
                    continue;
                };
                for c in list.candidates.iter().take(caps.per_reference) {
                    let slot = tally.entry(c.record_id.as_str()).or_insert((0, f64::NEG_INFINITY));
                    slot.0 += 1;
                    slot.1 = slot.1.max(c.base_score);
                }
            }
            let mut pooled: Vec<(&str, usize, f64)> = tally.into_iter().map(|(id, (n, s))| (id, n, s)).collect();
            pooled.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(b.0)));
            pooled.truncate(caps.per_feature);
            ReviewItem {
                key: feature.to_string(),
                feature: feature.to_string(),
                kind: members[0].kind,
                candidates: pooled
                    .into_iter()
                    .map(|(id, n, s)| CandidateView {
                        record_id: id.to_string(),
                        title: titles.get(id).unwrap_or(&"").to_string(),
                        score: s,
                        occurrences: Some(n),
                    })
                    .collect(),
                mentions: members.iter().map(|m| MentionRef::from(*m)).collect(),
            }
        })
        .collect()
}

/// Builds the review session of one paper for `workflow`.
pub fn build_session(
    paper_id: &str,
    workflow: Workflow,
    mentions: &[ReferenceMention],
    ranked: &[RankedList],
    records: &[DatasetRecord],
    caps: Caps,
) -> ReviewSession {
    let mentions: Vec<ReferenceMention> = mentions.iter().filter(|m| m.paper_id == paper_id).cloned().collect();
    let items = match workflow {
        Workflow::PerReference => per_reference_items(&mentions, ranked, records, caps.per_reference),
        Workflow::PerFeature => per_feature_items(&mentions, ranked, records, caps),
    };
    ReviewSession::new(paper_id, workflow, items)
}

/// Records an expert choice for `key`. A later decision on the same key
/// supersedes the earlier one; both stay in the history.
pub fn record_decision(
    session: &mut ReviewSession,
    key: &str,
    choice: Choice,
    decided_by: &str,
    timestamp: &str,
) -> Result<MatchDecision> {
    let item = session.item(key).ok_or_else(|| Error::UnknownItem {
        session: session.session_id.clone(),
        key: key.to_string(),
    })?;
    match &choice {
        Choice::Record { record_id } if !item.candidates.iter().any(|c| &c.record_id == record_id) => {
            return Err(Error::InvalidDecision(format!(
                "{record_id} is not a candidate of {key}; use an override to pick another record"
            )));
        }
        Choice::Override { record_id } if record_id.trim().is_empty() => {
            return Err(Error::InvalidDecision("override with an empty record id".into()));
        }
        _ => {}
    }
    let decision = MatchDecision {
        session_id: session.session_id.clone(),
        paper_id: session.paper_id.clone(),
        key: key.to_string(),
        choice,
        decided_by: decided_by.to_string(),
        timestamp: timestamp.to_string(),
    };
    session.history.push(decision.clone());
    Ok(decision)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRow {
    pub paper_id: String,
    pub start: usize,
    pub end: usize,
    pub feature: String,
    pub record_id: String,
    pub doi: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapRow {
    pub paper_id: String,
    pub key: String,
    pub feature: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinksDocument {
    pub session_id: String,
    pub links: Vec<LinkRow>,
    pub gaps: Vec<GapRow>,
}

impl LinksDocument {
    /// Tab-separated links table followed by a `# gaps` section.
    pub fn to_table(&self) -> String {
        let mut out = String::from("paper_id\tstart\tend\tfeature\trecord_id\tdoi\n");
        for l in &self.links {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                l.paper_id,
                l.start,
                l.end,
                l.feature,
                l.record_id,
                l.doi.as_deref().unwrap_or("")
            ));
        }
        out.push_str("\n# gaps\npaper_id\tkey\tfeature\n");
        for g in &self.gaps {
            out.push_str(&format!("{}\t{}\t{}\n", g.paper_id, g.key, g.feature));
        }
        out
    }
}

fn doi_of(record_id: &str) -> Option<String> {
    record_id.starts_with("10.").then(|| record_id.to_string())
}

/// Links for every decided mention; a per-feature decision applies to all
/// mentions of its feature. No-match items are listed as gaps, skipped
/// items are left out.
pub fn export_links(session: &ReviewSession) -> Result<LinksDocument> {
    if session.status() != SessionStatus::Completed {
        return Err(Error::IncompleteSession(session.session_id.clone()));
    }
    let mut links = Vec::new();
    let mut gaps = Vec::new();
    for item in &session.items {
        let decision = session.decision(&item.key).expect("completed session");
        match &decision.choice {
            Choice::Record { record_id } | Choice::Override { record_id } => {
                links.extend(item.mentions.iter().map(|m| LinkRow {
                    paper_id: session.paper_id.clone(),
                    start: m.start,
                    end: m.end,
                    feature: item.feature.clone(),
                    record_id: record_id.clone(),
                    doi: doi_of(record_id),
                }));
            }
            Choice::NoMatch => gaps.push(GapRow {
                paper_id: session.paper_id.clone(),
                key: item.key.clone(),
                feature: item.feature.clone(),
            }),
            Choice::Skipped => {}
        }
    }
    links.sort_by(|a, b| (a.start, a.end, &a.feature).cmp(&(b.start, b.end, &b.feature)));
    Ok(LinksDocument {
        session_id: session.session_id.clone(),
        links,
        gaps,
    })
}

// ---------------------------------------------------------------------------
// Persistence

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum SessionEvent {
    Created { session: ReviewSession },
    Decision { decision: MatchDecision },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub paper_id: String,
    pub workflow: Workflow,
    pub status: SessionStatus,
    pub items: usize,
    pub decided: usize,
}

impl From<&ReviewSession> for SessionSummary {
    fn from(s: &ReviewSession) -> Self {
        SessionSummary {
            session_id: s.session_id.clone(),
            paper_id: s.paper_id.clone(),
            workflow: s.workflow,
            status: s.status(),
            items: s.items.len(),
            decided: s.decided_count(),
        }
    }
}

/// A directory of session event logs, one `<session_id>.jsonl` per
/// session. Writes to one session are serialized; every append is synced
/// to disk before it returns.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
    locks: Arc<Mutex<HashMap<String, Arc<Mutex<()>>>>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(SessionStore {
            dir,
            locks: Arc::default(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf> {
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(Error::UnknownSession(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.jsonl")))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("session lock table poisoned");
        locks.entry(id.to_string()).or_default().clone()
    }

    /// Writes a fresh log for `session`. An existing log is replaced only
    /// if it holds no decisions.
    pub fn create(&self, session: &ReviewSession) -> Result<()> {
        let lock = self.lock(&session.session_id);
        let _guard = lock.lock().expect("session lock poisoned");
        let path = self.path(&session.session_id)?;
        if path.exists() {
            let existing = self.replay(&session.session_id)?;
            if !existing.history.is_empty() {
                return Err(Error::SessionExists(session.session_id.clone()));
            }
        }
        let mut fresh = session.clone();
        let history = std::mem::take(&mut fresh.history);
        let mut body = serde_json::to_string(&SessionEvent::Created { session: fresh })?;
        body.push('\n');
        for decision in history {
            body.push_str(&serde_json::to_string(&SessionEvent::Decision { decision })?);
            body.push('\n');
        }
        let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        file.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
        file.sync_all().map_err(|e| Error::io(&path, e))
    }

    pub fn load(&self, id: &str) -> Result<ReviewSession> {
        let lock = self.lock(id);
        let _guard = lock.lock().expect("session lock poisoned");
        self.replay(id)
    }

    fn replay(&self, id: &str) -> Result<ReviewSession> {
        let path = self.path(id)?;
        let file = File::open(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::UnknownSession(id.to_string()),
            _ => Error::io(&path, e),
        })?;
        let lines: Vec<String> = BufReader::new(file)
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(&path, e))?;
        let mut session: Option<ReviewSession> = None;
        let last = lines.len().saturating_sub(1);
        for (n, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event = match serde_json::from_str::<SessionEvent>(line) {
                Ok(e) => e,
                // a torn final write is dropped; earlier events are intact
                Err(e) if n == last && session.is_some() => {
                    warn!("{}:{}: ignoring incomplete trailing event: {e}", path.display(), n + 1);
                    break;
                }
                Err(e) => {
                    return Err(Error::Parse {
                        path: path.clone(),
                        line: n + 1,
                        message: e.to_string(),
                    })
                }
            };
            match (event, session.as_mut()) {
                (SessionEvent::Created { session: s }, None) => session = Some(s),
                (SessionEvent::Decision { decision }, Some(s)) => s.history.push(decision),
                _ => {
                    return Err(Error::Parse {
                        path: path.clone(),
                        line: n + 1,
                        message: "event out of order".into(),
                    })
                }
            }
        }
        session.ok_or_else(|| Error::Parse {
            path,
            line: 1,
            message: "empty session log".into(),
        })
    }

    /// Validates and appends a decision.
    pub fn decide(&self, id: &str, key: &str, choice: Choice, decided_by: &str) -> Result<MatchDecision> {
        let lock = self.lock(id);
        let _guard = lock.lock().expect("session lock poisoned");
        let mut session = self.replay(id)?;
        let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        let decision = record_decision(&mut session, key, choice, decided_by, &timestamp)?;
        let path = self.path(id)?;
        let mut line = serde_json::to_string(&SessionEvent::Decision {
            decision: decision.clone(),
        })?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        file.sync_data().map_err(|e| Error::io(&path, e))?;
        Ok(decision)
    }

    /// Session ids in lexical order.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))? {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".jsonl") {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn summaries(&self) -> Result<Vec<SessionSummary>> {
        self.list()?
            .iter()
            .map(|id| self.load(id).map(|s| SessionSummary::from(&s)))
            .collect()
    }
}
