//! Induction of the feature dictionary from registry titles.
//!
//! Abbreviations are picked out of titles by capitalization heuristics and
//! pruned against general-language word lists; special phrases are built
//! around a small, expert-curated list of seed terms ("Study", "Survey",
//! "Poll", ...). Neither step is learned, so the output is fully determined
//! by the titles and the word lists.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::MatchRule;
use crate::text::{tokenize, Token};

/// Punctuation an abbreviation may contain.
pub const ABBREVIATION_PUNCTUATION: [char; 5] = ['.', '-', '/', '*', '&'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Abbreviation,
    Phrase,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Abbreviation => "abbreviation",
            FeatureKind::Phrase => "phrase",
        }
    }

    /// Abbreviations carry their signal in capitalization; phrases do not.
    pub fn match_rule(self) -> MatchRule {
        match self {
            FeatureKind::Abbreviation => MatchRule::CaseSensitive,
            FeatureKind::Phrase => MatchRule::CaseInsensitive,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "abbreviation" => Ok(FeatureKind::Abbreviation),
            "phrase" => Ok(FeatureKind::Phrase),
            other => Err(format!("unknown feature kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub surface: String,
    pub kind: FeatureKind,
    pub source_title_ids: BTreeSet<String>,
    pub blacklisted: bool,
}

/// General-language lists used for pruning, plus the seed terms and the
/// expert blacklist.
#[derive(Debug, Clone, Default)]
pub struct WordLists {
    pub english_words: HashSet<String>,
    pub german_words: HashSet<String>,
    pub country_names: HashSet<String>,
    pub stop_words: HashSet<String>,
    pub seed_terms: BTreeSet<String>,
    pub blacklist: BTreeSet<String>,
}

const BUNDLED_ENGLISH: &str = include_str!("../data/wordlists/english.txt");
const BUNDLED_GERMAN: &str = include_str!("../data/wordlists/german.txt");
const BUNDLED_COUNTRIES: &str = include_str!("../data/wordlists/countries.txt");
const BUNDLED_STOPWORDS: &str = include_str!("../data/wordlists/stopwords.txt");
const BUNDLED_SEEDS: &str = include_str!("../data/wordlists/seeds.txt");

pub fn parse_list(content: &str) -> impl Iterator<Item = &str> {
    content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn lowercase_set(content: &str) -> HashSet<String> {
    parse_list(content).map(str::to_lowercase).collect()
}

fn read_list(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Config(format!("missing word list {}", path.display()))
        } else {
            Error::io(path, e)
        }
    })
}

impl WordLists {
    /// The lists shipped with the crate: English and German vocabularies,
    /// country names in both languages, stop words and seed terms. The
    /// blacklist starts empty.
    pub fn bundled() -> Self {
        WordLists {
            english_words: lowercase_set(BUNDLED_ENGLISH),
            german_words: lowercase_set(BUNDLED_GERMAN),
            country_names: lowercase_set(BUNDLED_COUNTRIES),
            stop_words: lowercase_set(BUNDLED_STOPWORDS),
            seed_terms: parse_list(BUNDLED_SEEDS).map(String::from).collect(),
            blacklist: BTreeSet::new(),
        }
    }

    /// Loads `english.txt`, `german.txt`, `countries.txt` and
    /// `stopwords.txt` from `dir`; all four are required. `seeds.txt` and
    /// `blacklist.txt` are read when present.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut lists = WordLists {
            english_words: lowercase_set(&read_list(&dir.join("english.txt"))?),
            german_words: lowercase_set(&read_list(&dir.join("german.txt"))?),
            country_names: lowercase_set(&read_list(&dir.join("countries.txt"))?),
            stop_words: lowercase_set(&read_list(&dir.join("stopwords.txt"))?),
            ..Default::default()
        };
        let seeds = dir.join("seeds.txt");
        if seeds.exists() {
            lists.load_seeds(&seeds)?;
        }
        let blacklist = dir.join("blacklist.txt");
        if blacklist.exists() {
            lists.load_blacklist(&blacklist)?;
        }
        Ok(lists)
    }

    pub fn load_seeds(&mut self, path: &Path) -> Result<()> {
        self.seed_terms = parse_list(&read_list(path)?).map(String::from).collect();
        Ok(())
    }

    pub fn load_blacklist(&mut self, path: &Path) -> Result<()> {
        self.blacklist = load_blacklist(path)?;
        Ok(())
    }

    fn is_general_word(&self, lower: &str) -> bool {
        self.english_words.contains(lower) || self.german_words.contains(lower) || self.country_names.contains(lower)
    }

    fn is_stop_word(&self, token: &str) -> bool {
        self.stop_words.contains(&token.to_lowercase())
    }
}

/// Reads a blacklist file (one surface per line). A missing file is an
/// empty blacklist.
pub fn load_blacklist(path: &Path) -> Result<BTreeSet<String>> {
    match fs::read_to_string(path) {
        Ok(content) => Ok(parse_list(&content).map(String::from).collect()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeSet::new()),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// True iff `token` is a canonical Roman numeral between I and MMMCMXCIX,
/// written either all in upper case or all in lower case.
pub fn is_roman_numeral(token: &str) -> bool {
    let upper = if token.chars().all(|c| c.is_ascii_uppercase()) {
        token.to_string()
    } else if token.chars().all(|c| c.is_ascii_lowercase()) {
        token.to_ascii_uppercase()
    } else {
        return false;
    };
    if upper.is_empty() || upper.len() > 15 {
        return false;
    }
    let value = |c: char| match c {
        'I' => Some(1),
        'V' => Some(5),
        'X' => Some(10),
        'L' => Some(50),
        'C' => Some(100),
        'D' => Some(500),
        'M' => Some(1000),
        _ => None,
    };
    let Some(digits) = upper.chars().map(value).collect::<Option<Vec<u32>>>() else {
        return false;
    };
    let mut total = 0u32;
    for (i, &d) in digits.iter().enumerate() {
        match digits.get(i + 1) {
            Some(&next) if next > d => total = total.wrapping_sub(d),
            _ => total = total.wrapping_add(d),
        }
    }
    (1..=3999).contains(&total) && to_roman(total) == upper
}

fn to_roman(mut n: u32) -> String {
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
    for &(value, glyph) in &TABLE {
        while n >= value {
            out.push_str(glyph);
            n -= value;
        }
    }
    out
}

/// Every cased character is upper case and there are at least two of them.
fn is_all_caps(s: &str) -> bool {
    let mut cased = 0;
    for c in s.chars() {
        if c.is_lowercase() {
            return false;
        }
        if c.is_uppercase() {
            cased += 1;
        }
    }
    cased >= 2
}

/// Has an upper-case character somewhere after the first position.
fn capitalized_beyond_first(token: &str) -> bool {
    token.chars().skip(1).any(char::is_uppercase)
}

/// Checks shared by every abbreviation candidate: at least two
/// characters, some letter, not digit-initial, not a Roman numeral.
fn plausible_token(token: &str) -> bool {
    token.chars().count() >= 2
        && token.chars().any(char::is_alphabetic)
        && !token.chars().next().is_some_and(|c| c.is_numeric())
        && !is_roman_numeral(token)
}

fn punctuation_allowed(token: &str) -> bool {
    token
        .chars()
        .all(|c| c.is_alphanumeric() || ABBREVIATION_PUNCTUATION.contains(&c))
}

/// "News/ESPN": a slash or hyphen compound with a part that is lower case
/// apart from its first letter.
fn has_plain_word_part(token: &str) -> bool {
    token.contains(['/', '-'])
        && token
            .split(['/', '-'])
            .any(|part| part.chars().any(char::is_alphabetic) && !capitalized_beyond_first(part))
}

/// Splits a title at '(' and at free-standing dashes and returns the
/// pieces that are followed by such a delimiter. Hyphens inside words
/// ("Mid-Term") are not delimiters.
fn pieces_before_delimiters(title: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = title.char_indices().collect();
    let mut pieces = Vec::new();
    let mut from = 0;
    for (k, &(i, c)) in chars.iter().enumerate() {
        let is_delim = match c {
            '(' => true,
            '-' | '–' | '—' => {
                let prev = k.checked_sub(1).map(|p| chars[p].1);
                let next = chars.get(k + 1).map(|&(_, n)| n);
                !(prev.is_some_and(char::is_alphanumeric) && next.is_some_and(char::is_alphanumeric))
            }
            _ => false,
        };
        if is_delim {
            pieces.push(&title[from..i]);
            from = i + c.len_utf8();
        }
    }
    pieces
}

/// Extracts abbreviation candidates from `(id, title)` pairs.
pub fn extract_abbreviations<'a, I>(titles: I, lists: &WordLists) -> Vec<DictionaryEntry>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let titles: Vec<(&str, &str)> = titles.into_iter().collect();
    let per_title: Vec<Vec<&str>> = titles
        .par_iter()
        .map(|&(_, title)| abbreviations_in_title(title, lists))
        .collect();
    merge(
        titles.iter().map(|t| t.0).zip(per_title),
        FeatureKind::Abbreviation,
        false,
    )
}

fn abbreviations_in_title<'t>(title: &'t str, lists: &WordLists) -> Vec<&'t str> {
    if is_all_caps(title) {
        return tokenize(title)
            .into_iter()
            .map(|t| t.text)
            .filter(|t| {
                plausible_token(t)
                    && punctuation_allowed(t)
                    && !has_plain_word_part(t)
                    && !lists.is_general_word(&t.to_lowercase())
                    && !lists.is_stop_word(t)
            })
            .collect();
    }

    let head = title.split(':').next().unwrap_or(title);
    let mut candidates: Vec<&str> = tokenize(head)
        .into_iter()
        .map(|t| t.text)
        .filter(|t| capitalized_beyond_first(t) && plausible_token(t))
        .collect();
    for piece in pieces_before_delimiters(head) {
        if let [single] = tokenize(piece).as_slice() {
            if plausible_token(single.text) {
                candidates.push(single.text);
            }
        }
    }

    let mut seen = HashSet::new();
    candidates
        .into_iter()
        .filter(|t| punctuation_allowed(t))
        .filter(|t| !has_plain_word_part(t))
        .filter(|t| capitalized_beyond_first(t) || !lists.is_general_word(&t.to_lowercase()))
        .filter(|t| seen.insert(*t))
        .collect()
}

/// Derives special phrases around the seed terms.
///
/// Three shapes are recognised in each title: a single token that is a
/// compound ending in a seed term ("Singularisierungsstudie"); "Survey of"
/// or "Study of" followed by one non-stop-word token ("Survey of Hunting");
/// and two adjacent tokens of which one is a seed term and the other is not
/// a stop word ("Exit Poll").
pub fn derive_phrases<'a, I>(titles: I, lists: &WordLists) -> Result<Vec<DictionaryEntry>>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    if lists.seed_terms.is_empty() {
        return Err(Error::Config("seed term list is empty".into()));
    }
    let seeds: Vec<String> = lists.seed_terms.iter().map(|s| s.to_lowercase()).collect();
    let titles: Vec<(&str, &str)> = titles.into_iter().collect();
    let per_title: Vec<Vec<String>> = titles
        .par_iter()
        .map(|&(_, title)| phrases_in_title(title, &seeds, lists))
        .collect();
    Ok(merge(
        titles.iter().map(|t| t.0).zip(per_title),
        FeatureKind::Phrase,
        true,
    ))
}

fn phrases_in_title(title: &str, seeds: &[String], lists: &WordLists) -> Vec<String> {
    let tokens = tokenize(title);
    let lower: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let is_seed = |l: &str| seeds.iter().any(|s| s == l);
    let content_word =
        |t: &Token<'_>| t.text.chars().next().is_some_and(char::is_alphabetic) && !lists.is_stop_word(t.text);
    let adjacent = |a: &Token<'_>, b: &Token<'_>| title[a.end..b.start].chars().all(char::is_whitespace);

    let mut out = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        let l = &lower[i];
        let l_len = l.chars().count();
        if seeds
            .iter()
            .any(|s| l_len > s.chars().count() && l.ends_with(s.as_str()))
            && tok.text.chars().all(char::is_alphabetic)
        {
            out.push(tok.text.to_string());
        }

        if (l == "survey" || l == "study") && i + 2 < tokens.len() && lower[i + 1] == "of" {
            let (of, next) = (&tokens[i + 1], &tokens[i + 2]);
            if adjacent(tok, of) && adjacent(of, next) && content_word(next) {
                out.push(format!("{} {} {}", tok.text, of.text, next.text));
            }
        }

        if let Some(next) = tokens.get(i + 1) {
            if adjacent(tok, next) {
                let pair_ok = (is_seed(l) && content_word(next)) || (is_seed(&lower[i + 1]) && content_word(tok));
                if pair_ok {
                    out.push(format!("{} {}", tok.text, next.text));
                }
            }
        }
    }
    out
}

/// Deduplicates per-title candidates by surface (case-insensitively for
/// phrases, keeping the first spelling seen) and merges source ids.
fn merge<'a, S, I>(per_title: I, kind: FeatureKind, fold_case: bool) -> Vec<DictionaryEntry>
where
    S: AsRef<str>,
    I: IntoIterator<Item = (&'a str, Vec<S>)>,
{
    let mut by_key: HashMap<String, DictionaryEntry> = HashMap::new();
    for (id, surfaces) in per_title {
        for surface in surfaces {
            let surface = surface.as_ref();
            let key = if fold_case {
                surface.to_lowercase()
            } else {
                surface.to_string()
            };
            by_key
                .entry(key)
                .or_insert_with(|| DictionaryEntry {
                    surface: surface.to_string(),
                    kind,
                    source_title_ids: BTreeSet::new(),
                    blacklisted: false,
                })
                .source_title_ids
                .insert(id.to_string());
        }
    }
    let mut entries: Vec<_> = by_key.into_values().collect();
    entries.sort_by(|a, b| a.surface.cmp(&b.surface));
    entries
}

/// Flags entries whose surface is blacklisted. Nothing is removed.
pub fn apply_blacklist(mut entries: Vec<DictionaryEntry>, blacklist: &BTreeSet<String>) -> Vec<DictionaryEntry> {
    for e in &mut entries {
        e.blacklisted |= blacklist.contains(&e.surface);
    }
    entries
}

/// The full dictionary, ordered by kind and then surface.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    entries: Vec<DictionaryEntry>,
}

impl Dictionary {
    pub fn new(mut entries: Vec<DictionaryEntry>) -> Self {
        entries.sort_by(|a, b| (a.kind, &a.surface).cmp(&(b.kind, &b.surface)));
        entries.dedup_by(|b, a| {
            if a.kind == b.kind && a.surface == b.surface {
                a.source_title_ids.append(&mut b.source_title_ids);
                a.blacklisted |= b.blacklisted;
                true
            } else {
                false
            }
        });
        Dictionary { entries }
    }

    /// Abbreviations and phrases from `(id, title)` pairs, with the word
    /// lists' blacklist applied.
    pub fn build<'a, I>(titles: I, lists: &WordLists) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let titles: Vec<(&str, &str)> = titles.into_iter().collect();
        let mut entries = extract_abbreviations(titles.iter().copied(), lists);
        entries.extend(derive_phrases(titles.iter().copied(), lists)?);
        Ok(Dictionary::new(apply_blacklist(entries, &lists.blacklist)))
    }

    pub fn entries(&self) -> &[DictionaryEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<DictionaryEntry> {
        self.entries
    }

    /// Entries usable for detection.
    pub fn active(&self) -> impl Iterator<Item = &DictionaryEntry> {
        self.entries.iter().filter(|e| !e.blacklisted)
    }

    pub fn of_kind(&self, kind: FeatureKind) -> impl Iterator<Item = &DictionaryEntry> {
        self.active().filter(move |e| e.kind == kind)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Flags `surface` in every entry that carries it; returns whether any
    /// entry changed.
    pub fn blacklist(&mut self, surface: &str) -> bool {
        let mut changed = false;
        for e in self.entries.iter_mut().filter(|e| e.surface == surface) {
            changed |= !e.blacklisted;
            e.blacklisted = true;
        }
        changed
    }

    pub fn apply_blacklist(self, blacklist: &BTreeSet<String>) -> Self {
        Dictionary {
            entries: apply_blacklist(self.entries, blacklist),
        }
    }

    /// Serializes as one tab-separated line per entry:
    /// `surface  kind  blacklisted(0|1)  id,id,...`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let ids: Vec<&str> = e.source_title_ids.iter().map(String::as_str).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.surface,
                e.kind,
                u8::from(e.blacklisted),
                ids.join(",")
            ));
        }
        out
    }

    pub fn parse_tsv(content: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [surface, kind, flag, ids] = fields.as_slice() else {
                return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
            };
            if surface.is_empty() {
                return Err(err("empty surface".into()));
            }
            let blacklisted = match *flag {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("bad blacklist flag {other:?}"))),
            };
            entries.push(DictionaryEntry {
                surface: surface.to_string(),
                kind: kind.parse().map_err(err)?,
                blacklisted,
                source_title_ids: ids.split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
            });
        }
        Ok(Dictionary::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&content, path)
    }

    /// Replaces the file atomically: readers see the old or the new
    /// dictionary, never a partial one.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        fs::write(&tmp, self.to_tsv()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}
