//! Plain-text processing: tokenization, rule-based sentence splitting,
//! repeat subdivision of sentences and year extraction.
//!
//! All offsets are byte offsets into the UTF-8 input and always fall on
//! character boundaries, so `&text[start..end]` is valid for every span
//! returned from this module.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{find_occurrences, MatchRule};

/// Punctuation that may appear inside a token.
pub const INTERNAL_PUNCTUATION: [char; 5] = ['.', '-', '/', '&', '*'];

/// Lowest and highest year recognised by [`extract_years`].
pub const YEAR_WINDOW: (i32, i32) = (1900, 2099);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

/// Tokenizes on whitespace and punctuation, keeping `. - / & *` when they
/// occur inside a token ("U.S.", "VIRGPT2.DAT", "AT&T", "News/ESPN").
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    tokenize_with(text, |c| INTERNAL_PUNCTUATION.contains(&c))
}

/// Tokenizer with a caller-chosen set of token-internal punctuation.
///
/// A token is a maximal run of alphanumeric or internal characters with
/// leading and trailing internal punctuation stripped. A trailing dot is
/// kept on initialisms such as "z.B." or "U.S." when `.` is internal.
pub fn tokenize_with<'a, F>(text: &'a str, internal: F) -> Vec<Token<'a>>
where
    F: Fn(char) -> bool,
{
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;

    let flush = |start: usize, end: usize, tokens: &mut Vec<Token<'a>>| {
        let run = &text[start..end];
        let lead = run.len() - run.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
        let trimmed = run[lead..].trim_end_matches(|c: char| !c.is_alphanumeric());
        if trimmed.is_empty() {
            return;
        }
        let tok_start = start + lead;
        let mut tok_end = tok_start + trimmed.len();
        if internal('.') && text[tok_end..end].starts_with('.') && is_initialism(trimmed) {
            tok_end += 1;
        }
        tokens.push(Token {
            text: &text[tok_start..tok_end],
            start: tok_start,
            end: tok_end,
        });
    };

    for (i, c) in text.char_indices() {
        let in_token = c.is_alphanumeric() || internal(c);
        match (in_token, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                flush(s, i, &mut tokens);
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        flush(s, text.len(), &mut tokens);
    }
    tokens
}

/// "z.B", "U.S", "e.g": dot-separated parts of at most two characters.
fn is_initialism(token: &str) -> bool {
    token.contains('.')
        && token
            .split('.')
            .all(|part| (1..=2).contains(&part.chars().count()) && part.chars().all(char::is_alphabetic))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    pub index: usize,
}

impl SentenceSpan {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Words ending in a dot that never close a sentence.
const NON_TERMINAL_ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "cf.", "vs.", "etc.", "al.", "Dr.", "Prof.", "Mr.", "Mrs.", "Ms.", "St.", "Jr.", "No.", "Nos.",
    "Vol.", "pp.", "p.", "Fig.", "Tab.", "Eq.", "approx.", "z.B.", "d.h.", "u.a.", "vgl.", "bzw.", "ca.", "Nr.", "S.",
    "Abb.", "Hrsg.", "usw.", "sog.", "ggf.", "inkl.", "evtl.", "insb.", "bspw.", "zit.",
];

const CLOSERS: &[char] = &[')', ']', '"', '\'', '»', '«', '”', '’', '“'];

/// Rule-based sentence splitter.
///
/// A sentence ends at a run of `.`, `!` or `?` (optionally followed by
/// closing quotes or brackets) that is followed by whitespace and then an
/// uppercase letter or a digit, unless the word carrying the dot is a known
/// abbreviation or an initial. A blank line always ends a sentence. Spans
/// are trimmed of surrounding whitespace.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let mut cuts = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            // blank line
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() && chars[j].1 != '\n' {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '\n' {
                cuts.push(pos);
                i = j;
                continue;
            }
        }
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                j += 1;
            }
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let followed_by_start = k > j
                && chars
                    .get(k)
                    .is_some_and(|&(_, n)| n.is_uppercase() || n.is_ascii_digit());
            if followed_by_start && !(c == '.' && ends_with_abbreviation(&text[..pos + 1])) {
                cuts.push(end);
            }
            i = j.max(i + 1);
            continue;
        }
        i += 1;
    }
    cuts.push(text.len());

    let mut spans = Vec::new();
    let mut from = 0;
    for cut in cuts {
        if cut < from {
            continue;
        }
        let piece = &text[from..cut];
        let lead = piece.len() - piece.trim_start().len();
        let trimmed = piece.trim();
        if !trimmed.is_empty() {
            let start = from + lead;
            spans.push(SentenceSpan {
                start,
                end: start + trimmed.len(),
                index: spans.len(),
            });
        }
        from = cut;
    }
    spans
}

fn ends_with_abbreviation(upto_dot: &str) -> bool {
    let word_start = upto_dot
        .rfind(|c: char| c.is_whitespace() || c == '(' || c == '[')
        .map_or(0, |p| p + upto_dot[p..].chars().next().map_or(1, char::len_utf8));
    let word = &upto_dot[word_start..];
    if NON_TERMINAL_ABBREVIATIONS.contains(&word) {
        return true;
    }
    let stem = &word[..word.len() - 1];
    // single initial ("J.") or dotted initialism ("U.S.", "z.B.")
    (stem.chars().count() == 1 && stem.chars().all(char::is_alphabetic)) || is_initialism(stem)
}

/// One piece of a sentence produced by [`subdivide_on_repeat`]; offsets are
/// relative to the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

/// Splits `sentence` so that every piece holds exactly one occurrence of
/// `feature` (case-sensitive, token-boundary matched). A single occurrence
/// returns the whole sentence.
pub fn subdivide_on_repeat<'a>(sentence: &'a str, feature: &str) -> Result<Vec<Segment<'a>>> {
    let occurrences = find_occurrences(sentence, feature, MatchRule::CaseSensitive);
    if occurrences.is_empty() {
        return Err(Error::FeatureAbsent {
            feature: feature.to_string(),
        });
    }
    Ok(subdivide_at(sentence, &occurrences)
        .into_iter()
        .map(|r| Segment {
            text: &sentence[r.clone()],
            start: r.start,
            end: r.end,
        })
        .collect())
}

/// Partitions `text` into one range per occurrence. Cuts fall between
/// consecutive occurrences: at the whitespace closest to the midpoint of the
/// gap, or at the midpoint itself when the gap has no whitespace.
#[allow(clippy::single_range_in_vec_init)]
pub fn subdivide_at(text: &str, occurrences: &[Range<usize>]) -> Vec<Range<usize>> {
    if occurrences.len() <= 1 {
        return vec![0..text.len()];
    }
    let mut cuts = Vec::with_capacity(occurrences.len() + 1);
    cuts.push(0);
    for pair in occurrences.windows(2) {
        let (gap_start, gap_end) = (pair[0].end, pair[1].start.max(pair[0].end));
        let mid = (gap_start + gap_end) / 2;
        let nearest_space = text[gap_start..gap_end]
            .char_indices()
            .filter(|(_, c)| c.is_whitespace())
            .map(|(i, _)| gap_start + i)
            .min_by_key(|&p| (p.abs_diff(mid), p));
        let cut = nearest_space.unwrap_or_else(|| floor_char_boundary(text, mid));
        cuts.push(cut);
    }
    cuts.push(text.len());
    cuts.windows(2).map(|w| w[0]..w[1]).collect()
}

fn floor_char_boundary(text: &str, mut i: usize) -> usize {
    while !text.is_char_boundary(i) {
        i -= 1;
    }
    i
}

/// A year token and its byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearToken {
    pub year: i32,
    pub offset: usize,
}

/// All standalone four-digit numbers within [`YEAR_WINDOW`]. Ranges such
/// as "1980-2012" yield both endpoints.
pub fn extract_years(text: &str) -> Vec<YearToken> {
    let bytes = text.as_bytes();
    let mut years = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i - start != 4 {
            continue;
        }
        let before_ok = text[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after_ok = text[i..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if !(before_ok && after_ok) {
            continue;
        }
        let year: i32 = text[start..i].parse().expect("four ascii digits");
        if (YEAR_WINDOW.0..=YEAR_WINDOW.1).contains(&year) {
            years.push(YearToken { year, offset: start });
        }
    }
    years
}

/// Convenience wrapper returning the year values only.
pub fn years_in(text: &str) -> Vec<i32> {
    extract_years(text).into_iter().map(|y| y.year).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(text: &str) -> Vec<&str> {
        split_sentences(text).iter().map(|s| &text[s.range()]).collect()
    }

    #[test]
    fn tokenizer_keeps_internal_punctuation() {
        let toks: Vec<_> = tokenize("Southern Education, 1880-1910: Virginia: VIRGPT2.DAT")
            .into_iter()
            .map(|t| t.text)
            .collect();
        assert_eq!(toks, ["Southern", "Education", "1880-1910", "Virginia", "VIRGPT2.DAT"]);
    }

    #[test]
    fn tokenizer_strips_brackets_and_keeps_initialisms() {
        let toks: Vec<_> = tokenize("Network (DAWN), U.S. data - News/ESPN.")
            .into_iter()
            .map(|t| t.text)
            .collect();
        assert_eq!(toks, ["Network", "DAWN", "U.S.", "data", "News/ESPN"]);
    }

    #[test]
    fn tokenizer_offsets_index_the_input() {
        let text = "Bevölkerungsumfrage (ALLBUS) – 2014";
        for t in tokenize(text) {
            assert_eq!(&text[t.start..t.end], t.text);
        }
    }

    #[test]
    fn empty_text_has_no_sentences() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   \n\t ").is_empty());
    }

    #[test]
    fn splits_two_sentences() {
        assert_eq!(texts("We use ALLBUS. It is large."), ["We use ALLBUS.", "It is large."]);
    }

    #[test]
    fn abbreviation_does_not_end_sentence() {
        assert_eq!(texts("Siehe z.B. die Studie."), ["Siehe z.B. die Studie."]);
        assert_eq!(
            texts("As noted by Dr. Smith the data e.g. ALLBUS are used."),
            ["As noted by Dr. Smith the data e.g. ALLBUS are used."]
        );
    }

    #[test]
    fn digits_start_sentences_and_blank_lines_split() {
        assert_eq!(
            texts("Data were collected. 2014 was special!\n\nMethods\nWe did it"),
            ["Data were collected.", "2014 was special!", "Methods\nWe did it"]
        );
    }

    #[test]
    fn lowercase_continuation_is_not_a_boundary() {
        assert_eq!(texts("Version 2. of the data."), ["Version 2. of the data."]);
    }

    #[test]
    fn closing_quote_belongs_to_sentence() {
        assert_eq!(
            texts("He said \"stop.\" Then left."),
            ["He said \"stop.\"", "Then left."]
        );
    }

    #[test]
    fn subdivide_two_occurrences() {
        let segs = subdivide_on_repeat("ALLBUS 1990 and ALLBUS 2014 differ.", "ALLBUS").unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].text, "ALLBUS 1990");
        assert_eq!(segs[1].text, " and ALLBUS 2014 differ.");
        assert_eq!(years_in(segs[0].text), [1990]);
        assert_eq!(years_in(segs[1].text), [2014]);
    }

    #[test]
    fn subdivide_single_occurrence_is_identity() {
        let segs = subdivide_on_repeat("PIAAC is large.", "PIAAC").unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].text, "PIAAC is large.");
    }

    #[test]
    fn subdivide_three_occurrences() {
        let segs = subdivide_on_repeat("EVS, EVS, EVS", "EVS").unwrap();
        let pieces: Vec<_> = segs.iter().map(|s| s.text).collect();
        assert_eq!(pieces, ["EVS,", " EVS,", " EVS"]);
    }

    #[test]
    fn subdivide_absent_feature_is_an_error() {
        assert!(matches!(
            subdivide_on_repeat("nothing here", "EVS"),
            Err(Error::FeatureAbsent { .. })
        ));
        // token boundaries apply
        assert!(subdivide_on_repeat("DAWNING", "DAWN").is_err());
    }

    #[test]
    fn years() {
        assert_eq!(years_in("Allbus 2014"), [2014]);
        assert!(years_in("no digits here").is_empty());
        assert_eq!(years_in("ALLBUScompact 1980-2012"), [1980, 2012]);
        assert_eq!(years_in("1980–2012"), [1980, 2012]);
        assert!(years_in("page 1234, id 20145, 1899, 2100, A2014").is_empty());
    }

    #[test]
    fn year_offsets_point_at_digits() {
        let text = "EVS 2008: Azerbaijan (EVS 2008), waves 1990-1999";
        for y in extract_years(text) {
            assert_eq!(text[y.offset..y.offset + 4].parse::<i32>().unwrap(), y.year);
        }
    }
}
