//! Sentence segmentation and tokenisation.
//!
//! The splitter breaks after `.`, `!` or `?` (plus any trailing closing
//! quotes or brackets) when the next non-space character starts a new
//! sentence: an uppercase letter, a digit or an opening quote. A period that
//! closes a known abbreviation is never a boundary. Blank lines are hard
//! boundaries.

use std::collections::HashSet;
use std::sync::OnceLock;

static ABBREVIATION_DATA: &str = include_str!("../data/abbreviations.txt");

fn abbreviations() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATION_DATA
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect()
    })
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

fn starts_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || is_opening(c)
}

/// True when the whitespace token ending at byte `end` (exclusive, the
/// period included) is a listed abbreviation.
fn ends_with_abbreviation(text: &str, end: usize) -> bool {
    let start = text[..end]
        .rfind(char::is_whitespace)
        .map(|i| i + text[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let token = text[start..end].trim_start_matches(is_opening);
    abbreviations().contains(&token.to_lowercase())
}

/// Splits `body` into trimmed sentence slices.
pub fn split_sentences(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for paragraph in paragraphs(body) {
        split_paragraph(paragraph, &mut out);
    }
    out
}

/// Blank-line separated blocks, trimmed, empty ones dropped.
pub fn paragraphs(body: &str) -> impl Iterator<Item = &str> {
    let mut blocks = Vec::new();
    let mut start = 0;
    let mut pos = 0;
    let mut line_blank_run = false;
    for line in body.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        if blank && !line_blank_run {
            blocks.push(&body[start..pos]);
        }
        if !blank && line_blank_run {
            start = pos;
        }
        line_blank_run = blank;
        pos += line.len();
    }
    if !line_blank_run {
        blocks.push(&body[start..pos]);
    }
    blocks.into_iter().map(str::trim).filter(|b| !b.is_empty())
}

fn split_paragraph<'a>(text: &'a str, out: &mut Vec<&'a str>) {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminal(chars[j].1) || is_closing(chars[j].1)) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        if j == chars.len() {
            break;
        }
        if !chars[j].1.is_whitespace() {
            i = j;
            continue;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        if k == chars.len() {
            break;
        }
        let boundary = starts_sentence(chars[k].1)
            && !(c == '.' && ends_with_abbreviation(text, pos + 1));
        if boundary {
            let sentence = text[start..end].trim();
            if !sentence.is_empty() {
                out.push(sentence);
            }
            start = chars[k].0;
        }
        i = k;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
}

/// Number of whitespace-delimited tokens.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Retrieval terms: whitespace tokens with leading/trailing punctuation
/// detached and dropped, lowercased. Internal punctuation (`don't`, `51.7`,
/// `1,200`) is kept.
pub fn terms(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Byte spans of word tokens (alphanumeric runs that may contain internal
/// `'`, `.`, `,` or `-` between alphanumerics). Used by the probe rules.
pub fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        loop {
            if j < chars.len() && chars[j].1.is_alphanumeric() {
                j += 1;
            } else if j + 1 < chars.len()
                && matches!(chars[j].1, '\'' | '\u{2019}' | '.' | ',' | '-')
                && chars[j + 1].1.is_alphanumeric()
            {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        spans.push((start, end));
        i = j;
    }
    spans
}
