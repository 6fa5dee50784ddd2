//! Per-phenomenon edit rules.

use std::collections::BTreeSet;

use rand::Rng;

use super::tables::{tables, Tables};
use super::Edit;
use crate::text;

/// A word token. `head` excludes a trailing clitic (`He` in `He's`); negative
/// contractions (`doesn't`) keep the whole word as head.
#[derive(Debug, Clone)]
pub(crate) struct Tok<'a> {
    pub start: usize,
    pub end: usize,
    pub head_end: usize,
    pub head: &'a str,
    pub lower: String,
}

pub(crate) fn tokenize(sentence: &str) -> Vec<Tok<'_>> {
    text::word_spans(sentence)
        .into_iter()
        .map(|(start, end)| {
            let word = &sentence[start..end];
            let normalized = word.replace('\u{2019}', "'").to_lowercase();
            let head_len = if normalized.ends_with("n't") {
                word.len()
            } else {
                word.find(['\'', '\u{2019}']).unwrap_or(word.len())
            };
            let head = &word[..head_len];
            Tok {
                start,
                end,
                head_end: start + head_len,
                head,
                lower: head.replace('\u{2019}', "'").to_lowercase(),
            }
        })
        .collect()
}

/// Copies the capitalisation pattern of `source` onto `replacement`.
pub fn match_case(source: &str, replacement: &str) -> String {
    let letters: Vec<char> = source.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return replacement.to_uppercase();
    }
    if source.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        return match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        };
    }
    replacement.to_string()
}

fn edit_head(tok: &Tok<'_>, replacement: &str, rule: &str) -> Edit {
    Edit {
        start: tok.start,
        end: tok.head_end,
        original: tok.head.to_string(),
        replacement: match_case(tok.head, replacement),
        rule: rule.to_string(),
    }
}

fn is_alphabetic(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphabetic() || c == '-' || c == '\'')
}

const LY_NOUNS: &[&str] = &["family", "italy", "july", "rally", "supply", "assembly", "ally", "fly", "reply", "monopoly", "anomaly", "butterfly"];

/// Alphabetic, not a closed-class word and not an `-ly` adverb.
pub(crate) fn noun_like(t: &Tables, tok: Option<&Tok<'_>>) -> bool {
    let Some(tok) = tok else { return false };
    is_alphabetic(&tok.lower)
        && !t.function_words.contains(tok.lower.as_str())
        && !(tok.lower.ends_with("ly") && !LY_NOUNS.contains(&tok.lower.as_str()))
}

/// Followed by a noun-like word with nothing but spaces in between.
fn determiner_position(t: &Tables, sentence: &str, toks: &[Tok<'_>], i: usize) -> bool {
    let Some(next) = toks.get(i + 1) else { return false };
    sentence[toks[i].end..next.start].trim().is_empty() && noun_like(t, Some(next))
}

fn gap<'s>(sentence: &'s str, toks: &[Tok<'_>], i: usize) -> &'s str {
    let from = if i == 0 { 0 } else { toks[i - 1].end };
    &sentence[from..toks[i].start]
}

pub(crate) fn gender(sentence: &str) -> Vec<Edit> {
    let t = tables();
    let toks = tokenize(sentence);
    let mut edits = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        match tok.lower.as_str() {
            "her" => {
                if determiner_position(t, sentence, &toks, i) {
                    edits.push(edit_head(tok, "his", "her->his (determiner)"));
                } else {
                    edits.push(edit_head(tok, "him", "her->him (object)"));
                }
            }
            "his" => {
                if determiner_position(t, sentence, &toks, i) {
                    edits.push(edit_head(tok, "her", "his->her (determiner)"));
                } else {
                    edits.push(edit_head(tok, "hers", "his->hers (standalone)"));
                }
            }
            w => {
                if let Some(target) = t.gender.get(w) {
                    edits.push(edit_head(tok, target, &format!("{w}->{target}")));
                }
            }
        }
    }
    edits
}

pub(crate) fn animacy_down(sentence: &str) -> Vec<Edit> {
    let t = tables();
    let toks = tokenize(sentence);
    let mut edits = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        if tok.lower == "her" {
            if determiner_position(t, sentence, &toks, i) {
                edits.push(edit_head(tok, "its", "her->its (determiner)"));
            } else {
                edits.push(edit_head(tok, "it", "her->it (object)"));
            }
        } else if let Some(target) = t.animacy_down.get(tok.lower.as_str()) {
            edits.push(edit_head(tok, target, &format!("{}->{target}", tok.lower)));
        }
    }
    edits
}

const SUBJECT_OPENERS: &[&str] = &[
    "and", "but", "or", "so", "yet", "that", "which", "because", "since", "when", "while",
    "although", "though", "if", "unless", "until", "before", "after", "as", "where", "whereas",
    "once", "then", "however", "therefore", "thus",
];

pub(crate) fn animacy_up<R: Rng + ?Sized>(sentence: &str, rng: &mut R) -> Vec<Edit> {
    let toks = tokenize(sentence);
    if !toks.iter().any(|t| matches!(t.lower.as_str(), "it" | "its" | "itself")) {
        return Vec::new();
    }
    let female = rng.gen_bool(0.5);
    let (subj, obj, poss, refl) = if female {
        ("she", "her", "her", "herself")
    } else {
        ("he", "him", "his", "himself")
    };
    let mut edits = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        match tok.lower.as_str() {
            "it" => {
                let subject = i == 0
                    || gap(sentence, &toks, i).contains([',', ';', ':', '(', '"', '\u{201c}'])
                    || SUBJECT_OPENERS.contains(&toks[i - 1].lower.as_str());
                if subject {
                    edits.push(edit_head(tok, subj, &format!("it->{subj} (subject)")));
                } else {
                    edits.push(edit_head(tok, obj, &format!("it->{obj} (object)")));
                }
            }
            "its" => edits.push(edit_head(tok, poss, &format!("its->{poss}"))),
            "itself" => edits.push(edit_head(tok, refl, &format!("itself->{refl}"))),
            _ => {}
        }
    }
    edits
}

pub(crate) fn demonstrative(sentence: &str) -> Vec<Edit> {
    let t = tables();
    let toks = tokenize(sentence);
    let mut edits = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        if let Some(target) = t.demonstrative.get(tok.lower.as_str()) {
            let next_is_past = toks.get(i + 1).is_some_and(|n| {
                t.past_to_base.contains_key(n.lower.as_str()) || regular_base(t, &n.lower).is_some()
            });
            if tok.head.len() == tok.end - tok.start && !next_is_past && determiner_position(t, sentence, &toks, i) {
                edits.push(edit_head(tok, target, &format!("{}->{target}", tok.lower)));
            }
        }
    }
    edits
}

pub(crate) fn conjunction(sentence: &str) -> Vec<Edit> {
    let t = tables();
    let toks = tokenize(sentence);
    let mut best: Option<(u8, usize, usize, &str)> = None;
    for (i, _) in toks.iter().enumerate() {
        for (words, target, priority) in &t.conjunctions {
            let n = words.len();
            if i + n > toks.len() {
                continue;
            }
            let matches = (0..n).all(|k| {
                toks[i + k].lower == words[k]
                    && toks[i + k].head_end == toks[i + k].end
                    && (k == 0 || sentence[toks[i + k - 1].end..toks[i + k].start].trim().is_empty())
            });
            if matches && best.is_none_or(|(p, ..)| *priority < p) {
                best = Some((*priority, i, n, target));
            }
        }
    }
    let Some((_, i, n, target)) = best else {
        return Vec::new();
    };
    let start = toks[i].start;
    let end = toks[i + n - 1].end;
    let original = &sentence[start..end];
    vec![Edit {
        start,
        end,
        original: original.to_string(),
        replacement: match_case(toks[i].head, target),
        rule: format!("{}->{target}", original.to_lowercase()),
    }]
}

const PARTICIPLE_CONTEXT: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "has", "have", "had", "having",
    "get", "gets", "got", "getting", "to", "a", "an", "the", "this", "that", "these", "those",
    "his", "her", "its", "their", "our", "my", "your", "some", "any", "each", "every", "no",
    "newly", "recently", "not",
];

/// Base form of a regular `-ed` word, if the lexicon knows it.
pub(crate) fn regular_base(t: &Tables, lower: &str) -> Option<&'static str> {
    let stem = lower.strip_suffix("ed")?;
    if stem.len() < 2 {
        return None;
    }
    let mut candidates = Vec::new();
    if let Some(s) = stem.strip_suffix('i') {
        candidates.push(format!("{s}y"));
    }
    candidates.push(format!("{stem}e"));
    candidates.push(stem.to_string());
    let b = stem.as_bytes();
    if b.len() >= 3 && b[b.len() - 1] == b[b.len() - 2] {
        candidates.push(stem[..stem.len() - 1].to_string());
    }
    candidates
        .into_iter()
        .find_map(|c| t.bases.get(c.as_str()).copied())
}

/// Base form when `toks[i]` reads as a finite past-tense verb.
pub(crate) fn past_verb_base(t: &Tables, toks: &[Tok<'_>], i: usize) -> Option<&'static str> {
    let tok = &toks[i];
    if !is_alphabetic(&tok.lower) || tok.head_end != tok.end {
        return None;
    }
    if i > 0 && tok.head.chars().next().is_some_and(char::is_uppercase) {
        return None;
    }
    if i > 0 && PARTICIPLE_CONTEXT.contains(&toks[i - 1].lower.as_str()) {
        return None;
    }
    let next = toks.get(i + 1).map(|n| n.lower.as_str());
    if next == Some("by") {
        return None;
    }
    if matches!(tok.lower.as_str(), "was" | "were" | "had" | "did") {
        return None;
    }
    let base = match t.past_to_base.get(tok.lower.as_str()) {
        Some(&b) => b,
        None => regular_base(t, &tok.lower)?,
    };
    if base == "use" && next == Some("to") {
        return None;
    }
    Some(base)
}

fn span_edit(sentence: &str, start: usize, end: usize, replacement: String, rule: &str) -> Edit {
    Edit {
        start,
        end,
        original: sentence[start..end].to_string(),
        replacement,
        rule: rule.to_string(),
    }
}

fn followed_by_not(sentence: &str, toks: &[Tok<'_>], i: usize) -> bool {
    toks.get(i + 1).is_some_and(|n| {
        n.lower == "not" && n.head_end == n.end && sentence[toks[i].end..n.start].trim().is_empty()
    })
}

pub(crate) fn past_to_future(sentence: &str) -> Vec<Edit> {
    let t = tables();
    let toks = tokenize(sentence);
    let mut edits = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let tok = &toks[i];
        let fixed = match tok.lower.as_str() {
            "was" | "were" => Some(("will be", "will not be")),
            "had" => Some(("will have", "will not have")),
            "did" => Some(("will", "will not")),
            _ => None,
        };
        let contraction = match tok.lower.as_str() {
            "wasn't" | "weren't" => Some("won't be"),
            "hadn't" => Some("won't have"),
            "didn't" => Some("won't"),
            _ => None,
        };
        if let Some((plain, negated)) = fixed {
            if tok.head_end == tok.end && followed_by_not(sentence, &toks, i) {
                let end = toks[i + 1].end;
                edits.push(span_edit(
                    sentence,
                    tok.start,
                    end,
                    match_case(tok.head, negated),
                    &format!("{} not->{negated}", tok.lower),
                ));
                i += 2;
                continue;
            }
            edits.push(edit_head(tok, plain, &format!("{}->{plain}", tok.lower)));
        } else if let Some(target) = contraction {
            edits.push(edit_head(tok, target, &format!("{}->{target}", tok.lower)));
        } else if let Some(base) = past_verb_base(t, &toks, i) {
            let replacement = format!("will {base}");
            edits.push(edit_head(tok, &replacement, &format!("{}->{replacement}", tok.lower)));
        }
        i += 1;
    }
    edits
}

const PLURAL_SUBJECTS: &[&str] = &["i", "you", "we", "they"];
const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "his", "her", "its", "their", "our", "my",
    "your", "some", "any", "each", "every", "no", "of", "in", "on", "at", "for", "with", "by",
];

fn third_person_base(t: &Tables, lower: &str) -> Option<&'static str> {
    let mut candidates = Vec::new();
    if let Some(s) = lower.strip_suffix("ies") {
        candidates.push(format!("{s}y"));
    }
    if let Some(s) = lower.strip_suffix("es") {
        candidates.push(s.to_string());
    }
    if let Some(s) = lower.strip_suffix('s') {
        candidates.push(s.to_string());
    }
    candidates.into_iter().find_map(|c| t.bases.get(c.as_str()).copied())
}

fn is_participle(t: &Tables, tok: Option<&Tok<'_>>) -> bool {
    let Some(tok) = tok else { return false };
    t.participles.contains(tok.lower.as_str())
        || (tok.lower.ends_with("ed") && regular_base(t, &tok.lower).is_some())
}

/// Flips the polarity of the first verb group: removes an existing negation,
/// otherwise negates the first auxiliary or finite verb.
pub(crate) fn negation(sentence: &str) -> Vec<Edit> {
    let t = tables();
    let toks = tokenize(sentence);
    for (i, tok) in toks.iter().enumerate() {
        let w = tok.lower.as_str();
        if tok.head_end != tok.end {
            continue;
        }
        if let Some(target) = t.affirm.get(w) {
            return vec![edit_head(tok, target, &format!("{w}->{target}"))];
        }
        if (t.negate.contains_key(w) || t.aux_have.contains_key(w)) && followed_by_not(sentence, &toks, i) {
            let not = &toks[i + 1];
            return vec![span_edit(sentence, tok.end, not.end, String::new(), &format!("{w} not->{w}"))];
        }
    }
    for (i, tok) in toks.iter().enumerate() {
        let w = tok.lower.as_str();
        if tok.head_end != tok.end {
            continue;
        }
        let is_have = t.aux_have.contains_key(w);
        if t.negate.contains_key(w) || is_have {
            let (target, kind) = if let Some(target) = t.negate.get(w) {
                (*target, "negate")
            } else if is_participle(t, toks.get(i + 1)) {
                (t.aux_have[w], "aux-have")
            } else {
                (t.main_have[w], "main-have")
            };
            return vec![edit_head(tok, target, &format!("{w}->{target} ({kind})"))];
        }
        if let Some(base) = past_verb_base(t, &toks, i) {
            let replacement = format!("didn't {base}");
            return vec![edit_head(tok, &replacement, &format!("{w}->{replacement}"))];
        }
        let prev = i.checked_sub(1).map(|p| toks[p].lower.as_str());
        let lowercase = tok.head.chars().next().is_some_and(char::is_lowercase);
        if i > 0 && lowercase && !prev.is_some_and(|p| DETERMINERS.contains(&p)) {
            if PLURAL_SUBJECTS.contains(&prev.unwrap_or("")) && t.bases.contains(w) {
                let replacement = format!("don't {w}");
                return vec![edit_head(tok, &replacement, &format!("{w}->{replacement}"))];
            }
            let subject_like = prev.is_some_and(|p| matches!(p, "he" | "she" | "it" | "who" | "which" | "that"))
                || (i > 0 && toks[i - 1].head.chars().next().is_some_and(char::is_uppercase));
            if subject_like {
                if let Some(base) = third_person_base(t, w) {
                    let replacement = format!("doesn't {base}");
                    return vec![edit_head(tok, &replacement, &format!("{w}->{replacement}"))];
                }
            }
        }
    }
    Vec::new()
}

fn parse_number(s: &str) -> Option<(String, bool)> {
    // digits with optional thousands commas and at most one decimal point
    if !s.starts_with(|c: char| c.is_ascii_digit()) || !s.ends_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    if !s.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.') {
        return None;
    }
    if s.matches('.').count() > 1 {
        return None;
    }
    let (int, frac) = match s.split_once('.') {
        Some((a, b)) => (a, Some(b)),
        None => (s, None),
    };
    if int.contains(',') {
        let groups: Vec<&str> = int.split(',').collect();
        if groups[0].is_empty() || groups[0].len() > 3 || groups[1..].iter().any(|g| g.len() != 3) {
            return None;
        }
    }
    let digits = int.replace(',', "");
    Some((
        match frac {
            Some(f) => format!("{digits}.{f}"),
            None => digits,
        },
        frac.is_some(),
    ))
}

pub(crate) fn number(sentence: &str) -> Vec<Edit> {
    let t = tables();
    let toks = tokenize(sentence);
    let mut edits = Vec::new();
    let mut last_era: Option<u32> = None;
    for (i, tok) in toks.iter().enumerate() {
        let Some((digits, decimal)) = parse_number(tok.head) else {
            continue;
        };
        let gap_before = gap(sentence, &toks, i);
        if gap_before.ends_with(['$', '\u{a3}', '\u{20ac}', '#']) {
            continue;
        }
        if i > 0 && gap_before.trim().is_empty() {
            let prev = &toks[i - 1];
            if prev.head.chars().next().is_some_and(char::is_uppercase) && parse_number(prev.head).is_none() {
                continue;
            }
            if prev.lower == "no" {
                continue;
            }
        }
        let after = &sentence[tok.end..];
        let next = toks.get(i + 1);
        let adjacent_next = next.filter(|n| sentence[tok.end..n.start].trim().is_empty());

        if after.starts_with('%') || adjacent_next.is_some_and(|n| n.lower == "percent") {
            let value: f64 = digits.parse().unwrap_or(0.0);
            let bumped = format_number(value + 100.0, decimal);
            edits.push(span_edit(sentence, tok.start, tok.head_end, bumped, "percent+100"));
            continue;
        }
        if let Some(unit) = adjacent_next {
            if let Some(target) = t.units.get(unit.head) .or_else(|| t.units.get(unit.lower.as_str())) {
                edits.push(Edit {
                    start: unit.start,
                    end: unit.head_end,
                    original: unit.head.to_string(),
                    replacement: target.to_string(),
                    rule: format!("unit {}->{target}", unit.head),
                });
                continue;
            }
        }
        if !decimal && tok.head.len() == 4 && !tok.head.contains(',') {
            let year: u32 = digits.parse().unwrap_or(0);
            if (1000..=2100).contains(&year) {
                let mut era = year / 10;
                if let Some(prev) = last_era {
                    if era <= prev {
                        era = prev + 1;
                    }
                }
                last_era = Some(era);
                edits.push(span_edit(sentence, tok.start, tok.head_end, format!("{era} BCE"), "year->era BCE"));
                continue;
            }
        }
        if adjacent_next.is_some_and(|n| noun_like(t, Some(n))) {
            let replacement = if decimal || digits.ends_with('0') {
                format!("-{}", tok.head)
            } else if digits.len() == 1 {
                format!("0.{digits}")
            } else {
                let (a, b) = digits.split_at(digits.len() - 1);
                format!("{a}.{b}")
            };
            edits.push(span_edit(sentence, tok.start, tok.head_end, replacement, "count->fraction"));
        }
    }
    edits
}

fn format_number(value: f64, decimal: bool) -> String {
    if decimal {
        let s = format!("{value:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{}", value as i64)
    }
}

/// Words each phenomenon may introduce.
pub(crate) fn target_vocabulary_ok(phenomenon: super::Phenomenon, replacement: &str) -> bool {
    use super::Phenomenon::*;
    let t = tables();
    let words: Vec<String> = replacement.split_whitespace().map(str::to_lowercase).collect();
    let all = |set: &[&str]| words.iter().all(|w| set.contains(&w.as_str()));
    match phenomenon {
        Gender => words.len() == 1 && all(&["he", "she", "him", "her", "his", "hers", "himself", "herself"]),
        AnimacyDown => words.len() == 1 && all(&["it", "its", "itself"]),
        AnimacyUp => words.len() == 1 && all(&["he", "she", "him", "her", "his", "himself", "herself"]),
        Demonstrative => words.len() == 1 && all(&["these", "those"]),
        Conjunction => {
            let targets: BTreeSet<&str> = t.conjunctions.iter().map(|(_, target, _)| *target).collect();
            targets.contains(words.join(" ").as_str())
        }
        PastToFuture => {
            matches!(words.first().map(String::as_str), Some("will" | "won't"))
                && words[1..].iter().all(|w| w == "not" || t.bases.contains(w.as_str()))
        }
        Negation => {
            let mut allowed: BTreeSet<&str> = ["not", "cannot", "doesn't", "don't", "didn't"].into_iter().collect();
            allowed.extend(t.negate.keys());
            allowed.extend(t.aux_have.keys());
            allowed.extend(t.affirm.values().flat_map(|v| v.split(' ')));
            words.iter().all(|w| allowed.contains(w.as_str()) || t.bases.contains(w.as_str()))
        }
        Number => {
            let units: BTreeSet<&str> = t.units.values().flat_map(|v| v.split(' ')).collect();
            words.iter().all(|w| {
                w == "bce"
                    || units.contains(w.as_str())
                    || w.trim_start_matches('-').chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
            })
        }
    }
}
