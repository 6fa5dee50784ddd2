//! Rule tables shipped as data files.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

static IRREGULAR: &str = include_str!("../../data/probes/irregular_verbs.tsv");
static REGULAR: &str = include_str!("../../data/probes/regular_verbs.txt");
static FUNCTION_WORDS: &str = include_str!("../../data/probes/function_words.txt");
static GENDER: &str = include_str!("../../data/probes/gender.tsv");
static ANIMACY_DOWN: &str = include_str!("../../data/probes/animacy_down.tsv");
static DEMONSTRATIVE: &str = include_str!("../../data/probes/demonstrative.tsv");
static CONJUNCTIONS: &str = include_str!("../../data/probes/conjunctions.tsv");
static NEGATION: &str = include_str!("../../data/probes/negation.tsv");
static UNITS: &str = include_str!("../../data/probes/units.tsv");

fn rows(data: &'static str) -> impl Iterator<Item = Vec<&'static str>> {
    data.lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split('\t').collect())
}

fn pairs(data: &'static str) -> HashMap<&'static str, &'static str> {
    rows(data).map(|r| (r[0], r[1])).collect()
}

pub struct Tables {
    pub function_words: HashSet<&'static str>,
    /// past form -> base
    pub past_to_base: HashMap<&'static str, &'static str>,
    pub participles: HashSet<&'static str>,
    /// every known base form, irregular and regular
    pub bases: HashSet<&'static str>,
    pub gender: HashMap<&'static str, &'static str>,
    pub animacy_down: HashMap<&'static str, &'static str>,
    pub demonstrative: HashMap<&'static str, &'static str>,
    /// (source words, target, priority)
    pub conjunctions: Vec<(Vec<&'static str>, &'static str, u8)>,
    pub negate: HashMap<&'static str, &'static str>,
    pub aux_have: HashMap<&'static str, &'static str>,
    pub main_have: HashMap<&'static str, &'static str>,
    pub affirm: HashMap<&'static str, &'static str>,
    pub units: HashMap<&'static str, &'static str>,
}

pub fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut past_to_base = HashMap::new();
        let mut participles = HashSet::new();
        let mut bases = HashSet::new();
        for r in rows(IRREGULAR) {
            bases.insert(r[0]);
            past_to_base.entry(r[1]).or_insert(r[0]);
            participles.insert(r[2]);
        }
        for line in REGULAR.lines().filter(|l| !l.starts_with('#')) {
            bases.extend(line.split_whitespace());
        }
        let function_words = FUNCTION_WORDS
            .lines()
            .filter(|l| !l.starts_with('#'))
            .flat_map(str::split_whitespace)
            .collect();
        let conjunctions = rows(CONJUNCTIONS)
            .map(|r| (r[0].split(' ').collect(), r[1], r[2].parse().expect("priority")))
            .collect();
        let mut negate = HashMap::new();
        let mut aux_have = HashMap::new();
        let mut main_have = HashMap::new();
        let mut affirm = HashMap::new();
        for r in rows(NEGATION) {
            let table = match r[0] {
                "negate" => &mut negate,
                "aux-have" => &mut aux_have,
                "main-have" => &mut main_have,
                "affirm" => &mut affirm,
                other => panic!("unknown negation rule kind {other}"),
            };
            table.insert(r[1], r[2]);
        }
        Tables {
            function_words,
            past_to_base,
            participles,
            bases,
            gender: pairs(GENDER),
            animacy_down: pairs(ANIMACY_DOWN),
            demonstrative: pairs(DEMONSTRATIVE),
            conjunctions,
            negate,
            aux_have,
            main_have,
            affirm,
            units: pairs(UNITS),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_load() {
        let t = tables();
        assert_eq!(t.past_to_base["led"], "lead");
        assert_eq!(t.past_to_base["was"], "be");
        assert!(t.participles.contains("been"));
        assert!(t.bases.contains("serve"));
        assert!(t.bases.contains("lead"));
        assert!(t.function_words.contains("the"));
        assert_eq!(t.gender["she"], "he");
        assert_eq!(t.units["km"], "m");
        assert_eq!(t.main_have["has"], "doesn't have");
        assert!(t.past_to_base.len() + t.participles.len() > 200);
        assert!(t.bases.len() > 500);
    }
}
