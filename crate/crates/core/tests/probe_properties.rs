use forge_core::probes::{apply_edits, apply_probe, build_probe_suite, in_target_vocabulary, Phenomenon};
use forge_core::synthesis::{DatasetInstance, Label, Split};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "she", "he", "her", "him", "his", "hers", "himself", "herself", "it", "its", "itself", "this", "that", "and",
    "but", "although", "therefore", "however", "was", "were", "had", "did", "not", "led", "created", "moved",
    "is", "has", "can", "isn't", "never", "the", "a", "city", "river", "station", "book", "team", "won", "lives",
    "1999", "2004", "18", "51.7", "km", "30", "percent", "years", "in", "of", "to", "by", "They", "Line", "11",
];

fn sentence() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(prop::sample::select(WORDS), 1..14),
        prop::collection::vec(prop::sample::select(&[" ", " ", " ", ", ", "; "][..]), 14),
        any::<bool>(),
    )
        .prop_map(|(words, seps, capital)| {
            let mut s = String::new();
            for (i, w) in words.iter().enumerate() {
                if i > 0 {
                    s.push_str(seps[i]);
                }
                s.push_str(w);
            }
            if capital {
                s = forge_core::probes::match_case("X", &s);
            }
            s.push('.');
            s
        })
}

fn phenomenon() -> impl Strategy<Value = Phenomenon> {
    prop::sample::select(Phenomenon::ALL.to_vec())
}

proptest! {
    #[test]
    fn edits_are_disjoint_spans_that_reconstruct_the_probe(s in sentence(), p in phenomenon(), seed in any::<u64>()) {
        let probe = apply_probe(&s, p, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(probe.applicable, probe.probed_sentence != s);
        prop_assert_eq!(probe.edits.is_empty(), !probe.applicable);
        for w in probe.edits.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for e in &probe.edits {
            prop_assert_eq!(&s[e.start..e.end], e.original.as_str());
        }
        prop_assert_eq!(apply_edits(&s, &probe.edits), probe.probed_sentence);
    }

    #[test]
    fn replacements_stay_in_target_vocabulary(s in sentence(), p in phenomenon(), seed in any::<u64>()) {
        let probe = apply_probe(&s, p, &mut ChaCha8Rng::seed_from_u64(seed));
        for e in &probe.edits {
            prop_assert!(in_target_vocabulary(p, &e.replacement), "{} {:?}", p, e);
        }
    }

    #[test]
    fn demonstrative_only_touches_this_and_that(s in sentence()) {
        let probe = apply_probe(&s, Phenomenon::Demonstrative, &mut ChaCha8Rng::seed_from_u64(0));
        for e in &probe.edits {
            prop_assert!(matches!(e.original.to_lowercase().as_str(), "this" | "that"));
        }
    }

    #[test]
    fn gender_flip_twice_restores_unambiguous_sentences(
        subj in prop::sample::select(vec!["She", "He"]),
        obj in prop::sample::select(vec!["her", "him"]),
        det in prop::sample::select(vec!["her", "his"]),
        refl in prop::sample::select(vec!["herself", "himself"]),
        noun in prop::sample::select(vec!["brother", "book", "city", "team"]),
    ) {
        let s = format!("{subj} told {obj} that {det} {noun} hurt {refl}.");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let once = apply_probe(&s, Phenomenon::Gender, &mut rng);
        let twice = apply_probe(&once.probed_sentence, Phenomenon::Gender, &mut rng);
        prop_assert!(once.applicable);
        prop_assert_eq!(twice.probed_sentence, s);
    }
}

#[test]
fn gender_table_is_an_involution() {
    // (pronoun in context, context kind)
    let table = [
        "she left", "he left", "She left", "He left", "saw her", "saw him", "her book", "his book", "it is hers",
        "it is his", "herself", "himself", "Herself", "Himself", "HER BOOK", "HIS BOOK",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for s in table {
        let once = apply_probe(s, Phenomenon::Gender, &mut rng);
        assert!(once.applicable, "{s}");
        let twice = apply_probe(&once.probed_sentence, Phenomenon::Gender, &mut rng);
        assert_eq!(twice.probed_sentence, s, "via {:?}", once.probed_sentence);
    }
}

fn incoherent(id: &str, sentences: &[&str], intruder: usize) -> DatasetInstance {
    DatasetInstance {
        instance_id: id.into(),
        source: "wiki".into(),
        sentences: sentences.iter().map(|s| s.to_string()).collect(),
        label: Label::Incoherent,
        intruder_index: Some(intruder),
        provenance: None,
        split: Split::Test,
        probe: None,
    }
}

#[test]
fn suite_edits_only_the_intruder() {
    let mut data = Vec::new();
    for i in 0..40 {
        data.push(incoherent(&format!("d{i:03}"), &["She was born here.", "He was tall.", "She moved away."], 2 + i % 2));
    }
    let suite = build_probe_suite(&data, Phenomenon::Gender, 25, 3);
    assert_eq!(suite.probes.len(), 25);
    assert_eq!(suite.shortfall, 0);
    assert!(suite.warning.is_none());
    for (probe, inst) in suite.probes.iter().zip(&suite.instances) {
        let base = data.iter().find(|d| d.instance_id == probe.base_instance_id).unwrap();
        let idx = base.intruder_index.unwrap() - 1;
        assert_eq!(inst.label, base.label);
        assert_eq!(inst.intruder_index, base.intruder_index);
        for (j, (a, b)) in base.sentences.iter().zip(&inst.sentences).enumerate() {
            assert_eq!(a == b, j != idx);
        }
        assert_eq!(inst.probe.as_ref().unwrap().base_instance_id, base.instance_id);
    }
    let ids: Vec<_> = suite.probes.iter().map(|p| p.base_instance_id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    // same seed, same sample
    let again = build_probe_suite(&data, Phenomenon::Gender, 25, 3);
    assert_eq!(again.probes, suite.probes);
}

#[test]
fn shortfall_and_empty_suites_are_reported() {
    let mut data: Vec<_> = (0..10).map(|i| incoherent(&format!("x{i}"), &["A b.", "This plan failed.", "C d."], 2)).collect();
    data.extend((0..5).map(|i| incoherent(&format!("y{i}"), &["A b.", "Rivers flow.", "C d."], 2)));
    let suite = build_probe_suite(&data, Phenomenon::Demonstrative, 12, 0);
    assert_eq!(suite.probes.len(), 10);
    assert_eq!(suite.shortfall, 2);
    assert!(suite.warning.as_deref().unwrap().contains("only 10 of 12"));

    let coherent: Vec<_> = data
        .iter()
        .map(|d| DatasetInstance { label: Label::Coherent, intruder_index: None, ..d.clone() })
        .collect();
    let empty = build_probe_suite(&coherent, Phenomenon::Demonstrative, 12, 0);
    assert!(empty.probes.is_empty());
    assert!(empty.warning.is_some());
}
