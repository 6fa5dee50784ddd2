use forge_core::text::split_sentences;

struct Case {
    raw: String,
    expected: Vec<String>,
}

fn cases() -> Vec<Case> {
    let text = include_str!("fixtures/segmentation.txt");
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    body.split("===\n")
        .map(|block| {
            let (raw, expected) = block.split_once("---\n").expect("case has a --- separator");
            Case {
                raw: raw.to_string(),
                expected: expected.lines().filter(|l| !l.is_empty()).map(str::to_string).collect(),
            }
        })
        .collect()
}

#[test]
fn matches_hand_segmentation() {
    let cases = cases();
    let total: usize = cases.iter().map(|c| c.expected.len()).sum();
    assert!(total >= 50, "fixture holds {total} sentences");
    for c in &cases {
        assert_eq!(split_sentences(&c.raw), c.expected, "raw: {:?}", c.raw);
    }
}

#[test]
fn sentences_are_verbatim_slices_of_the_input() {
    for c in cases() {
        let mut from = 0;
        for s in split_sentences(&c.raw) {
            let at = c.raw[from..].find(s).expect("sentence occurs in order") + from;
            from = at + s.len();
        }
    }
}
