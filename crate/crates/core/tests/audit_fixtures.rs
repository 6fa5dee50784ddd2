use forge_core::audit::{run_audit, AuditConfig, Verdict};
use forge_core::demo::{planted_artefact_dataset, shuffle_labels, PLANTED_MARKER};

#[test]
fn planted_marker_is_caught() {
    let ds = planted_artefact_dataset(3, 800);
    assert!(ds.iter().filter(|d| d.is_incoherent()).all(|d| d.sentences[d.intruder_index.unwrap() - 1].contains(PLANTED_MARKER)));
    let r = run_audit(&ds, &AuditConfig::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Suspect, "{r:?}");
    assert!(r.classifier_acc >= 90.0, "{r:?}");
    assert!(r.classifier_f1 >= 90.0, "{r:?}");
}

#[test]
fn shuffled_labels_are_clean() {
    let ds = shuffle_labels(&planted_artefact_dataset(3, 800), 17);
    let r = run_audit(&ds, &AuditConfig::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Clean, "{r:?}");
    assert!((r.classifier_acc - r.majority_acc).abs() <= 3.0, "{r:?}");
}

#[test]
fn audit_is_deterministic() {
    let ds = planted_artefact_dataset(5, 200);
    assert_eq!(run_audit(&ds, &AuditConfig::default()).unwrap(), run_audit(&ds, &AuditConfig::default()).unwrap());
}
