//! Linguistic probes: minimal rule-based edits to intruder sentences.
//!
//! Each phenomenon is a small rule table plus a shallow token heuristic.
//! Edits are byte spans over the original sentence, so a probed sentence can
//! always be reconstructed from the original and its edit list.

mod rules;
mod tables;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::par;
use crate::seed;
use crate::synthesis::DatasetInstance;

pub use rules::match_case;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phenomenon {
    Gender,
    AnimacyDown,
    AnimacyUp,
    Demonstrative,
    Conjunction,
    PastToFuture,
    Negation,
    Number,
}

impl Phenomenon {
    pub const ALL: [Phenomenon; 8] = [
        Phenomenon::Gender,
        Phenomenon::AnimacyDown,
        Phenomenon::AnimacyUp,
        Phenomenon::Demonstrative,
        Phenomenon::Conjunction,
        Phenomenon::PastToFuture,
        Phenomenon::Negation,
        Phenomenon::Number,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phenomenon::Gender => "gender",
            Phenomenon::AnimacyDown => "animacy_down",
            Phenomenon::AnimacyUp => "animacy_up",
            Phenomenon::Demonstrative => "demonstrative",
            Phenomenon::Conjunction => "conjunction",
            Phenomenon::PastToFuture => "past_to_future",
            Phenomenon::Negation => "negation",
            Phenomenon::Number => "number",
        }
    }
}

impl fmt::Display for Phenomenon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown phenomenon `{0}`")]
pub struct UnknownPhenomenon(pub String);

impl FromStr for Phenomenon {
    type Err = UnknownPhenomenon;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Phenomenon::ALL
            .into_iter()
            .find(|p| p.as_str() == norm)
            .ok_or_else(|| UnknownPhenomenon(s.to_string()))
    }
}

/// Replacement of `original[start..end]` (byte offsets) by `replacement`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub original: String,
    pub replacement: String,
    pub rule: String,
}

/// The `probe` object attached to a probed dataset instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTag {
    pub phenomenon: Phenomenon,
    pub base_instance_id: String,
    pub original_sentence: String,
    pub edits: Vec<Edit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeInstance {
    pub base_instance_id: String,
    pub phenomenon: Phenomenon,
    pub original_sentence: String,
    pub probed_sentence: String,
    pub edits: Vec<Edit>,
    pub applicable: bool,
}

/// Applies sorted, non-overlapping edits.
pub fn apply_edits(sentence: &str, edits: &[Edit]) -> String {
    let mut out = String::with_capacity(sentence.len() + 16);
    let mut cursor = 0;
    for e in edits {
        out.push_str(&sentence[cursor..e.start]);
        out.push_str(&e.replacement);
        cursor = e.end;
    }
    out.push_str(&sentence[cursor..]);
    out
}

/// Whether `replacement` only uses words the phenomenon is allowed to introduce.
pub fn in_target_vocabulary(phenomenon: Phenomenon, replacement: &str) -> bool {
    rules::target_vocabulary_ok(phenomenon, replacement)
}

/// Edits a single sentence. The rng is consulted only by `animacy_up`.
pub fn apply_probe<R: Rng + ?Sized>(sentence: &str, phenomenon: Phenomenon, rng: &mut R) -> ProbeInstance {
    let mut edits = match phenomenon {
        Phenomenon::Gender => rules::gender(sentence),
        Phenomenon::AnimacyDown => rules::animacy_down(sentence),
        Phenomenon::AnimacyUp => rules::animacy_up(sentence, rng),
        Phenomenon::Demonstrative => rules::demonstrative(sentence),
        Phenomenon::Conjunction => rules::conjunction(sentence),
        Phenomenon::PastToFuture => rules::past_to_future(sentence),
        Phenomenon::Negation => rules::negation(sentence),
        Phenomenon::Number => rules::number(sentence),
    };
    edits.retain(|e| e.original != e.replacement);
    edits.sort_by_key(|e| e.start);
    debug_assert!(edits.windows(2).all(|w| w[0].end <= w[1].start));
    let probed_sentence = apply_edits(sentence, &edits);
    let applicable = probed_sentence != sentence;
    if !applicable {
        edits.clear();
    }
    ProbeInstance {
        base_instance_id: String::new(),
        phenomenon,
        original_sentence: sentence.to_string(),
        probed_sentence,
        edits,
        applicable,
    }
}

/// Result of probing a dataset for one phenomenon.
#[derive(Debug, Clone)]
pub struct ProbeSuite {
    pub phenomenon: Phenomenon,
    pub probes: Vec<ProbeInstance>,
    /// Copies of the sampled base instances with the intruder replaced.
    pub instances: Vec<DatasetInstance>,
    pub target_n: usize,
    /// Applicable incoherent instances before sampling.
    pub applicable_pool: usize,
    pub shortfall: usize,
    pub warning: Option<String>,
}

pub fn probed_instance_id(base: &str, phenomenon: Phenomenon) -> String {
    format!("{base}#{phenomenon}")
}

/// Probes the intruder sentence (1-based `intruder_index`) of every incoherent instance and samples up
/// to `target_n` applicable ones. Output is ordered by base instance id.
pub fn build_probe_suite(dataset: &[DatasetInstance], phenomenon: Phenomenon, target_n: usize, global_seed: u64) -> ProbeSuite {
    let incoherent: Vec<&DatasetInstance> = dataset
        .iter()
        .filter(|d| d.is_incoherent() && d.intruder_index.is_some_and(|i| (2..=d.sentences.len()).contains(&i)))
        .collect();
    let probed: Vec<Option<(ProbeInstance, DatasetInstance)>> = par::map(&incoherent, |inst| {
        let idx = inst.intruder_index? - 1;
        let mut rng = seed::stream(global_seed, &["probe", phenomenon.as_str(), &inst.instance_id]);
        let mut probe = apply_probe(&inst.sentences[idx], phenomenon, &mut rng);
        if !probe.applicable {
            return None;
        }
        probe.base_instance_id = inst.instance_id.clone();
        let mut modified = (*inst).clone();
        modified.instance_id = probed_instance_id(&inst.instance_id, phenomenon);
        modified.sentences[idx] = probe.probed_sentence.clone();
        modified.probe = Some(ProbeTag {
            phenomenon,
            base_instance_id: inst.instance_id.clone(),
            original_sentence: probe.original_sentence.clone(),
            edits: probe.edits.clone(),
        });
        Some((probe, modified))
    });
    let mut pool: Vec<(ProbeInstance, DatasetInstance)> = probed.into_iter().flatten().collect();
    pool.sort_by(|a, b| a.0.base_instance_id.cmp(&b.0.base_instance_id));
    let applicable_pool = pool.len();

    let mut chosen: Vec<usize> = if pool.len() > target_n {
        let mut rng = seed::stream(global_seed, &["probe-sample", phenomenon.as_str()]);
        sample(&mut rng, pool.len(), target_n).into_vec()
    } else {
        (0..pool.len()).collect()
    };
    chosen.sort_unstable();
    let mut keep = vec![false; pool.len()];
    for i in chosen {
        keep[i] = true;
    }
    let (probes, instances): (Vec<_>, Vec<_>) = pool
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .unzip();

    let shortfall = target_n.saturating_sub(probes.len());
    let warning = if probes.is_empty() {
        Some(format!("{phenomenon}: no applicable incoherent instances"))
    } else if shortfall > 0 {
        Some(format!("{phenomenon}: only {} of {target_n} requested probes applicable", probes.len()))
    } else {
        None
    };
    ProbeSuite {
        phenomenon,
        probes,
        instances,
        target_n,
        applicable_pool,
        shortfall,
        warning,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn probe(s: &str, p: Phenomenon) -> ProbeInstance {
        apply_probe(s, p, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn phenomenon_names_roundtrip() {
        for p in Phenomenon::ALL {
            assert_eq!(p.as_str().parse::<Phenomenon>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{p}\""));
        }
        assert!("tense".parse::<Phenomenon>().is_err());
    }

    #[test]
    fn worked_examples() {
        assert_eq!(probe("she", Phenomenon::Gender).probed_sentence, "he");
        assert_eq!(probe("It was late.", Phenomenon::PastToFuture).probed_sentence, "It will be late.");
        assert_eq!(probe("Smith led the team.", Phenomenon::PastToFuture).probed_sentence, "Smith will lead the team.");
        assert_eq!(probe("He has a warrant.", Phenomenon::Negation).probed_sentence, "He doesn't have a warrant.");
        assert_eq!(probe("This plan failed.", Phenomenon::Demonstrative).probed_sentence, "These plan failed.");
    }

    #[test]
    fn no_target_is_not_applicable() {
        let p = probe("The river flows north.", Phenomenon::Gender);
        assert!(!p.applicable);
        assert!(p.edits.is_empty());
        assert_eq!(p.probed_sentence, p.original_sentence);
    }
}
