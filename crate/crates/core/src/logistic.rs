//! Binary logistic regression over sparse features, trained by SGD.
//!
//! L2 decay is applied lazily through a global weight scale so each update
//! touches only the example's non-zero features.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::retrieval::SparseVector;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Loss multiplier for positive examples.
    pub positive_weight: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.1,
            epochs: 50,
            l2: 1e-4,
            positive_weight: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticModel {
    weights: Vec<f64>,
    scale: f64,
    bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    /// Model that ignores its input and returns `p` for everything.
    pub fn constant(p: f64) -> Self {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        LogisticModel {
            weights: Vec::new(),
            scale: 1.0,
            bias: (p / (1.0 - p)).ln(),
        }
    }

    pub fn margin(&self, x: &SparseVector) -> f64 {
        let mut z = 0.0;
        for &(i, v) in x.entries() {
            if let Some(w) = self.weights.get(i as usize) {
                z += w * v;
            }
        }
        z * self.scale + self.bias
    }

    pub fn predict_proba(&self, x: &SparseVector) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}

/// Trains on `(features, label)` pairs. Feature indices must be `< dim`.
/// Example order is reshuffled every epoch from a stream keyed by
/// `config.seed`, so training is deterministic.
pub fn train(examples: &[(SparseVector, bool)], dim: usize, config: &LogisticConfig) -> LogisticModel {
    let mut model = LogisticModel {
        weights: vec![0.0; dim],
        scale: 1.0,
        bias: 0.0,
    };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let decay = 1.0 - config.learning_rate * config.l2;
    for epoch in 0..config.epochs {
        let mut rng = seed::stream(config.seed, &["logistic-epoch", &epoch.to_string()]);
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, label) = &examples[i];
            let p = model.predict_proba(x);
            let g = if *label { (p - 1.0) * config.positive_weight } else { p };
            model.scale *= decay;
            if model.scale < 1e-9 {
                for w in &mut model.weights {
                    *w *= model.scale;
                }
                model.scale = 1.0;
            }
            let step = config.learning_rate * g / model.scale;
            for &(j, v) in x.entries() {
                model.weights[j as usize] -= step * v;
            }
            model.bias -= config.learning_rate * g;
        }
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(entries: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_entries(entries.iter().copied())
    }

    #[test]
    fn separable_data_is_learned() {
        let mut data = Vec::new();
        for i in 0..40u32 {
            data.push((x(&[(0, 1.0), (10 + i % 5, 0.5)]), true));
            data.push((x(&[(1, 1.0), (10 + i % 5, 0.5)]), false));
        }
        let m = train(&data, 32, &LogisticConfig::default());
        assert!(m.predict_proba(&x(&[(0, 1.0)])) > 0.9);
        assert!(m.predict_proba(&x(&[(1, 1.0)])) < 0.1);
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<_> = (0..30u32).map(|i| (x(&[(i % 7, 1.0)]), i % 3 == 0)).collect();
        let cfg = LogisticConfig { seed: 9, ..Default::default() };
        let a = train(&data, 8, &cfg);
        let b = train(&data, 8, &cfg);
        for i in 0..8 {
            let v = x(&[(i, 1.0)]);
            assert_eq!(a.predict_proba(&v), b.predict_proba(&v));
        }
    }

    #[test]
    fn constant_model() {
        let m = LogisticModel::constant(0.25);
        assert!((m.predict_proba(&x(&[(3, 1.0)])) - 0.25).abs() < 1e-12);
    }
}
