use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::softmax;
use super::{ClassDistribution, ClassifierError, StepSignal, SIGNAL_CHANNELS};

pub const FEATURES: usize = 4 * SIGNAL_CHANNELS;

/// Per-channel mean, population std, min and max, laid out `[c * 4 + stat]`.
pub fn featurize(signal: &StepSignal) -> [f64; FEATURES] {
    let n = signal.len() as f64;
    let mut f = [0.0; FEATURES];
    for c in 0..SIGNAL_CHANNELS {
        let col = signal.samples().iter().map(|s| s[c]);
        let mean = col.clone().sum::<f64>() / n;
        let var = col.clone().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        f[4 * c] = mean;
        f[4 * c + 1] = var.sqrt();
        f[4 * c + 2] = col.clone().fold(f64::INFINITY, f64::min);
        f[4 * c + 3] = col.fold(f64::NEG_INFINITY, f64::max);
    }
    f
}

/// Mean cross-entropy and its gradient for a linear softmax model.
///
/// `params` holds the `classes × dim` weight matrix row-major followed by the
/// `classes` biases; `l2` penalizes weights only.
pub fn loss_and_gradient(
    params: &[f64],
    x: &[Vec<f64>],
    y: &[usize],
    classes: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    let dim = x[0].len();
    let (w, b) = params.split_at(classes * dim);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let n = x.len() as f64;
    for (xi, &yi) in x.iter().zip(y) {
        let logits: Vec<f64> = (0..classes)
            .map(|k| {
                b[k] + w[k * dim..(k + 1) * dim]
                    .iter()
                    .zip(xi)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect();
        let p = softmax(&logits);
        loss -= p[yi].ln() / n;
        for k in 0..classes {
            let g = (p[k] - if k == yi { 1.0 } else { 0.0 }) / n;
            for d in 0..dim {
                grad[k * dim + d] += g * xi[d];
            }
            grad[classes * dim + k] += g;
        }
    }
    for i in 0..classes * dim {
        loss += 0.5 * l2 * w[i] * w[i];
        grad[i] += l2 * w[i];
    }
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.5,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression on standardized summary features.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    classes: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    params: Vec<f64>,
}

impl BaselineModel {
    pub fn train(
        data: &[(StepSignal, u8)],
        classes: usize,
        cfg: &TrainConfig,
    ) -> Result<Self, ClassifierError> {
        if let Some((_, bad)) = data.iter().find(|(_, c)| *c as usize >= classes) {
            return Err(ClassifierError::Training(format!(
                "label {bad} is not below {classes}"
            )));
        }
        let first = data.first().map(|d| d.1);
        if first.is_none() || data.iter().all(|d| Some(d.1) == first) {
            return Err(ClassifierError::Training(
                "dataset must cover at least two classes".into(),
            ));
        }
        let raw: Vec<[f64; FEATURES]> = data.iter().map(|(s, _)| featurize(s)).collect();
        let n = raw.len() as f64;
        let mean: Vec<f64> = (0..FEATURES)
            .map(|d| raw.iter().map(|f| f[d]).sum::<f64>() / n)
            .collect();
        let scale: Vec<f64> = (0..FEATURES)
            .map(|d| {
                let s = (raw.iter().map(|f| (f[d] - mean[d]).powi(2)).sum::<f64>() / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let x: Vec<Vec<f64>> = raw
            .iter()
            .map(|f| (0..FEATURES).map(|d| (f[d] - mean[d]) / scale[d]).collect())
            .collect();
        let y: Vec<usize> = data.iter().map(|d| d.1 as usize).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = Normal::new(0.0, 0.01).expect("valid normal");
        let mut params: Vec<f64> = (0..classes * (FEATURES + 1))
            .map(|_| init.sample(&mut rng))
            .collect();
        for _ in 0..cfg.epochs {
            let (_, g) = loss_and_gradient(&params, &x, &y, classes, cfg.l2);
            for (p, gi) in params.iter_mut().zip(&g) {
                *p -= cfg.learning_rate * gi;
            }
        }
        Ok(Self {
            classes,
            mean,
            scale,
            params,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn predict(&self, signal: &StepSignal) -> ClassDistribution {
        let f = featurize(signal);
        let (w, b) = self.params.split_at(self.classes * FEATURES);
        let logits: Vec<f64> = (0..self.classes)
            .map(|k| {
                b[k] + (0..FEATURES)
                    .map(|d| w[k * FEATURES + d] * (f[d] - self.mean[d]) / self.scale[d])
                    .sum::<f64>()
            })
            .collect();
        ClassDistribution::new(softmax(&logits)).expect("softmax is a distribution")
    }

    /// Fraction of samples whose argmax prediction matches the label.
    pub fn accuracy(&self, data: &[(StepSignal, u8)]) -> f64 {
        let hits = data
            .iter()
            .filter(|(s, c)| self.predict(s).argmax() == *c as usize)
            .count();
        hits as f64 / data.len() as f64
    }
}
