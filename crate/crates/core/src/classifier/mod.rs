//! Terrain classification from touchdown force/torque signals.
//!
//! Two classifiers share the [`StepSignal`] input and [`ClassDistribution`] output:
//! a masked residual-conv plus bidirectional-GRU network ([`TerrainNet`], inference
//! only, weights loaded from file) and a summary-feature logistic regression
//! ([`BaselineModel`]) that can be trained in-process.

mod baseline;
pub mod layers;
mod network;

use std::io::{BufRead, Write};

use thiserror::Error;

pub use baseline::{featurize, loss_and_gradient, BaselineModel, TrainConfig, FEATURES};
pub use network::{Architecture, TerrainNet, MIN_SIGNAL_LEN};

/// Three force and three torque channels.
pub const SIGNAL_CHANNELS: usize = 6;

const CLASS_TABLE: &str = include_str!("../../data/terrain_classes.txt");

/// Material names indexed by class id.
pub fn class_names() -> Vec<&'static str> {
    CLASS_TABLE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect()
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("signal of length {len} is shorter than the minimum {min}")]
    TooShort { len: usize, min: usize },
    #[error("invalid signal: {0}")]
    Signal(String),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("training: {0}")]
    Training(String),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A variable-length 6-channel touchdown signal.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSignal {
    samples: Vec<[f64; SIGNAL_CHANNELS]>,
}

impl StepSignal {
    pub fn new(samples: Vec<[f64; SIGNAL_CHANNELS]>) -> Result<Self, ClassifierError> {
        if samples.is_empty() {
            return Err(ClassifierError::Signal("signal is empty".into()));
        }
        if let Some(t) = samples
            .iter()
            .position(|s| s.iter().any(|v| !v.is_finite()))
        {
            return Err(ClassifierError::Signal(format!(
                "non-finite sample at t={t}"
            )));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[[f64; SIGNAL_CHANNELS]] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub const SIGNAL_CSV_HEADER: &str = "fx,fy,fz,tx,ty,tz";

pub fn write_signal_csv<W: Write>(mut w: W, s: &StepSignal) -> std::io::Result<()> {
    writeln!(w, "{SIGNAL_CSV_HEADER}")?;
    for row in s.samples() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_signal_csv<R: BufRead>(r: R) -> Result<StepSignal, ClassifierError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("fx")) {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ClassifierError::Signal(format!("line {}: {e}", i + 1)))?;
        let row: [f64; SIGNAL_CHANNELS] = vals.try_into().map_err(|v: Vec<f64>| {
            ClassifierError::Signal(format!(
                "line {}: expected 6 values, found {}",
                i + 1,
                v.len()
            ))
        })?;
        rows.push(row);
    }
    StepSignal::new(rows)
}

/// Probability vector over terrain classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self, ClassifierError> {
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ClassifierError::Distribution(
                "entries must lie in [0, 1]".into(),
            ));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(ClassifierError::Distribution(format!("entries sum to {s}")));
        }
        Ok(Self(p))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Most probable class; the lowest id wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_table_has_eight_materials() {
        let names = class_names();
        assert_eq!(names.len(), 8);
        assert_eq!(names[0], "gum");
        assert_eq!(names[5], "artificial grass");
        assert_eq!(names[7], "gravel");
    }

    #[test]
    fn signal_validation_and_csv() {
        assert!(StepSignal::new(vec![]).is_err());
        assert!(StepSignal::new(vec![[0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0]]).is_err());
        let s = StepSignal::new(vec![
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.5],
            [-1.0, 0.0, 0.25, 1e-3, 9.0, 1.0],
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_signal_csv(&mut buf, &s).unwrap();
        assert_eq!(read_signal_csv(buf.as_slice()).unwrap(), s);
        assert!(read_signal_csv("fx,fy,fz,tx,ty,tz\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn distribution_checks() {
        assert!(ClassDistribution::new(vec![0.5, 0.6]).is_err());
        let d = ClassDistribution::new(vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(d.argmax(), 1);
    }
}
