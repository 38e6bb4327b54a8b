use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::{StepSignal, SIGNAL_CHANNELS};

/// Nominal per-channel plateau levels (fx, fy, fz in N; tx, ty, tz in N m).
const BASE_LEVEL: [f64; SIGNAL_CHANNELS] = [20.0, -15.0, 300.0, 3.0, -2.0, 1.0];

/// Shape of the synthetic touchdown signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSpec {
    pub min_len: usize,
    pub max_len: usize,
    /// Standard deviation of additive sample noise, relative to the channel level.
    pub noise: f64,
    /// Relative per-signal amplitude jitter.
    pub jitter: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        Self {
            min_len: 40,
            max_len: 120,
            noise: 0.02,
            jitter: 0.03,
        }
    }
}

struct ClassShape {
    level: [f64; SIGNAL_CHANNELS],
    ring: [f64; SIGNAL_CHANNELS],
    freq: f64,
    damping: f64,
    rise: f64,
}

fn class_shape(class: u8) -> ClassShape {
    let c = class as f64;
    let mut level = [0.0; SIGNAL_CHANNELS];
    let mut ring = [0.0; SIGNAL_CHANNELS];
    for ch in 0..SIGNAL_CHANNELS {
        // stiffer materials carry higher plateaus on some channels and lower on others
        let twist = ((class as usize * 3 + ch * 5) % 8) as f64 / 7.0;
        level[ch] = BASE_LEVEL[ch] * (0.7 + 0.08 * c + 0.1 * twist);
        ring[ch] = BASE_LEVEL[ch].abs() * (0.05 + 0.04 * twist);
    }
    ClassShape {
        level,
        ring,
        freq: 0.03 + 0.012 * c,
        damping: 0.02 + 0.01 * ((class as usize * 5) % 8) as f64,
        rise: 3.0 + (class % 4) as f64 * 2.0,
    }
}

/// Noise-free signal of class `class` with `len` samples.
pub fn signal_template(class: u8, len: usize) -> StepSignal {
    template_scaled(class, len, 1.0)
}

fn template_scaled(class: u8, len: usize, gain: f64) -> StepSignal {
    let s = class_shape(class);
    let samples = (0..len.max(1))
        .map(|t| {
            let t = t as f64;
            let settle = 1.0 - (-t / s.rise).exp();
            let osc = (-s.damping * t).exp() * (TAU * s.freq * t).sin();
            std::array::from_fn(|ch| gain * (s.level[ch] * settle + s.ring[ch] * osc))
        })
        .collect();
    StepSignal::new(samples).expect("template samples are finite")
}

/// Class-conditioned touchdown signal with random length, gain and noise.
pub fn synth_force_signal<R: Rng + ?Sized>(
    class: u8,
    spec: &SignalSpec,
    rng: &mut R,
) -> StepSignal {
    let len = rng.random_range(spec.min_len..=spec.max_len);
    let jitter: f64 = rng.sample(StandardNormal);
    let base = template_scaled(class, len, 1.0 + spec.jitter * jitter);
    if spec.noise == 0.0 {
        return base;
    }
    let samples = base
        .samples()
        .iter()
        .map(|row| {
            std::array::from_fn(|ch| {
                let n: f64 = StandardNormal.sample(rng);
                row[ch] + spec.noise * BASE_LEVEL[ch].abs() * n
            })
        })
        .collect();
    StepSignal::new(samples).expect("noisy samples are finite")
}
