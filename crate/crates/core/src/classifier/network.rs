use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use super::layers::{
    softmax, BatchNorm, BatchNormMode, BiGru, Conv1d, GruCell, Linear, Mask, ResidualLayer,
    Sequence,
};
use super::{ClassDistribution, ClassifierError, StepSignal, SIGNAL_CHANNELS};

/// Shortest signal that survives both stride-2 stages.
pub const MIN_SIGNAL_LEN: usize = 4;

/// Layer widths of the terrain network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub in_channels: usize,
    pub widths: [usize; 2],
    pub kernel: usize,
    pub hidden: usize,
    pub fc: usize,
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            in_channels: SIGNAL_CHANNELS,
            widths: [64, 128],
            kernel: 5,
            hidden: 128,
            fc: 64,
            classes: 8,
        }
    }
}

impl Architecture {
    /// Canonical description stored in weights files, e.g.
    /// `in6 reslay64,128 k5 bigru128x2 fc64 out8`.
    pub fn descriptor(&self) -> String {
        format!(
            "in{} reslay{},{} k{} bigru{}x2 fc{} out{}",
            self.in_channels,
            self.widths[0],
            self.widths[1],
            self.kernel,
            self.hidden,
            self.fc,
            self.classes
        )
    }

    pub fn parse(s: &str) -> Result<Self, ClassifierError> {
        let bad = || ClassifierError::Weights(format!("malformed architecture '{s}'"));
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(bad());
        }
        let num = |p: &str, prefix: &str, suffix: &str| -> Result<usize, ClassifierError> {
            p.strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(suffix))
                .and_then(|r| r.parse().ok())
                .ok_or_else(bad)
        };
        let widths = parts[1].strip_prefix("reslay").ok_or_else(bad)?;
        let (w0, w1) = widths.split_once(',').ok_or_else(bad)?;
        let arch = Self {
            in_channels: num(parts[0], "in", "")?,
            widths: [
                w0.parse().map_err(|_| bad())?,
                w1.parse().map_err(|_| bad())?,
            ],
            kernel: num(parts[2], "k", "")?,
            hidden: num(parts[3], "bigru", "x2")?,
            fc: num(parts[4], "fc", "")?,
            classes: num(parts[5], "out", "")?,
        };
        if arch.kernel.is_multiple_of(2)
            || [
                arch.in_channels,
                arch.widths[0],
                arch.widths[1],
                arch.hidden,
                arch.fc,
                arch.classes,
            ]
            .contains(&0)
        {
            return Err(bad());
        }
        Ok(arch)
    }
}

/// Callback receiving each tensor's name, shape and values.
pub type TensorVisitor<'a> = dyn FnMut(&str, &[usize], &mut Vec<f64>) + 'a;

/// Residual conv front end, two bidirectional GRU layers and a two-layer head.
#[derive(Clone, Debug, PartialEq)]
pub struct TerrainNet {
    pub arch: Architecture,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub res: [ResidualLayer; 2],
    pub gru: [BiGru; 2],
    pub fc1: Linear,
    pub fc1_bn: BatchNorm,
    pub fc2: Linear,
}

impl TerrainNet {
    pub fn zeros(arch: Architecture) -> Self {
        let [c1, c2] = arch.widths;
        let h = arch.hidden;
        Self {
            arch,
            dropout: 0.3,
            bn_momentum: 0.6,
            res: [
                ResidualLayer::zeros(arch.in_channels, c1, arch.kernel),
                ResidualLayer::zeros(c1, c2, arch.kernel),
            ],
            gru: [BiGru::zeros(c2, h), BiGru::zeros(2 * h, h)],
            fc1: Linear::zeros(h, arch.fc),
            fc1_bn: BatchNorm::identity(arch.fc),
            fc2: Linear::zeros(arch.fc, arch.classes),
        }
    }

    /// Fan-in scaled uniform weights and perturbed batch-norm statistics.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        net.visit_mut(&mut |name, shape, values| {
            let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in values.iter_mut() {
                *v = if name.ends_with(".gamma") {
                    rng.random_range(0.8..1.2)
                } else if name.ends_with(".running_var") {
                    rng.random_range(0.5..1.5)
                } else if name.ends_with(".running_mean") || name.ends_with(".beta") {
                    rng.random_range(-0.1..0.1)
                } else {
                    rng.random_range(-bound..bound)
                };
            }
        });
        net
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        let mut clone = self.clone();
        clone.visit_mut(&mut |name, _, v| {
            if !name.contains("running_") {
                n += v.len();
            }
        });
        n
    }

    /// Visits every tensor in file order with its name and declared shape.
    pub fn visit_mut(&mut self, f: &mut TensorVisitor<'_>) {
        fn conv(f: &mut TensorVisitor<'_>, p: &str, c: &mut Conv1d) {
            f(
                &format!("{p}.weight"),
                &[c.c_out, c.c_in, c.kernel],
                &mut c.weight,
            );
            f(&format!("{p}.bias"), &[c.c_out], &mut c.bias);
        }
        fn bn(f: &mut TensorVisitor<'_>, p: &str, b: &mut BatchNorm) {
            let c = b.channels();
            f(&format!("{p}.gamma"), &[c], &mut b.gamma);
            f(&format!("{p}.beta"), &[c], &mut b.beta);
            f(&format!("{p}.running_mean"), &[c], &mut b.running_mean);
            f(&format!("{p}.running_var"), &[c], &mut b.running_var);
        }
        fn gru(f: &mut TensorVisitor<'_>, p: &str, g: &mut GruCell) {
            let (i, h) = (g.input, g.hidden);
            f(&format!("{p}.w_ih"), &[3 * h, i], &mut g.w_ih);
            f(&format!("{p}.w_hh"), &[3 * h, h], &mut g.w_hh);
            f(&format!("{p}.b_ih"), &[3 * h], &mut g.b_ih);
            f(&format!("{p}.b_hh"), &[3 * h], &mut g.b_hh);
        }
        fn linear(f: &mut TensorVisitor<'_>, p: &str, l: &mut Linear) {
            f(&format!("{p}.weight"), &[l.c_out, l.c_in], &mut l.weight);
            f(&format!("{p}.bias"), &[l.c_out], &mut l.bias);
        }
        for (i, r) in self.res.iter_mut().enumerate() {
            let p = format!("res{}", i + 1);
            conv(f, &format!("{p}.conv1"), &mut r.conv1);
            bn(f, &format!("{p}.bn1"), &mut r.bn1);
            conv(f, &format!("{p}.conv2"), &mut r.conv2);
            bn(f, &format!("{p}.bn2"), &mut r.bn2);
            conv(f, &format!("{p}.skip"), &mut r.skip);
        }
        for (i, g) in self.gru.iter_mut().enumerate() {
            gru(f, &format!("gru{}.fwd", i + 1), &mut g.forward);
            gru(f, &format!("gru{}.bwd", i + 1), &mut g.backward);
        }
        linear(f, "fc1", &mut self.fc1);
        bn(f, "fc1.bn", &mut self.fc1_bn);
        linear(f, "fc2", &mut self.fc2);
    }

    pub fn forward(&self, signal: &StepSignal) -> Result<ClassDistribution, ClassifierError> {
        let l = signal.len();
        let mut seq = Sequence::zeros(SIGNAL_CHANNELS, Mask::new(l, l)?);
        for (t, s) in signal.samples().iter().enumerate() {
            seq.row_mut(t).copy_from_slice(s);
        }
        self.forward_sequence(&seq)
    }

    /// Inference on a padded buffer; only the valid prefix influences the result.
    pub fn forward_sequence(&self, x: &Sequence) -> Result<ClassDistribution, ClassifierError> {
        if x.channels != self.arch.in_channels {
            return Err(ClassifierError::Shape(format!(
                "network expects {} channels, got {}",
                self.arch.in_channels, x.channels
            )));
        }
        if x.mask.valid < MIN_SIGNAL_LEN {
            return Err(ClassifierError::TooShort {
                len: x.mask.valid,
                min: MIN_SIGNAL_LEN,
            });
        }
        let h = self.res[0].forward(x, BatchNormMode::Inference)?;
        let h = self.res[1].forward(&h, BatchNormMode::Inference)?;
        let g1 = self.gru[0].forward(&h)?;
        let g2 = self.gru[1].forward(&g1.sequence)?;
        let pooled: Vec<f64> = g2
            .last_forward
            .iter()
            .zip(&g2.last_backward)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let mut z = self.fc1.forward(&pooled);
        self.fc1_bn.apply_vec(&mut z);
        z.iter_mut().for_each(|v| *v = super::layers::elu(*v));
        let logits = self.fc2.forward(&z);
        ClassDistribution::new(softmax(&logits))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), ClassifierError> {
        writeln!(w, "HLNET 1")?;
        writeln!(w, "arch {}", self.arch.descriptor())?;
        writeln!(w, "dropout {}", self.dropout)?;
        writeln!(w, "bn_momentum {}", self.bn_momentum)?;
        let mut lines = Vec::new();
        self.clone().visit_mut(&mut |name, shape, values| {
            let mut line = format!("tensor {name} ");
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            line.push_str(&dims.join(","));
            for v in values.iter() {
                let _ = write!(line, " {v}");
            }
            lines.push(line);
        });
        for l in lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, ClassifierError> {
        let mut lines = r
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
        let mut header = |key: &str| -> Result<String, ClassifierError> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| ClassifierError::Weights(format!("missing '{key}' line")))?;
            let line = line?;
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| {
                    ClassifierError::Weights(format!("line {}: expected '{key}'", no + 1))
                })
        };
        if header("HLNET")? != "1" {
            return Err(ClassifierError::Weights(
                "unsupported weights version".into(),
            ));
        }
        let arch = Architecture::parse(&header("arch")?)?;
        let parse_f = |s: String| {
            s.parse::<f64>()
                .map_err(|e| ClassifierError::Weights(e.to_string()))
        };
        let dropout = parse_f(header("dropout")?)?;
        let bn_momentum = parse_f(header("bn_momentum")?)?;

        let mut tensors = std::collections::HashMap::new();
        for (no, line) in lines {
            let line = line?;
            let mut it = line.split_whitespace();
            let err = |m: String| ClassifierError::Weights(format!("line {}: {m}", no + 1));
            if it.next() != Some("tensor") {
                return Err(err("expected 'tensor'".into()));
            }
            let name = it
                .next()
                .ok_or_else(|| err("missing tensor name".into()))?
                .to_string();
            let shape: Vec<usize> = it
                .next()
                .ok_or_else(|| err("missing shape".into()))?
                .split(',')
                .map(|d| d.parse().map_err(|_| err(format!("bad shape in '{name}'"))))
                .collect::<Result<_, _>>()?;
            let values: Vec<f64> = it
                .map(|v| v.parse().map_err(|_| err(format!("bad value in '{name}'"))))
                .collect::<Result<_, _>>()?;
            if values.len() != shape.iter().product::<usize>() {
                return Err(err(format!(
                    "'{name}' declares {:?} but has {} values",
                    shape,
                    values.len()
                )));
            }
            if tensors.insert(name.clone(), (shape, values)).is_some() {
                return Err(err(format!("duplicate tensor '{name}'")));
            }
        }

        let mut net = Self::zeros(arch);
        net.dropout = dropout;
        net.bn_momentum = bn_momentum;
        let mut failure = None;
        net.visit_mut(&mut |name, shape, values| {
            if failure.is_some() {
                return;
            }
            match tensors.remove(name) {
                None => failure = Some(format!("missing tensor '{name}'")),
                Some((s, _)) if s != shape => {
                    failure = Some(format!(
                        "tensor '{name}' has shape {s:?}, architecture needs {shape:?}"
                    ))
                }
                Some((_, v)) => *values = v,
            }
        });
        if let Some(m) = failure {
            return Err(ClassifierError::Weights(m));
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(ClassifierError::Weights(format!(
                "unexpected tensor '{extra}'"
            )));
        }
        if net.res.iter().any(|r| {
            [&r.bn1, &r.bn2]
                .iter()
                .any(|b| b.running_var.iter().any(|v| *v < 0.0))
        }) || net.fc1_bn.running_var.iter().any(|v| *v < 0.0)
        {
            return Err(ClassifierError::Weights("negative running variance".into()));
        }
        Ok(net)
    }
}
