//! Masked sequence layers.
//!
//! Sequences are stored time-major in a padded buffer together with the length of
//! their valid prefix. Every layer reads only the valid prefix and writes exact zeros
//! to padded positions, so appending padding never changes the valid outputs.

use super::ClassifierError;

/// Valid-prefix mask over a padded buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mask {
    pub len: usize,
    pub valid: usize,
}

impl Mask {
    pub fn new(len: usize, valid: usize) -> Result<Self, ClassifierError> {
        if valid > len {
            return Err(ClassifierError::Shape(format!(
                "valid length {valid} exceeds buffer {len}"
            )));
        }
        Ok(Self { len, valid })
    }

    /// Builds a mask from booleans; true entries must form a prefix.
    pub fn from_bools(bits: &[bool]) -> Result<Self, ClassifierError> {
        let valid = bits.iter().take_while(|b| **b).count();
        if bits[valid..].iter().any(|b| *b) {
            return Err(ClassifierError::Shape(
                "mask is not a contiguous valid prefix".into(),
            ));
        }
        Ok(Self {
            len: bits.len(),
            valid,
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|t| t < self.valid).collect()
    }

    pub fn downsample(&self, stride: usize) -> Self {
        Self {
            len: self.len.div_ceil(stride),
            valid: self.valid.div_ceil(stride),
        }
    }
}

/// Time-major padded sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub channels: usize,
    pub data: Vec<f64>,
    pub mask: Mask,
}

impl Sequence {
    pub fn zeros(channels: usize, mask: Mask) -> Self {
        Self {
            channels,
            data: vec![0.0; channels * mask.len],
            mask,
        }
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        channels: usize,
        mask: Mask,
    ) -> Result<Self, ClassifierError> {
        if rows.len() != mask.len || rows.iter().any(|r| r.len() != channels) {
            return Err(ClassifierError::Shape(
                "rows do not match mask and channel count".into(),
            ));
        }
        let mut s = Self::zeros(channels, mask);
        for (t, r) in rows.iter().enumerate().take(mask.valid) {
            s.row_mut(t).copy_from_slice(r);
        }
        Ok(s)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.channels..(t + 1) * self.channels]
    }

    /// Rows of the valid prefix only.
    pub fn valid_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data[..self.mask.valid * self.channels].chunks(self.channels)
    }
}

/// 1-D convolution with odd kernel, weights laid out `[out][in][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn zeros(c_in: usize, c_out: usize, kernel: usize) -> Self {
        Self {
            c_in,
            c_out,
            kernel,
            weight: vec![0.0; c_out * c_in * kernel],
            bias: vec![0.0; c_out],
        }
    }

    /// Output position `t` is centred on input `t * stride`; taps outside the valid
    /// prefix read as zero.
    pub fn forward(&self, x: &Sequence, stride: usize) -> Result<Sequence, ClassifierError> {
        if x.channels != self.c_in {
            return Err(ClassifierError::Shape(format!(
                "conv expects {} input channels, got {}",
                self.c_in, x.channels
            )));
        }
        let mask = x.mask.downsample(stride);
        let mut y = Sequence::zeros(self.c_out, mask);
        let half = (self.kernel / 2) as isize;
        let k = self.kernel;
        for t in 0..mask.valid {
            let centre = (t * stride) as isize;
            let out = y.row_mut(t);
            out.copy_from_slice(&self.bias);
            for tap in 0..k {
                let i = centre + tap as isize - half;
                if i < 0 || i as usize >= x.mask.valid {
                    continue;
                }
                let xin = x.row(i as usize);
                for (o, acc) in out.iter_mut().enumerate() {
                    let w = &self.weight[o * self.c_in * k..(o + 1) * self.c_in * k];
                    let mut s = 0.0;
                    for (c, xv) in xin.iter().enumerate() {
                        s += w[c * k + tap] * xv;
                    }
                    *acc += s;
                }
            }
        }
        Ok(y)
    }
}

/// Where batch-norm statistics come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Stored running statistics (inference).
    Inference,
    /// Mean and variance over the valid timesteps of the input.
    MaskedBatch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn identity(c: usize) -> Self {
        Self {
            gamma: vec![1.0; c],
            beta: vec![0.0; c],
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn affine(&self, mean: &[f64], var: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let scale: Vec<f64> = (0..self.channels())
            .map(|c| self.gamma[c] / (var[c] + self.eps).sqrt())
            .collect();
        let shift = (0..self.channels())
            .map(|c| self.beta[c] - mean[c] * scale[c])
            .collect();
        (scale, shift)
    }

    /// Normalizes a vector with the stored statistics.
    pub fn apply_vec(&self, x: &mut [f64]) {
        let (scale, shift) = self.affine(&self.running_mean, &self.running_var);
        for (c, v) in x.iter_mut().enumerate() {
            *v = *v * scale[c] + shift[c];
        }
    }

    pub fn forward(&self, x: &mut Sequence, mode: BatchNormMode) -> Result<(), ClassifierError> {
        if x.channels != self.channels() {
            return Err(ClassifierError::Shape("batch-norm channel mismatch".into()));
        }
        let (scale, shift) = match mode {
            BatchNormMode::Inference => self.affine(&self.running_mean, &self.running_var),
            BatchNormMode::MaskedBatch => {
                let n = x.mask.valid.max(1) as f64;
                let mut mean = vec![0.0; x.channels];
                for r in x.valid_rows() {
                    for (m, v) in mean.iter_mut().zip(r) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; x.channels];
                for r in x.valid_rows() {
                    for c in 0..r.len() {
                        var[c] += (r[c] - mean[c]).powi(2);
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                self.affine(&mean, &var)
            }
        };
        let valid = x.mask.valid;
        for t in 0..valid {
            for (c, v) in x.row_mut(t).iter_mut().enumerate() {
                *v = *v * scale[c] + shift[c];
            }
        }
        Ok(())
    }
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_valid(x: &mut Sequence) {
    let n = x.mask.valid * x.channels;
    x.data[..n].iter_mut().for_each(|v| *v = elu(*v));
}

/// Convolution, batch norm and ELU on the valid region; dropout is inert here.
pub fn masked_conv_block(
    x: &Sequence,
    conv: &Conv1d,
    bn: &BatchNorm,
    stride: usize,
    mode: BatchNormMode,
) -> Result<Sequence, ClassifierError> {
    if stride != 1 && stride != 2 {
        return Err(ClassifierError::Shape(format!(
            "stride must be 1 or 2, got {stride}"
        )));
    }
    let mut y = conv.forward(x, stride)?;
    bn.forward(&mut y, mode)?;
    elu_valid(&mut y);
    Ok(y)
}

/// Two conv blocks plus a kernel-1 strided projection on the skip path.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualLayer {
    pub conv1: Conv1d,
    pub bn1: BatchNorm,
    pub conv2: Conv1d,
    pub bn2: BatchNorm,
    pub skip: Conv1d,
}

impl ResidualLayer {
    pub fn zeros(c_in: usize, c_out: usize, kernel: usize) -> Self {
        Self {
            conv1: Conv1d::zeros(c_in, c_out, kernel),
            bn1: BatchNorm::identity(c_out),
            conv2: Conv1d::zeros(c_out, c_out, kernel),
            bn2: BatchNorm::identity(c_out),
            skip: Conv1d::zeros(c_in, c_out, 1),
        }
    }

    pub fn forward(&self, x: &Sequence, mode: BatchNormMode) -> Result<Sequence, ClassifierError> {
        let h = masked_conv_block(x, &self.conv1, &self.bn1, 2, mode)?;
        let mut y = self.conv2.forward(&h, 1)?;
        self.bn2.forward(&mut y, mode)?;
        let s = self.skip.forward(x, 2)?;
        let n = y.mask.valid * y.channels;
        for (a, b) in y.data[..n].iter_mut().zip(&s.data[..n]) {
            *a = elu(*a + b);
        }
        Ok(y)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// GRU cell with gate order `[r, z, n]`; `w_ih` is `3H × I`, `w_hh` is `3H × H`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

impl GruCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w_ih: vec![0.0; 3 * hidden * input],
            w_hh: vec![0.0; 3 * hidden * hidden],
            b_ih: vec![0.0; 3 * hidden],
            b_hh: vec![0.0; 3 * hidden],
        }
    }

    fn matvec(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
        let cols = x.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            *o = b[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn step(&self, x: &[f64], h: &mut [f64], gi: &mut [f64], gh: &mut [f64]) {
        let hs = self.hidden;
        Self::matvec(&self.w_ih, &self.b_ih, x, gi);
        Self::matvec(&self.w_hh, &self.b_hh, h, gh);
        for j in 0..hs {
            let r = sigmoid(gi[j] + gh[j]);
            let z = sigmoid(gi[hs + j] + gh[hs + j]);
            let n = (gi[2 * hs + j] + r * gh[2 * hs + j]).tanh();
            h[j] = (1.0 - z) * n + z * h[j];
        }
    }
}

/// Bidirectional GRU over the valid prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

/// Output of a bidirectional pass.
pub struct BiGruOutput {
    /// Concatenated `[fwd, bwd]` states per timestep.
    pub sequence: Sequence,
    pub last_forward: Vec<f64>,
    pub last_backward: Vec<f64>,
}

impl BiGru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            forward: GruCell::zeros(input, hidden),
            backward: GruCell::zeros(input, hidden),
        }
    }

    pub fn forward(&self, x: &Sequence) -> Result<BiGruOutput, ClassifierError> {
        if x.channels != self.forward.input {
            return Err(ClassifierError::Shape("GRU input width mismatch".into()));
        }
        let hs = self.forward.hidden;
        let mut out = Sequence::zeros(2 * hs, x.mask);
        let mut gi = vec![0.0; 3 * hs];
        let mut gh = vec![0.0; 3 * hs];
        let mut h = vec![0.0; hs];
        for t in 0..x.mask.valid {
            self.forward.step(x.row(t), &mut h, &mut gi, &mut gh);
            out.row_mut(t)[..hs].copy_from_slice(&h);
        }
        let last_forward = h;
        let mut h = vec![0.0; hs];
        for t in (0..x.mask.valid).rev() {
            self.backward.step(x.row(t), &mut h, &mut gi, &mut gh);
            out.row_mut(t)[hs..].copy_from_slice(&h);
        }
        Ok(BiGruOutput {
            sequence: out,
            last_forward,
            last_backward: h,
        })
    }
}

/// Dense layer, weights `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Self {
            c_in,
            c_out,
            weight: vec![0.0; c_in * c_out],
            bias: vec![0.0; c_out],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.c_out];
        GruCell::matvec(&self.weight, &self.bias, x, &mut out);
        out
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
