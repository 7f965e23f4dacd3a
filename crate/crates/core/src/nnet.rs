//! A small two-branch network: a frame-wise tanh encoder feeding a per-frame
//! classification head (the "ctc" branch) and a mean-pooled sequence head
//! (the "dec" branch). Gradients are computed analytically.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::taskgen::Example;

pub const ENC1: usize = 0;
pub const ENC2: usize = 1;
pub const CTC_HEAD: usize = 2;
pub const DEC_HEAD: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerGroup {
    Encoder,
    HeadCtc,
    HeadDec,
}

impl LayerGroup {
    pub fn name(self) -> &'static str {
        match self {
            LayerGroup::Encoder => "encoder",
            LayerGroup::HeadCtc => "head_ctc",
            LayerGroup::HeadDec => "head_dec",
        }
    }
}

/// Network dimensions. The layer layout is fixed; only sizes vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    pub frames: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            input_dim: 16,
            hidden_dim: 32,
            classes: 4,
            frames: 6,
        }
    }
}

impl Arch {
    /// `(d_out, d_in, group, name)` for each linear layer in order.
    pub fn layers(&self) -> [(usize, usize, LayerGroup, &'static str); 4] {
        [
            (self.hidden_dim, self.input_dim, LayerGroup::Encoder, "enc1"),
            (
                self.hidden_dim,
                self.hidden_dim,
                LayerGroup::Encoder,
                "enc2",
            ),
            (self.classes, self.hidden_dim, LayerGroup::HeadCtc, "ctc"),
            (self.classes, self.hidden_dim, LayerGroup::HeadDec, "dec"),
        ]
    }

    pub fn layer_names(&self) -> Vec<&'static str> {
        self.layers().iter().map(|l| l.3).collect()
    }
}

/// All trainable values of the network: one weight matrix per linear layer
/// plus the remaining parameters (biases), one vector per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub arch: Arch,
    pub linear_weights: Vec<Matrix>,
    pub groups: Vec<LayerGroup>,
    pub other_params: Vec<Vec<f64>>,
}

impl ParamSet {
    pub fn zeros(arch: Arch) -> Self {
        let layers = arch.layers();
        Self {
            arch,
            linear_weights: layers.iter().map(|l| Matrix::zeros(l.0, l.1)).collect(),
            groups: layers.iter().map(|l| l.2).collect(),
            other_params: layers.iter().map(|l| vec![0.0; l.0]).collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Arch, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        for w in &mut p.linear_weights {
            let (fan_out, fan_in) = w.shape();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in w.data_mut() {
                *x = rng.random_range(-a..a);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch)
    }

    pub fn num_params(&self) -> usize {
        self.linear_weights
            .iter()
            .map(|w| w.data().len())
            .sum::<usize>()
            + self.other_params.iter().map(Vec::len).sum::<usize>()
    }

    pub fn num_linear_params(&self) -> usize {
        self.linear_weights.iter().map(|w| w.data().len()).sum()
    }

    pub fn check_same_shape(&self, other: &ParamSet) -> Result<()> {
        let same = self.linear_weights.len() == other.linear_weights.len()
            && self.other_params.len() == other.other_params.len()
            && self
                .linear_weights
                .iter()
                .zip(&other.linear_weights)
                .all(|(a, b)| a.shape() == b.shape())
            && self
                .other_params
                .iter()
                .zip(&other.other_params)
                .all(|(a, b)| a.len() == b.len());
        if same {
            Ok(())
        } else {
            Err(Error::Shape("parameter sets have different layouts".into()))
        }
    }

    /// Weights first (layer order, row-major), then other parameters.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for w in &self.linear_weights {
            out.extend_from_slice(w.data());
        }
        for o in &self.other_params {
            out.extend_from_slice(o);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "flat vector of {} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        for w in &mut self.linear_weights {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        for o in &mut self.other_params {
            let n = o.len();
            o.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Elementwise combination of two identically shaped sets.
    pub fn zip_map(&self, other: &ParamSet, f: impl Fn(f64, f64) -> f64) -> Result<ParamSet> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (w, o) in out.linear_weights.iter_mut().zip(&other.linear_weights) {
            for (x, y) in w.data_mut().iter_mut().zip(o.data()) {
                *x = f(*x, *y);
            }
        }
        for (p, o) in out.other_params.iter_mut().zip(&other.other_params) {
            for (x, y) in p.iter_mut().zip(o) {
                *x = f(*x, *y);
            }
        }
        Ok(out)
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// A minibatch of `b` sequences of `l` frames of dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub b: usize,
    pub l: usize,
    pub d: usize,
    /// `b * l * d` values, example-major then frame-major.
    pub inputs: Vec<f64>,
    /// `b * l` class indices.
    pub frame_labels: Vec<usize>,
    pub seq_labels: Vec<usize>,
}

impl Batch {
    pub fn from_examples<'a, I>(examples: I) -> Result<Batch>
    where
        I: IntoIterator<Item = &'a Example>,
    {
        let mut batch = Batch {
            b: 0,
            l: 0,
            d: 0,
            inputs: Vec::new(),
            frame_labels: Vec::new(),
            seq_labels: Vec::new(),
        };
        for ex in examples {
            if batch.b == 0 {
                batch.l = ex.frame_labels.len();
                batch.d = ex.frames.len() / batch.l.max(1);
            } else if ex.frame_labels.len() != batch.l || ex.frames.len() != batch.l * batch.d {
                return Err(Error::Shape("examples in a batch differ in shape".into()));
            }
            batch.inputs.extend(ex.frames.iter().map(|&x| x as f64));
            batch
                .frame_labels
                .extend(ex.frame_labels.iter().map(|&y| y as usize));
            batch.seq_labels.push(ex.label as usize);
            batch.b += 1;
        }
        if batch.b == 0 || batch.l == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        Ok(batch)
    }

    fn validate(&self, arch: &Arch) -> Result<()> {
        if self.d != arch.input_dim {
            return Err(Error::Shape(format!(
                "frame dimension {} but model expects {}",
                self.d, arch.input_dim
            )));
        }
        if self.b == 0 || self.l == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if self.inputs.len() != self.b * self.l * self.d
            || self.frame_labels.len() != self.b * self.l
            || self.seq_labels.len() != self.b
        {
            return Err(Error::Shape(
                "batch buffers inconsistent with b, l, d".into(),
            ));
        }
        let c = arch.classes;
        if self
            .frame_labels
            .iter()
            .chain(&self.seq_labels)
            .any(|&y| y >= c)
        {
            return Err(Error::InvalidInput(format!("label outside [0, {c})")));
        }
        Ok(())
    }
}

/// Output distributions of both branches.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOut {
    pub b: usize,
    pub l: usize,
    pub classes: usize,
    /// `b * l * C` per-frame probabilities.
    pub ctc_probs: Vec<f64>,
    /// `b * C` sequence probabilities.
    pub dec_probs: Vec<f64>,
}

impl ForwardOut {
    pub fn ctc_row(&self, example: usize, frame: usize) -> &[f64] {
        let start = (example * self.l + frame) * self.classes;
        &self.ctc_probs[start..start + self.classes]
    }

    pub fn dec_row(&self, example: usize) -> &[f64] {
        &self.dec_probs[example * self.classes..(example + 1) * self.classes]
    }
}

struct Activations {
    h1: Vec<f64>,
    h2: Vec<f64>,
    pooled: Vec<f64>,
    ctc_logp: Vec<f64>,
    dec_logp: Vec<f64>,
}

/// `out[r] = W x[r] + bias` for every row of `x`.
fn affine_rows(x: &[f64], rows: usize, w: &Matrix, bias: &[f64], out: &mut [f64]) {
    let (d_out, d_in) = w.shape();
    for r in 0..rows {
        let xr = &x[r * d_in..(r + 1) * d_in];
        let or = &mut out[r * d_out..(r + 1) * d_out];
        for o in 0..d_out {
            let wr = w.row(o);
            let mut acc = bias[o];
            for i in 0..d_in {
                acc += wr[i] * xr[i];
            }
            or[o] = acc;
        }
    }
}

fn log_softmax_rows(z: &mut [f64], width: usize) {
    for row in z.chunks_mut(width) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
}

fn activations(params: &ParamSet, batch: &Batch) -> Result<Activations> {
    let arch = params.arch;
    batch.validate(&arch)?;
    let (n, h, c) = (batch.b * batch.l, arch.hidden_dim, arch.classes);
    let mut h1 = vec![0.0; n * h];
    affine_rows(
        &batch.inputs,
        n,
        &params.linear_weights[ENC1],
        &params.other_params[ENC1],
        &mut h1,
    );
    h1.iter_mut().for_each(|v| *v = v.tanh());
    let mut h2 = vec![0.0; n * h];
    affine_rows(
        &h1,
        n,
        &params.linear_weights[ENC2],
        &params.other_params[ENC2],
        &mut h2,
    );
    h2.iter_mut().for_each(|v| *v = v.tanh());

    let mut ctc_logp = vec![0.0; n * c];
    affine_rows(
        &h2,
        n,
        &params.linear_weights[CTC_HEAD],
        &params.other_params[CTC_HEAD],
        &mut ctc_logp,
    );
    log_softmax_rows(&mut ctc_logp, c);

    let inv_l = 1.0 / batch.l as f64;
    let mut pooled = vec![0.0; batch.b * h];
    for e in 0..batch.b {
        let dst = &mut pooled[e * h..(e + 1) * h];
        for f in 0..batch.l {
            let src = &h2[(e * batch.l + f) * h..(e * batch.l + f + 1) * h];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        dst.iter_mut().for_each(|v| *v *= inv_l);
    }
    let mut dec_logp = vec![0.0; batch.b * c];
    affine_rows(
        &pooled,
        batch.b,
        &params.linear_weights[DEC_HEAD],
        &params.other_params[DEC_HEAD],
        &mut dec_logp,
    );
    log_softmax_rows(&mut dec_logp, c);

    Ok(Activations {
        h1,
        h2,
        pooled,
        ctc_logp,
        dec_logp,
    })
}

pub fn forward(params: &ParamSet, batch: &Batch) -> Result<ForwardOut> {
    let act = activations(params, batch)?;
    Ok(ForwardOut {
        b: batch.b,
        l: batch.l,
        classes: params.arch.classes,
        ctc_probs: act.ctc_logp.iter().map(|v| v.exp()).collect(),
        dec_probs: act.dec_logp.iter().map(|v| v.exp()).collect(),
    })
}

/// What a loss term pulls the output distributions toward.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    /// One-hot ground-truth labels of the batch.
    Labels,
    /// Soft targets, e.g. a teacher's output distributions.
    Soft(&'a ForwardOut),
}

#[derive(Clone, Copy, Debug)]
pub struct LossTerm<'a> {
    pub weight: f64,
    pub target: Target<'a>,
}

/// A weighted sum of two-branch cross-entropies, each of the form
/// `c * mean_frames CE(ctc) + (1 - c) * mean_examples CE(dec)`.
#[derive(Clone, Debug)]
pub struct LossSpec<'a> {
    pub c: f64,
    pub terms: Vec<LossTerm<'a>>,
}

impl<'a> LossSpec<'a> {
    pub fn ce(c: f64) -> Self {
        Self {
            c,
            terms: vec![LossTerm {
                weight: 1.0,
                target: Target::Labels,
            }],
        }
    }

    pub fn kd(c: f64, teacher: &'a ForwardOut) -> Self {
        Self {
            c,
            terms: vec![LossTerm {
                weight: 1.0,
                target: Target::Soft(teacher),
            }],
        }
    }

    /// `ce_weight * L_ce + kd_weight * L_kd`; zero-weight terms are dropped.
    pub fn combined(
        c: f64,
        ce_weight: f64,
        kd_weight: f64,
        teacher: Option<&'a ForwardOut>,
    ) -> Self {
        let mut terms = Vec::new();
        if ce_weight != 0.0 {
            terms.push(LossTerm {
                weight: ce_weight,
                target: Target::Labels,
            });
        }
        if kd_weight != 0.0 {
            if let Some(t) = teacher {
                terms.push(LossTerm {
                    weight: kd_weight,
                    target: Target::Soft(t),
                });
            }
        }
        Self { c, terms }
    }
}

fn check_teacher(t: &ForwardOut, batch: &Batch, classes: usize) -> Result<()> {
    if t.b != batch.b || t.l != batch.l || t.classes != classes {
        return Err(Error::Shape(format!(
            "teacher output ({}, {}, {}) does not match batch ({}, {}, {})",
            t.b, t.l, t.classes, batch.b, batch.l, classes
        )));
    }
    Ok(())
}

/// Per-branch weighted target mass: for each output row, `sum_t w_t q_t`.
fn branch_targets(
    spec: &LossSpec,
    batch: &Batch,
    classes: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = batch.b * batch.l;
    let mut ctc = vec![0.0; n * classes];
    let mut dec = vec![0.0; batch.b * classes];
    let mut total = 0.0;
    for term in &spec.terms {
        total += term.weight;
        match term.target {
            Target::Labels => {
                for (r, &y) in batch.frame_labels.iter().enumerate() {
                    ctc[r * classes + y] += term.weight;
                }
                for (e, &y) in batch.seq_labels.iter().enumerate() {
                    dec[e * classes + y] += term.weight;
                }
            }
            Target::Soft(t) => {
                check_teacher(t, batch, classes)?;
                for (d, q) in ctc.iter_mut().zip(&t.ctc_probs) {
                    *d += term.weight * q;
                }
                for (d, q) in dec.iter_mut().zip(&t.dec_probs) {
                    *d += term.weight * q;
                }
            }
        }
    }
    Ok((ctc, dec, total))
}

fn loss_from(act: &Activations, batch: &Batch, c: f64, ctc_t: &[f64], dec_t: &[f64]) -> f64 {
    let ctc: f64 = -ctc_t
        .iter()
        .zip(&act.ctc_logp)
        .map(|(q, lp)| q * lp)
        .sum::<f64>();
    let dec: f64 = -dec_t
        .iter()
        .zip(&act.dec_logp)
        .map(|(q, lp)| q * lp)
        .sum::<f64>();
    c * ctc / (batch.b * batch.l) as f64 + (1.0 - c) * dec / batch.b as f64
}

pub fn loss(params: &ParamSet, batch: &Batch, spec: &LossSpec) -> Result<f64> {
    let act = activations(params, batch)?;
    let (ctc_t, dec_t, _) = branch_targets(spec, batch, params.arch.classes)?;
    Ok(loss_from(&act, batch, spec.c, &ctc_t, &dec_t))
}

/// Two-branch cross-entropy against the batch labels.
pub fn loss_ce(params: &ParamSet, batch: &Batch, c: f64) -> Result<f64> {
    loss(params, batch, &LossSpec::ce(c))
}

/// Distillation cross-entropy of the student's outputs against a teacher's.
pub fn loss_kd(params: &ParamSet, teacher_out: &ForwardOut, batch: &Batch, c: f64) -> Result<f64> {
    loss(params, batch, &LossSpec::kd(c, teacher_out))
}

/// Loss value and its gradient with respect to every parameter.
pub fn backward(params: &ParamSet, batch: &Batch, spec: &LossSpec) -> Result<(f64, ParamSet)> {
    let arch = params.arch;
    let act = activations(params, batch)?;
    let (ctc_t, dec_t, total) = branch_targets(spec, batch, arch.classes)?;
    let value = loss_from(&act, batch, spec.c, &ctc_t, &dec_t);

    let (b, l, h) = (batch.b, batch.l, arch.hidden_dim);
    let n = b * l;
    let mut grads = params.zeros_like();

    // dL/dz = scale * (total * p - sum_t w_t q_t) per output row.
    let ctc_scale = spec.c / n as f64;
    let dz_ctc: Vec<f64> = act
        .ctc_logp
        .iter()
        .zip(&ctc_t)
        .map(|(lp, q)| ctc_scale * (total * lp.exp() - q))
        .collect();
    let dec_scale = (1.0 - spec.c) / b as f64;
    let dz_dec: Vec<f64> = act
        .dec_logp
        .iter()
        .zip(&dec_t)
        .map(|(lp, q)| dec_scale * (total * lp.exp() - q))
        .collect();

    let mut dh2 = vec![0.0; n * h];
    accumulate_layer(
        &dz_ctc,
        &act.h2,
        n,
        &params.linear_weights[CTC_HEAD],
        &mut grads,
        CTC_HEAD,
        Some(&mut dh2),
    );

    let mut dpooled = vec![0.0; b * h];
    accumulate_layer(
        &dz_dec,
        &act.pooled,
        b,
        &params.linear_weights[DEC_HEAD],
        &mut grads,
        DEC_HEAD,
        Some(&mut dpooled),
    );
    let inv_l = 1.0 / l as f64;
    for e in 0..b {
        let src = &dpooled[e * h..(e + 1) * h];
        for f in 0..l {
            let dst = &mut dh2[(e * l + f) * h..(e * l + f + 1) * h];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * inv_l;
            }
        }
    }

    let da2: Vec<f64> = dh2
        .iter()
        .zip(&act.h2)
        .map(|(g, a)| g * (1.0 - a * a))
        .collect();
    let mut dh1 = vec![0.0; n * h];
    accumulate_layer(
        &da2,
        &act.h1,
        n,
        &params.linear_weights[ENC2],
        &mut grads,
        ENC2,
        Some(&mut dh1),
    );
    let da1: Vec<f64> = dh1
        .iter()
        .zip(&act.h1)
        .map(|(g, a)| g * (1.0 - a * a))
        .collect();
    accumulate_layer(
        &da1,
        &batch.inputs,
        n,
        &params.linear_weights[ENC1],
        &mut grads,
        ENC1,
        None,
    );

    Ok((value, grads))
}

/// Given `dz` for `z = W x + b` over `rows` rows, accumulate weight and bias
/// gradients into `grads[layer]` and optionally write `dx`.
fn accumulate_layer(
    dz: &[f64],
    x: &[f64],
    rows: usize,
    w: &Matrix,
    grads: &mut ParamSet,
    layer: usize,
    dx: Option<&mut Vec<f64>>,
) {
    let (d_out, d_in) = w.shape();
    {
        let gw = grads.linear_weights[layer].data_mut();
        for r in 0..rows {
            let xr = &x[r * d_in..(r + 1) * d_in];
            for o in 0..d_out {
                let g = dz[r * d_out + o];
                if g == 0.0 {
                    continue;
                }
                let row = &mut gw[o * d_in..(o + 1) * d_in];
                for (wi, xi) in row.iter_mut().zip(xr) {
                    *wi += g * xi;
                }
            }
        }
    }
    let gb = &mut grads.other_params[layer];
    for r in 0..rows {
        for o in 0..d_out {
            gb[o] += dz[r * d_out + o];
        }
    }
    if let Some(dx) = dx {
        for r in 0..rows {
            let dxr = &mut dx[r * d_in..(r + 1) * d_in];
            for o in 0..d_out {
                let g = dz[r * d_out + o];
                let wr = w.row(o);
                for (d, wi) in dxr.iter_mut().zip(wr) {
                    *d += g * wi;
                }
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn reset(&mut self) {
        self.step = 0;
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState) -> Result<()> {
    params.check_same_shape(grads)?;
    let mut flat = params.to_flat();
    state.step(&mut flat, &grads.to_flat())?;
    params.assign_flat(&flat)
}

/// Index of the largest entry, ties toward the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(arch: Arch, b: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = b * arch.frames;
        let seq_labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..arch.classes)).collect();
        Batch {
            b,
            l: arch.frames,
            d: arch.input_dim,
            inputs: (0..n * arch.input_dim)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
            frame_labels: (0..n).map(|_| rng.random_range(0..arch.classes)).collect(),
            seq_labels,
        }
    }

    #[test]
    fn zero_params_give_uniform_rows() {
        let arch = Arch::default();
        let out = forward(&ParamSet::zeros(arch), &random_batch(arch, 3, 1)).unwrap();
        assert!(out
            .ctc_probs
            .iter()
            .chain(&out.dec_probs)
            .all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn uniform_loss_is_ln_c() {
        let arch = Arch::default();
        let batch = random_batch(arch, 5, 2);
        for c in [0.0, 0.3, 1.0] {
            let v = loss_ce(&ParamSet::zeros(arch), &batch, c).unwrap();
            assert!((v - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_dim_mismatch_is_shape_error() {
        let arch = Arch::default();
        let mut batch = random_batch(arch, 2, 3);
        batch.d = 8;
        batch.inputs.truncate(2 * 6 * 8);
        assert!(matches!(
            forward(&ParamSet::zeros(arch), &batch),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn teacher_shape_mismatch() {
        let arch = Arch::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ParamSet::init(arch, &mut rng);
        let teacher = forward(&p, &random_batch(arch, 3, 5)).unwrap();
        assert!(matches!(
            loss_kd(&p, &teacher, &random_batch(arch, 4, 5), 0.3),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 3.0];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let lr = 0.01;
        let mut s = AdamState::new(3, lr);
        let g = [0.5, -2.0, 1e-3];
        let mut p = vec![0.0; 3];
        s.step(&mut p, &g).unwrap();
        for i in 0..3 {
            // m_hat = g, v_hat = g^2 at step one.
            let expected = -lr * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_shape_error() {
        let mut s = AdamState::new(3, 0.1);
        assert!(matches!(
            s.step(&mut [0.0; 2], &[0.0; 2]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.25; 4]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = ParamSet::init(Arch::default(), &mut rng);
        let mut q = p.zeros_like();
        q.assign_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.num_params(), 512 + 1024 + 128 + 128 + 32 + 32 + 4 + 4);
    }
}
