//! Singular value-based rehearsal.
//!
//! Adaptation to task `t` runs in two stages. Stage 1 fine-tunes the previous
//! model on the new task without touching memory. Stage 2 decomposes each
//! linear layer's update `ΔW = W̃ - W_prev = Σ s_i u_i v_iᵀ` and learns one gate
//! per rank-one direction, so the layer becomes
//! `W = W_prev + Σ g(α_i) s_i u_i v_iᵀ`. Only the gate parameters `α` are
//! trained in stage 2, jointly on new-task minibatches and memory minibatches
//! (cross-entropy plus distillation toward the previous model, weighted by
//! `(t - 1) / 2`). Biases are set to the average of their old and fine-tuned
//! values and frozen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matmul, svd, Matrix, ThinSvd};
use crate::nnet::{backward, forward, AdamState, Arch, Batch, LayerGroup, LossSpec, ParamSet};
use crate::taskgen::stream_rng;
use crate::train::{
    accumulate, batch_of, epoch_batches, fine_tune, AdaptContext, Schedule, MEMORY_STREAM,
    STAGE2_SHUFFLE_STREAM,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// `g_i = σ(α_i)`, one gate per direction.
    Sigmoid,
    /// `g_i = α_i` with no squashing.
    Unconstrained,
    /// One `σ(α)` per layer shared by all directions.
    ScalarPerLayer,
    /// One `σ(α)` for the whole model, also blending the non-linear parameters
    /// (a learned replacement for the fixed averaging weight of FTA).
    GlobalEta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemLossTerms {
    CeKd,
    CeOnly,
    KdOnly,
}

/// How parameters outside the linear weights are set for stage 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OthersMode {
    Average,
    Old,
    New,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvrConfig {
    pub stage1_epochs: usize,
    pub stage1_lr: f64,
    pub stage2_epochs: usize,
    pub stage2_lr: f64,
    pub alpha_init: f64,
    pub reg_scale_with_t: bool,
    pub mem_loss_terms: MemLossTerms,
    pub c: f64,
    pub batch_size: usize,
    pub gate_mode: GateMode,
    pub others_mode: OthersMode,
    /// Replaces the memory-loss weight when set.
    pub mem_weight_override: Option<f64>,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            stage1_epochs: 10,
            stage1_lr: 1e-4,
            stage2_epochs: 3,
            stage2_lr: 1e-2,
            alpha_init: -4.0,
            reg_scale_with_t: true,
            mem_loss_terms: MemLossTerms::CeKd,
            c: 0.3,
            batch_size: 64,
            gate_mode: GateMode::Sigmoid,
            others_mode: OthersMode::Average,
            mem_weight_override: None,
        }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage1().validate("svr.stage1")?;
        self.stage2().validate("svr.stage2")?;
        if !self.alpha_init.is_finite() {
            return Err(Error::InvalidConfig("svr.alpha_init must be finite".into()));
        }
        if let Some(w) = self.mem_weight_override {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::InvalidConfig(
                    "svr.mem_weight_override must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn stage1(&self) -> Schedule {
        Schedule {
            epochs: self.stage1_epochs,
            lr: self.stage1_lr,
            batch_size: self.batch_size,
            c: self.c,
        }
    }

    pub fn stage2(&self) -> Schedule {
        Schedule {
            epochs: self.stage2_epochs,
            lr: self.stage2_lr,
            batch_size: self.batch_size,
            c: self.c,
        }
    }

    pub fn mem_weight(&self, t: usize) -> f64 {
        match self.mem_weight_override {
            Some(w) => w,
            None if self.reg_scale_with_t => (t as f64 - 1.0) / 2.0,
            None => 0.5,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatedLayer {
    pub w_prev: Matrix,
    pub svd: ThinSvd,
    /// Length `k` for per-direction modes, 1 for `ScalarPerLayer`, empty for `GlobalEta`.
    pub alpha: Vec<f64>,
    pub gate_mode: GateMode,
}

impl GatedLayer {
    pub fn k(&self) -> usize {
        self.svd.k()
    }

    fn gates_with(&self, global_alpha: f64) -> Vec<f64> {
        let k = self.k();
        match self.gate_mode {
            GateMode::Sigmoid => self.alpha.iter().map(|&a| sigmoid(a)).collect(),
            GateMode::Unconstrained => self.alpha.clone(),
            GateMode::ScalarPerLayer => vec![sigmoid(self.alpha[0]); k],
            GateMode::GlobalEta => vec![sigmoid(global_alpha); k],
        }
    }

    /// `W_prev + U diag(g ⊙ s) Vᵀ`.
    pub fn weight_with_gates(&self, gates: &[f64]) -> Result<Matrix> {
        if gates.len() != self.k() {
            return Err(Error::Shape(format!(
                "{} gates for {} directions",
                gates.len(),
                self.k()
            )));
        }
        self.w_prev.add(&self.svd.reconstruct_weighted(gates))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatedModel {
    pub arch: Arch,
    pub groups: Vec<LayerGroup>,
    pub layers: Vec<GatedLayer>,
    /// Frozen non-linear parameters (for every mode except `GlobalEta`).
    pub frozen_others: Vec<Vec<f64>>,
    pub others_prev: Vec<Vec<f64>>,
    pub others_new: Vec<Vec<f64>>,
    pub mode: GateMode,
    pub global_alpha: f64,
}

/// Per-layer gate values, as recorded for gating analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGates {
    pub layer: String,
    pub group: LayerGroup,
    pub gates: Vec<f64>,
}

impl GatedModel {
    pub fn gates(&self, layer: usize) -> Vec<f64> {
        self.layers[layer].gates_with(self.global_alpha)
    }

    /// Overrides every gate value by inverting the gate function. Intended
    /// for checks; `Unconstrained` uses the value itself.
    pub fn force_gates(&mut self, value: f64) {
        let logit = (value / (1.0 - value)).ln();
        self.global_alpha = logit;
        for l in &mut self.layers {
            let a = match l.gate_mode {
                GateMode::Unconstrained => value,
                _ => logit,
            };
            l.alpha.iter_mut().for_each(|x| *x = a);
        }
    }

    pub fn layer_gates(&self) -> Vec<LayerGates> {
        let names = self.arch.layer_names();
        (0..self.layers.len())
            .map(|i| LayerGates {
                layer: names[i].to_string(),
                group: self.groups[i],
                gates: self.gates(i),
            })
            .collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable().len()
    }

    pub fn trainable(&self) -> Vec<f64> {
        if self.mode == GateMode::GlobalEta {
            return vec![self.global_alpha];
        }
        self.layers
            .iter()
            .flat_map(|l| l.alpha.iter().copied())
            .collect()
    }

    pub fn set_trainable(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_trainable() {
            return Err(Error::Shape(format!(
                "{} values for {} gate parameters",
                values.len(),
                self.num_trainable()
            )));
        }
        if self.mode == GateMode::GlobalEta {
            self.global_alpha = values[0];
            return Ok(());
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.alpha.len();
            l.alpha.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn others(&self) -> Vec<Vec<f64>> {
        if self.mode != GateMode::GlobalEta {
            return self.frozen_others.clone();
        }
        let eta = sigmoid(self.global_alpha);
        self.others_prev
            .iter()
            .zip(&self.others_new)
            .map(|(p, n)| p.iter().zip(n).map(|(a, b)| a + eta * (b - a)).collect())
            .collect()
    }
}

/// Builds the gated model from the previous and fine-tuned parameters.
/// `t` is only used to start `GlobalEta` at the FTA weight `1/t`.
pub fn prepare_gated(
    theta_prev: &ParamSet,
    theta_tilde: &ParamSet,
    t: usize,
    cfg: &SvrConfig,
) -> Result<GatedModel> {
    theta_prev.check_same_shape(theta_tilde)?;
    let mode = cfg.gate_mode;
    let layers = theta_prev
        .linear_weights
        .iter()
        .zip(&theta_tilde.linear_weights)
        .map(|(w_prev, w_new)| {
            let delta = w_new.sub(w_prev)?;
            let d = svd(&delta)?;
            let alpha = match mode {
                GateMode::Sigmoid => vec![cfg.alpha_init; d.k()],
                GateMode::Unconstrained => vec![0.0; d.k()],
                GateMode::ScalarPerLayer => vec![cfg.alpha_init],
                GateMode::GlobalEta => Vec::new(),
            };
            Ok(GatedLayer {
                w_prev: w_prev.clone(),
                svd: d,
                alpha,
                gate_mode: mode,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let frozen_others = match cfg.others_mode {
        OthersMode::Average => theta_prev
            .other_params
            .iter()
            .zip(&theta_tilde.other_params)
            .map(|(p, n)| p.iter().zip(n).map(|(a, b)| (a + b) / 2.0).collect())
            .collect(),
        OthersMode::Old => theta_prev.other_params.clone(),
        OthersMode::New => theta_tilde.other_params.clone(),
    };
    let global_alpha = -((t.max(2) - 1) as f64).ln();
    Ok(GatedModel {
        arch: theta_prev.arch,
        groups: theta_prev.groups.clone(),
        layers,
        frozen_others,
        others_prev: theta_prev.other_params.clone(),
        others_new: theta_tilde.other_params.clone(),
        mode,
        global_alpha,
    })
}

/// Materializes the gated model as ordinary parameters.
pub fn effective_weights(gm: &GatedModel) -> ParamSet {
    let linear_weights = (0..gm.layers.len())
        .map(|i| {
            gm.layers[i]
                .weight_with_gates(&gm.gates(i))
                .expect("gate count matches rank")
        })
        .collect();
    ParamSet {
        arch: gm.arch,
        linear_weights,
        groups: gm.groups.clone(),
        other_params: gm.others(),
    }
}

/// `s_i * u_iᵀ G v_i` for every direction of a layer.
fn direction_projections(layer: &GatedLayer, grad_w: &Matrix) -> Result<Vec<f64>> {
    if grad_w.shape() != layer.w_prev.shape() {
        return Err(Error::Shape(format!(
            "weight gradient {:?} for layer of shape {:?}",
            grad_w.shape(),
            layer.w_prev.shape()
        )));
    }
    let gv = matmul(grad_w, &layer.svd.v)?;
    let (m, k) = (layer.svd.u.rows(), layer.k());
    Ok((0..k)
        .map(|i| {
            let dot: f64 = (0..m).map(|r| layer.svd.u.get(r, i) * gv.get(r, i)).sum();
            layer.svd.s[i] * dot
        })
        .collect())
}

/// Gradient of the loss with respect to each layer's gate parameters, given
/// the gradient with respect to the effective weights.
///
/// For `GlobalEta` each layer reports its own contribution (length 1); the
/// total also includes the blended non-linear parameters, see
/// [`gate_gradient`].
pub fn grad_alpha(gm: &GatedModel, dl_dw: &[Matrix]) -> Result<Vec<Vec<f64>>> {
    if dl_dw.len() != gm.layers.len() {
        return Err(Error::Shape(format!(
            "{} weight gradients for {} layers",
            dl_dw.len(),
            gm.layers.len()
        )));
    }
    gm.layers
        .iter()
        .zip(dl_dw)
        .map(|(layer, g)| {
            let proj = direction_projections(layer, g)?;
            Ok(match layer.gate_mode {
                GateMode::Sigmoid => layer
                    .alpha
                    .iter()
                    .zip(&proj)
                    .map(|(&a, &p)| {
                        let s = sigmoid(a);
                        s * (1.0 - s) * p
                    })
                    .collect(),
                GateMode::Unconstrained => proj,
                GateMode::ScalarPerLayer => {
                    let s = sigmoid(layer.alpha[0]);
                    vec![s * (1.0 - s) * proj.iter().sum::<f64>()]
                }
                GateMode::GlobalEta => {
                    let s = sigmoid(gm.global_alpha);
                    vec![s * (1.0 - s) * proj.iter().sum::<f64>()]
                }
            })
        })
        .collect()
}

/// Flat gradient over [`GatedModel::trainable`] from a full parameter gradient.
pub fn gate_gradient(gm: &GatedModel, grads: &ParamSet) -> Result<Vec<f64>> {
    let per_layer = grad_alpha(gm, &grads.linear_weights)?;
    if gm.mode != GateMode::GlobalEta {
        return Ok(per_layer.into_iter().flatten().collect());
    }
    let s = sigmoid(gm.global_alpha);
    let others: f64 = grads
        .other_params
        .iter()
        .zip(gm.others_prev.iter().zip(&gm.others_new))
        .map(|(g, (p, n))| {
            g.iter()
                .zip(p.iter().zip(n))
                .map(|(gi, (a, b))| gi * (b - a))
                .sum::<f64>()
        })
        .sum();
    Ok(vec![
        per_layer.iter().map(|v| v[0]).sum::<f64>() + s * (1.0 - s) * others,
    ])
}

fn check_t(t: usize) -> Result<()> {
    if t < 2 {
        return Err(Error::InvalidConfig(format!(
            "stage 2 needs t >= 2, got {t}"
        )));
    }
    Ok(())
}

/// Loss specification for a memory minibatch.
pub fn memory_loss_spec<'a>(
    cfg: &SvrConfig,
    t: usize,
    teacher_out: &'a crate::nnet::ForwardOut,
) -> LossSpec<'a> {
    let w = cfg.mem_weight(t);
    let (ce, kd) = match cfg.mem_loss_terms {
        MemLossTerms::CeKd => (w, w),
        MemLossTerms::CeOnly => (w, 0.0),
        MemLossTerms::KdOnly => (0.0, w),
    };
    LossSpec::combined(cfg.c, ce, kd, Some(teacher_out))
}

pub fn stage2_loss(
    gm: &GatedModel,
    new_batch: &Batch,
    mem_batch: &Batch,
    teacher: &ParamSet,
    t: usize,
    cfg: &SvrConfig,
) -> Result<f64> {
    Ok(stage2_loss_and_grad(gm, new_batch, mem_batch, teacher, t, cfg)?.0)
}

/// Stage-2 loss and its gradient over the gate parameters.
pub fn stage2_loss_and_grad(
    gm: &GatedModel,
    new_batch: &Batch,
    mem_batch: &Batch,
    teacher: &ParamSet,
    t: usize,
    cfg: &SvrConfig,
) -> Result<(f64, Vec<f64>)> {
    check_t(t)?;
    let params = effective_weights(gm);
    let (mut value, mut grads) = backward(&params, new_batch, &LossSpec::ce(cfg.c))?;
    let teacher_out = forward(teacher, mem_batch)?;
    let spec = memory_loss_spec(cfg, t, &teacher_out);
    if !spec.terms.is_empty() {
        let (mem_value, mem_grads) = backward(&params, mem_batch, &spec)?;
        value += mem_value;
        accumulate(&mut grads, &mem_grads, 1.0);
    }
    Ok((value, gate_gradient(gm, &grads)?))
}

/// Adam over the gate parameters only. `u, s, v`, `W_prev` and the frozen
/// parameters are never written.
pub fn train_gates(
    gm: &mut GatedModel,
    ctx: &AdaptContext,
    teacher: &ParamSet,
    t: usize,
    cfg: &SvrConfig,
    seed: u64,
) -> Result<()> {
    check_t(t)?;
    let memory = ctx.memory()?;
    let train = ctx.train();
    let mut shuffle = stream_rng(seed, STAGE2_SHUFFLE_STREAM);
    let mut mem_rng = stream_rng(seed, MEMORY_STREAM);
    let mut alpha = gm.trainable();
    let mut adam = AdamState::new(alpha.len(), cfg.stage2_lr);
    for _ in 0..cfg.stage2_epochs {
        for idx in epoch_batches(train.len(), cfg.batch_size, &mut shuffle) {
            let new_batch = batch_of(train, &idx)?;
            let mem_batch = memory.sample_memory(cfg.batch_size, &mut mem_rng)?;
            let (_, grad) = stage2_loss_and_grad(gm, &new_batch, &mem_batch, teacher, t, cfg)?;
            adam.step(&mut alpha, &grad)?;
            gm.set_trainable(&alpha)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SvrOutcome {
    pub params: ParamSet,
    pub stage1: ParamSet,
    pub gates: Vec<LayerGates>,
    /// Memory reads observed through the context when stage 1 finished.
    pub memory_reads_stage1: usize,
}

/// Full adaptation to task `t`: fine-tune, gate, train the gates with
/// rehearsal, and materialize. The caller updates the memory afterwards.
pub fn svr_adapt(
    theta_prev: &ParamSet,
    ctx: &AdaptContext,
    t: usize,
    cfg: &SvrConfig,
    seed: u64,
) -> Result<SvrOutcome> {
    check_t(t)?;
    cfg.validate()?;
    let stage1 = fine_tune(theta_prev, ctx.train(), &cfg.stage1(), seed)?;
    let memory_reads_stage1 = ctx.memory_reads();
    let mut gm = prepare_gated(theta_prev, &stage1, t, cfg)?;
    train_gates(&mut gm, ctx, theta_prev, t, cfg, seed)?;
    Ok(SvrOutcome {
        params: effective_weights(&gm),
        stage1,
        gates: gm.layer_gates(),
        memory_reads_stage1,
    })
}
