//! Comparison methods: fine-tuning, separate models, experience replay,
//! distillation on memory, learning without forgetting, and averaging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate, RMatrix};
use crate::nnet::{backward, forward, LossSpec, ParamSet};
use crate::taskgen::{stream_rng, Task};
use crate::train::{
    accumulate, fine_tune, train_params, AdaptContext, Schedule, MEMORY_STREAM, SHUFFLE_STREAM,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FineTune,
    SepModel,
    Er,
    Kd,
    /// Experience replay whose memory loss is half cross-entropy, half distillation.
    ErKd,
    Lwf,
    Fta,
    Svr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FineTune => "fine_tune",
            Method::SepModel => "sep_model",
            Method::Er => "er",
            Method::Kd => "kd",
            Method::ErKd => "er_kd",
            Method::Lwf => "lwf",
            Method::Fta => "fta",
            Method::Svr => "svr",
        }
    }

    pub const ALL: [Method; 8] = [
        Method::FineTune,
        Method::SepModel,
        Method::Er,
        Method::Kd,
        Method::ErKd,
        Method::Lwf,
        Method::Fta,
        Method::Svr,
    ];

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {name:?}")))
    }

    pub fn uses_memory(self) -> bool {
        matches!(self, Method::Er | Method::Kd | Method::ErKd | Method::Svr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: Method,
    pub lambda: f64,
    pub schedule: Schedule,
}

impl BaselineConfig {
    pub fn new(method: Method, lambda: f64) -> Self {
        Self {
            method,
            lambda,
            schedule: Schedule {
                epochs: 10,
                lr: 1e-4,
                batch_size: 64,
                c: 0.3,
            },
        }
    }
}

/// `L_ce(new) + λ · (memory loss)` trained with Adam. `memory_spec` builds
/// the memory-term loss given the teacher's outputs on the memory batch.
fn rehearsal_adapt(
    theta_prev: &ParamSet,
    ctx: &AdaptContext,
    cfg: &BaselineConfig,
    seed: u64,
    ce_share: f64,
    kd_share: f64,
) -> Result<ParamSet> {
    let memory = ctx.memory()?;
    let c = cfg.schedule.c;
    let (ce_w, kd_w) = (cfg.lambda * ce_share, cfg.lambda * kd_share);
    let mut shuffle = stream_rng(seed, SHUFFLE_STREAM);
    let mut mem_rng = stream_rng(seed, MEMORY_STREAM);
    train_params(
        theta_prev,
        ctx.train(),
        &cfg.schedule,
        &mut shuffle,
        |p, new_batch| {
            let (mut value, mut grads) = backward(p, new_batch, &LossSpec::ce(c))?;
            if ce_w == 0.0 && kd_w == 0.0 {
                return Ok((value, grads));
            }
            let mem_batch = memory.sample_memory(cfg.schedule.batch_size, &mut mem_rng)?;
            let teacher_out = if kd_w != 0.0 {
                Some(forward(theta_prev, &mem_batch)?)
            } else {
                None
            };
            let spec = LossSpec::combined(c, ce_w, kd_w, teacher_out.as_ref());
            let (mv, mg) = backward(p, &mem_batch, &spec)?;
            value += mv;
            accumulate(&mut grads, &mg, 1.0);
            Ok((value, grads))
        },
    )
}

pub fn er_adapt(
    theta_prev: &ParamSet,
    ctx: &AdaptContext,
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<ParamSet> {
    rehearsal_adapt(theta_prev, ctx, cfg, seed, 1.0, 0.0)
}

pub fn kd_adapt(
    theta_prev: &ParamSet,
    ctx: &AdaptContext,
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<ParamSet> {
    rehearsal_adapt(theta_prev, ctx, cfg, seed, 0.0, 1.0)
}

pub fn er_kd_adapt(
    theta_prev: &ParamSet,
    ctx: &AdaptContext,
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<ParamSet> {
    rehearsal_adapt(theta_prev, ctx, cfg, seed, 0.5, 0.5)
}

/// Distillation toward the previous model on the new task's own data.
pub fn lwf_adapt(
    theta_prev: &ParamSet,
    ctx: &AdaptContext,
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<ParamSet> {
    let c = cfg.schedule.c;
    let lambda = cfg.lambda;
    let mut shuffle = stream_rng(seed, SHUFFLE_STREAM);
    train_params(
        theta_prev,
        ctx.train(),
        &cfg.schedule,
        &mut shuffle,
        |p, batch| {
            if lambda == 0.0 {
                return backward(p, batch, &LossSpec::ce(c));
            }
            let teacher_out = forward(theta_prev, batch)?;
            backward(
                p,
                batch,
                &LossSpec::combined(c, 1.0, lambda, Some(&teacher_out)),
            )
        },
    )
}

pub fn fine_tune_adapt(
    theta_prev: &ParamSet,
    ctx: &AdaptContext,
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<ParamSet> {
    fine_tune(theta_prev, ctx.train(), &cfg.schedule, seed)
}

/// `(1 - η) θ_prev + η θ̃` with `η = 1/t`.
pub fn fta_merge(theta_prev: &ParamSet, theta_tilde: &ParamSet, t: usize) -> Result<ParamSet> {
    if t == 0 {
        return Err(Error::InvalidConfig("task index starts at 1".into()));
    }
    let eta = 1.0 / t as f64;
    theta_prev.zip_map(theta_tilde, |a, b| (1.0 - eta) * a + eta * b)
}

/// Result matrix of keeping model `k` for task `k`: `R[i][j]` is model `j`'s
/// test error on task `j`, for every `i >= j`.
pub fn sep_model_eval(per_task_models: &[ParamSet], tasks: &[Task]) -> Result<RMatrix> {
    if per_task_models.len() != tasks.len() {
        return Err(Error::InvalidConfig(format!(
            "{} models for {} tasks",
            per_task_models.len(),
            tasks.len()
        )));
    }
    let diag = per_task_models
        .iter()
        .zip(tasks)
        .map(|(m, t)| Ok(evaluate(m, &t.data.test)?.error_rate))
        .collect::<Result<Vec<f64>>>()?;
    let mut r = RMatrix::new(tasks.len());
    for i in 0..tasks.len() {
        for j in 0..=i {
            r.set(i, j, diag[j]);
        }
    }
    Ok(r)
}
