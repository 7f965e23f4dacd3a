//! Seeded experiment runner: method x memory grids, SVR ablation arms, and
//! the on-disk layout of their results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{
    er_adapt, er_kd_adapt, fta_merge, kd_adapt, lwf_adapt, sep_model_eval, BaselineConfig, Method,
};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::memory::{MemoryBuffer, MemoryPolicy};
use crate::metrics::{evaluate, GatingRecord, MemorySnapshot, RMatrix, RunRecord, RunSummary};
use crate::nnet::{Arch, ParamSet};
use crate::svr::{svr_adapt, GateMode, MemLossTerms, OthersMode, SvrConfig};
use crate::taskgen::{export_task, generate_sequence, stream_rng, BenchmarkSpec, Task};
use crate::train::{fine_tune, AdaptContext, Schedule};

/// SVR variants of the ablation study. `Full` is the unmodified method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    /// Memory-loss weight held at its `t = 2` value instead of growing with `t`.
    Unscaled,
    CeOnly,
    KdOnly,
    OthersOld,
    OthersNew,
    Unconstrained,
    /// Averaging with the fixed weight `1/t`.
    FixedEta,
    /// A single learned averaging weight trained with replay cross-entropy only.
    LearnedEtaEr,
    /// A single learned averaging weight trained with the full SVR loss.
    LearnedEta,
    ScalarPerLayer,
}

impl Ablation {
    pub const ALL: [Ablation; 11] = [
        Ablation::Full,
        Ablation::Unscaled,
        Ablation::CeOnly,
        Ablation::KdOnly,
        Ablation::OthersOld,
        Ablation::OthersNew,
        Ablation::Unconstrained,
        Ablation::FixedEta,
        Ablation::LearnedEtaEr,
        Ablation::LearnedEta,
        Ablation::ScalarPerLayer,
    ];

    /// Rungs from fixed averaging to the full per-direction gate.
    pub const LADDER: [Ablation; 5] = [
        Ablation::FixedEta,
        Ablation::LearnedEtaEr,
        Ablation::LearnedEta,
        Ablation::ScalarPerLayer,
        Ablation::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::Unscaled => "unscaled",
            Ablation::CeOnly => "ce_only",
            Ablation::KdOnly => "kd_only",
            Ablation::OthersOld => "others_old",
            Ablation::OthersNew => "others_new",
            Ablation::Unconstrained => "unconstrained",
            Ablation::FixedEta => "fixed_eta",
            Ablation::LearnedEtaEr => "learned_eta_er",
            Ablation::LearnedEta => "learned_eta",
            Ablation::ScalarPerLayer => "scalar_per_layer",
        }
    }

    /// SVR configuration of the arm, or `None` for fixed averaging.
    pub fn svr_config(self, base: &SvrConfig) -> Option<SvrConfig> {
        let mut cfg = base.clone();
        match self {
            Ablation::Full => {}
            Ablation::Unscaled => cfg.reg_scale_with_t = false,
            Ablation::CeOnly => cfg.mem_loss_terms = MemLossTerms::CeOnly,
            Ablation::KdOnly => cfg.mem_loss_terms = MemLossTerms::KdOnly,
            Ablation::OthersOld => cfg.others_mode = OthersMode::Old,
            Ablation::OthersNew => cfg.others_mode = OthersMode::New,
            Ablation::Unconstrained => cfg.gate_mode = GateMode::Unconstrained,
            Ablation::FixedEta => return None,
            Ablation::LearnedEtaEr => {
                cfg.gate_mode = GateMode::GlobalEta;
                cfg.mem_loss_terms = MemLossTerms::CeOnly;
                cfg.mem_weight_override = Some(1.0);
            }
            Ablation::LearnedEta => cfg.gate_mode = GateMode::GlobalEta,
            Ablation::ScalarPerLayer => cfg.gate_mode = GateMode::ScalarPerLayer,
        }
        Some(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkSpec,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Memory grid for methods that rehearse.
    pub memory: Vec<MemoryPolicy>,
    pub balance_groups: bool,
    /// Schedule for training task 1 from scratch.
    pub initial: Schedule,
    /// Schedule of the baselines and of fine-tuning on tasks `2..=T`.
    pub adapt: Schedule,
    pub svr: SvrConfig,
    /// Candidate rehearsal/distillation weights, chosen on the first adaptation.
    pub lambda_grid: Vec<f64>,
    pub ablations: Vec<Ablation>,
    pub ablation_memory: MemoryPolicy,
    pub out_dir: PathBuf,
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkSpec::default(),
            seeds: (0..5).collect(),
            methods: vec![
                Method::FineTune,
                Method::Er,
                Method::Kd,
                Method::Fta,
                Method::Svr,
            ],
            memory: vec![
                MemoryPolicy::Increasing(1),
                MemoryPolicy::Fixed(4),
                MemoryPolicy::Fixed(20),
                MemoryPolicy::Fixed(40),
            ],
            balance_groups: false,
            initial: Schedule {
                epochs: 40,
                lr: 1e-3,
                batch_size: 64,
                c: 0.3,
            },
            adapt: Schedule {
                epochs: 10,
                lr: 3e-3,
                batch_size: 64,
                c: 0.3,
            },
            svr: SvrConfig {
                stage1_lr: 3e-3,
                stage2_lr: 0.03,
                ..SvrConfig::default()
            },
            lambda_grid: vec![0.1, 1.0],
            ablations: Ablation::ALL.to_vec(),
            ablation_memory: MemoryPolicy::Increasing(1),
            out_dir: PathBuf::from("out"),
            save_checkpoints: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        self.initial.validate("initial")?;
        self.adapt.validate("adapt")?;
        self.svr.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.lambda_grid.is_empty()
            || self
                .lambda_grid
                .iter()
                .any(|l| *l < 0.0 || !l.is_finite())
        {
            return Err(Error::InvalidConfig(
                "lambda_grid must be a non-empty list of finite non-negative values".into(),
            ));
        }
        for m in self
            .memory
            .iter()
            .chain(std::iter::once(&self.ablation_memory))
        {
            let size = match m {
                MemoryPolicy::Fixed(m) | MemoryPolicy::Increasing(m) => *m,
            };
            if size == 0 {
                return Err(Error::InvalidConfig("memory sizes must be positive".into()));
            }
            if size > self.benchmark.sizes.train {
                return Err(Error::InvalidConfig(format!(
                    "memory size {size} exceeds the {} training examples per task",
                    self.benchmark.sizes.train
                )));
            }
        }
        if self.methods.iter().any(|m| m.uses_memory()) && self.memory.is_empty() {
            return Err(Error::InvalidConfig(
                "rehearsal methods need a non-empty memory grid".into(),
            ));
        }
        Ok(())
    }

    /// Parses a JSON config; unknown keys are rejected with their location.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn arch(&self) -> Arch {
        Arch {
            input_dim: self.benchmark.input_dim,
            hidden_dim: Arch::default().hidden_dim,
            classes: self.benchmark.classes,
            frames: self.benchmark.frames,
        }
    }

    /// One arm per method, times the memory grid for rehearsal methods.
    pub fn method_arms(&self) -> Vec<Arm> {
        let mut arms = Vec::new();
        for &method in &self.methods {
            if method.uses_memory() {
                for &m in &self.memory {
                    arms.push(Arm {
                        name: format!("{}-m{}", method.name(), m.label()),
                        method,
                        memory: Some(m),
                        svr: (method == Method::Svr).then(|| self.svr.clone()),
                    });
                }
            } else {
                arms.push(Arm {
                    name: method.name().to_string(),
                    method,
                    memory: None,
                    svr: None,
                });
            }
        }
        arms
    }

    pub fn ablation_arms(&self) -> Vec<Arm> {
        self.ablations
            .iter()
            .map(|&a| match a.svr_config(&self.svr) {
                Some(svr) => Arm {
                    name: format!("svr-{}", a.name()),
                    method: Method::Svr,
                    memory: Some(self.ablation_memory),
                    svr: Some(svr),
                },
                None => Arm {
                    name: format!("svr-{}", a.name()),
                    method: Method::Fta,
                    memory: None,
                    svr: None,
                },
            })
            .collect()
    }
}

/// A method with its memory policy and, for SVR, its configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub method: Method,
    pub memory: Option<MemoryPolicy>,
    pub svr: Option<SvrConfig>,
}

const TAG_INIT: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_MEMORY: u64 = 3;

/// Seed for sub-computation `(tag, index)` of run seed `seed`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a mixed input.
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(index.wrapping_mul(0x94D0_49BB_1331_11EB))
        .wrapping_add(0x2545_F491_4F6C_DD1D);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Task sequence and task-1 model shared by every arm of one seed.
pub struct SeedContext {
    pub seed: u64,
    pub tasks: Vec<Task>,
    pub theta1: ParamSet,
}

pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedContext> {
    let tasks = generate_sequence(&cfg.benchmark, seed)?;
    let mut init_rng = stream_rng(derive_seed(seed, TAG_INIT, 0), 0);
    let theta0 = ParamSet::init(cfg.arch(), &mut init_rng);
    let theta1 = fine_tune(
        &theta0,
        &tasks[0].data.train,
        &cfg.initial,
        derive_seed(seed, TAG_TRAIN, 1),
    )?;
    Ok(SeedContext {
        seed,
        tasks,
        theta1,
    })
}

struct Step {
    params: ParamSet,
    gating: Option<GatingRecord>,
    stage1_error: Option<f64>,
}

fn adapt_once(
    arm: &Arm,
    cfg: &ExperimentConfig,
    theta_prev: &ParamSet,
    ctx: &AdaptContext,
    t: usize,
    lambda: f64,
    seed: u64,
) -> Result<Step> {
    let baseline = BaselineConfig {
        method: arm.method,
        lambda,
        schedule: cfg.adapt,
    };
    let plain = |params| Step {
        params,
        gating: None,
        stage1_error: None,
    };
    Ok(match arm.method {
        Method::FineTune | Method::SepModel => {
            plain(fine_tune(theta_prev, ctx.train(), &cfg.adapt, seed)?)
        }
        Method::Fta => {
            let tilde = fine_tune(theta_prev, ctx.train(), &cfg.adapt, seed)?;
            plain(fta_merge(theta_prev, &tilde, t)?)
        }
        Method::Er => plain(er_adapt(theta_prev, ctx, &baseline, seed)?),
        Method::Kd => plain(kd_adapt(theta_prev, ctx, &baseline, seed)?),
        Method::ErKd => plain(er_kd_adapt(theta_prev, ctx, &baseline, seed)?),
        Method::Lwf => plain(lwf_adapt(theta_prev, ctx, &baseline, seed)?),
        Method::Svr => {
            let svr_cfg = arm.svr.clone().unwrap_or_else(|| cfg.svr.clone());
            let out = svr_adapt(theta_prev, ctx, t, &svr_cfg, seed)?;
            let stage1_error = evaluate(&out.stage1, &ctx.dataset(t)?.test)?.error_rate;
            Step {
                params: out.params,
                gating: Some(GatingRecord {
                    task: t,
                    layers: out.gates,
                }),
                stage1_error: Some(stage1_error),
            }
        }
    })
}

fn uses_lambda(method: Method) -> bool {
    matches!(method, Method::Er | Method::Kd | Method::ErKd | Method::Lwf)
}

fn snapshot(mem: &MemoryBuffer, task: usize) -> MemorySnapshot {
    MemorySnapshot {
        task,
        total: mem.len(),
        per_task: mem.task_counts(),
        per_group: mem.group_counts(),
    }
}

/// Runs one arm over the task sequence of one seed.
pub fn run_arm(
    arm: &Arm,
    cfg: &ExperimentConfig,
    sc: &SeedContext,
) -> Result<(RunRecord, ParamSet)> {
    let t_max = sc.tasks.len();
    let mut r = RMatrix::new(t_max);
    let mut r_frame = RMatrix::new(t_max);
    let mut memory = arm.memory.map(|p| MemoryBuffer::new(p, cfg.balance_groups));
    let mut memory_log = Vec::new();
    let mut gating_history = Vec::new();
    let mut stage1_errors = Vec::new();
    let mut lambda = None;
    let mut models = vec![sc.theta1.clone()];
    let mut theta = sc.theta1.clone();

    let fill_row =
        |theta: &ParamSet, t: usize, r: &mut RMatrix, r_frame: &mut RMatrix| -> Result<()> {
            for (j, task) in sc.tasks[..t].iter().enumerate() {
                let e = evaluate(theta, &task.data.test)?;
                r.set(t - 1, j, e.error_rate);
                r_frame.set(t - 1, j, e.frame_error_rate);
            }
            Ok(())
        };
    fill_row(&theta, 1, &mut r, &mut r_frame)?;

    for t in 1..=t_max {
        if t > 1 {
            let task = &sc.tasks[t - 1];
            let ctx = AdaptContext::new(t, &task.data, memory.as_ref());
            let seed = derive_seed(sc.seed, TAG_TRAIN, t as u64);
            let step = if uses_lambda(arm.method) {
                let chosen = match lambda {
                    Some(l) => l,
                    None => {
                        let l = select_lambda(arm, cfg, &theta, &ctx, sc, t, seed)?;
                        lambda = Some(l);
                        l
                    }
                };
                adapt_once(arm, cfg, &theta, &ctx, t, chosen, seed)?
            } else {
                adapt_once(arm, cfg, &theta, &ctx, t, 0.0, seed)?
            };
            theta = step.params;
            gating_history.extend(step.gating);
            stage1_errors.extend(step.stage1_error);
            models.push(theta.clone());
            fill_row(&theta, t, &mut r, &mut r_frame)?;
        }
        if let Some(mem) = memory.as_mut() {
            let task = &sc.tasks[t - 1];
            mem.update_memory(
                &task.data.train,
                t,
                task.spec.group_id,
                derive_seed(sc.seed, TAG_MEMORY, t as u64),
            )?;
            memory_log.push(snapshot(mem, t));
        }
    }

    let mut per_example_errors = Vec::with_capacity(t_max);
    if arm.method == Method::SepModel {
        r = sep_model_eval(&models, &sc.tasks)?;
        for (k, task) in sc.tasks.iter().enumerate() {
            let e = evaluate(&models[k], &task.data.test)?;
            for i in k..t_max {
                r_frame.set(i, k, e.frame_error_rate);
            }
            per_example_errors.push(e.per_example);
        }
    } else {
        for task in &sc.tasks {
            per_example_errors.push(evaluate(&theta, &task.data.test)?.per_example);
        }
    }
    let summary = RunSummary::from_matrices(&r, &r_frame)?;
    let record = RunRecord {
        arm: arm.name.clone(),
        method: arm.method,
        memory: arm.memory.map(|m| m.label()),
        seed: sc.seed,
        tasks: t_max,
        lambda,
        r,
        r_frame,
        per_example_errors,
        gating_history,
        stage1_errors,
        memory_log,
        summary,
    };
    Ok((record, theta))
}

/// Picks the grid value with the lowest mean validation error over tasks
/// `1..=t` after the first adaptation; ties go to the earlier value.
fn select_lambda(
    arm: &Arm,
    cfg: &ExperimentConfig,
    theta_prev: &ParamSet,
    ctx: &AdaptContext,
    sc: &SeedContext,
    t: usize,
    seed: u64,
) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &l in &cfg.lambda_grid {
        let step = adapt_once(arm, cfg, theta_prev, ctx, t, l, seed)?;
        let mut total = 0.0;
        for task in &sc.tasks[..t] {
            total += evaluate(&step.params, &task.data.val)?.error_rate;
        }
        let score = total / t as f64;
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((l, score));
        }
    }
    Ok(best.expect("lambda grid is non-empty").0)
}

/// Runs every `(seed, arm)` pair. Records come back ordered by arm, then seed.
pub fn execute(cfg: &ExperimentConfig, arms: &[Arm]) -> Result<Vec<(RunRecord, ParamSet)>> {
    cfg.validate()?;
    let seeds: Vec<SeedContext> = cfg
        .seeds
        .par_iter()
        .map(|&s| prepare_seed(cfg, s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(&Arm, &SeedContext)> = arms
        .iter()
        .flat_map(|a| seeds.iter().map(move |s| (a, s)))
        .collect();
    jobs.par_iter()
        .map(|(arm, sc)| run_arm(arm, cfg, sc))
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let results = execute(cfg, &cfg.method_arms())?;
    write_outputs(cfg, &results, "experiment")?;
    Ok(results.into_iter().map(|(r, _)| r).collect())
}

pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    if cfg.ablations.is_empty() {
        return Err(Error::InvalidConfig("no ablation arms configured".into()));
    }
    let results = execute(cfg, &cfg.ablation_arms())?;
    write_outputs(cfg, &results, "ablation")?;
    Ok(results.into_iter().map(|(r, _)| r).collect())
}

/// Mean of the summary metrics of each arm over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmAggregate {
    pub arm: String,
    pub seeds: Vec<u64>,
    pub mean_average_error: f64,
    pub mean_bwt: f64,
    pub mean_abs_bwt: f64,
    pub mean_final_task_error: f64,
}

pub fn aggregate(records: &[RunRecord]) -> Vec<ArmAggregate> {
    let mut by_arm: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_arm.entry(&r.arm).or_default().push(r);
    }
    by_arm
        .into_iter()
        .map(|(arm, mut rs)| {
            rs.sort_by_key(|r| r.seed);
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&RunRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            ArmAggregate {
                arm: arm.to_string(),
                seeds: rs.iter().map(|r| r.seed).collect(),
                mean_average_error: mean(&|r| r.summary.average_error),
                mean_bwt: mean(&|r| r.summary.bwt),
                mean_abs_bwt: mean(&|r| r.summary.bwt.abs()),
                mean_final_task_error: mean(&|r| r.summary.final_task_error),
            }
        })
        .collect()
}

pub fn aggregate_csv(aggs: &[ArmAggregate]) -> String {
    let mut out = String::from(
        "arm,n_seeds,mean_average_error,mean_bwt,mean_abs_bwt,mean_final_task_error\n",
    );
    for a in aggs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            a.arm,
            a.seeds.len(),
            a.mean_average_error,
            a.mean_bwt,
            a.mean_abs_bwt,
            a.mean_final_task_error
        ));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` under `root` and records its hash.
pub(crate) fn write_artifact(
    root: &Path,
    rel: &str,
    bytes: &[u8],
    manifest: &mut BTreeMap<String, String>,
) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, bytes)?;
    manifest.insert(rel.to_string(), sha256_hex(bytes));
    Ok(())
}

/// Adds `entries` to `root/manifest.json`, keeping hashes of other artifacts.
pub(crate) fn update_manifest(root: &Path, entries: BTreeMap<String, String>) -> Result<()> {
    let path = root.join("manifest.json");
    let mut manifest: BTreeMap<String, String> = match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            path: path.clone(),
            reason: e.to_string(),
        })?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(e.into()),
    };
    manifest.extend(entries);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_outputs(
    cfg: &ExperimentConfig,
    results: &[(RunRecord, ParamSet)],
    kind: &str,
) -> Result<()> {
    let root = &cfg.out_dir;
    let mut manifest = BTreeMap::new();
    for (rec, params) in results {
        let base = format!("runs/{}/seed-{}", rec.arm, rec.seed);
        let mut json = serde_json::to_string_pretty(rec)?;
        json.push('\n');
        write_artifact(
            root,
            &format!("{base}.json"),
            json.as_bytes(),
            &mut manifest,
        )?;
        write_artifact(
            root,
            &format!("{base}.csv"),
            rec.to_csv().as_bytes(),
            &mut manifest,
        )?;
        if cfg.save_checkpoints {
            let ckpt = Checkpoint {
                params: params.clone(),
                task: rec.tasks,
                gates: None,
            };
            write_artifact(
                root,
                &format!("{base}.ckpt"),
                &ckpt.to_container().to_bytes()?,
                &mut manifest,
            )?;
        }
    }
    let records: Vec<RunRecord> = results.iter().map(|(r, _)| r.clone()).collect();
    let aggs = aggregate(&records);
    let mut json = serde_json::to_string_pretty(&aggs)?;
    json.push('\n');
    write_artifact(
        root,
        &format!("{kind}-aggregate.json"),
        json.as_bytes(),
        &mut manifest,
    )?;
    write_artifact(
        root,
        &format!("{kind}-aggregate.csv"),
        aggregate_csv(&aggs).as_bytes(),
        &mut manifest,
    )?;
    let mut cfg_json = serde_json::to_string_pretty(cfg)?;
    cfg_json.push('\n');
    write_artifact(
        root,
        &format!("{kind}-config.json"),
        cfg_json.as_bytes(),
        &mut manifest,
    )?;
    update_manifest(root, manifest)
}

/// Writes every task of every configured seed to `out_dir/data/seed-<s>/task-<t>.svrb`.
pub fn generate_cache(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut manifest = BTreeMap::new();
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        for task in generate_sequence(&cfg.benchmark, seed)? {
            let rel = format!("data/seed-{seed}/task-{}.svrb", task.spec.task_id);
            let path = cfg.out_dir.join(&rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            export_task(&task, &path)?;
            manifest.insert(rel, sha256_hex(&std::fs::read(&path)?));
            written.push(path);
        }
    }
    update_manifest(&cfg.out_dir, manifest)?;
    Ok(written)
}
