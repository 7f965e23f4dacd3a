//! Evaluation metrics: the per-task error matrix, average error, backward
//! transfer, Wilcoxon signed-rank comparisons and gate statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::baselines::Method;
use crate::error::{Error, Result};
use crate::nnet::{argmax, forward, Batch, LayerGroup, ParamSet};
use crate::svr::LayerGates;
use crate::taskgen::Example;

const EVAL_CHUNK: usize = 256;

/// Lower-triangular `T x T` matrix; `R[i][j]` is the error on task `j+1` of
/// the model trained through task `i+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RMatrix {
    pub tasks: usize,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl RMatrix {
    pub fn new(tasks: usize) -> Self {
        Self {
            tasks,
            rows: (0..tasks).map(|i| vec![None; i + 1]).collect(),
        }
    }

    /// Builds from complete rows (row `i` holds `i + 1` values).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let tasks = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != i + 1 {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {}",
                    r.len(),
                    i + 1
                )));
            }
        }
        Ok(Self {
            tasks,
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(Some).collect())
                .collect(),
        })
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.rows[i][j] = Some(value);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.rows.get(i).and_then(|r| r.get(j)).copied().flatten()
    }

    pub fn last_row(&self) -> Result<Vec<f64>> {
        let t = self.tasks;
        if t == 0 {
            return Err(Error::IncompleteRecord("no tasks".into()));
        }
        (0..t)
            .map(|j| {
                self.get(t - 1, j)
                    .ok_or_else(|| Error::IncompleteRecord(format!("R[{t}][{}] missing", j + 1)))
            })
            .collect()
    }

    pub fn diagonal(&self) -> Result<Vec<f64>> {
        (0..self.tasks)
            .map(|k| {
                self.get(k, k)
                    .ok_or_else(|| Error::IncompleteRecord(format!("R[{0}][{0}] missing", k + 1)))
            })
            .collect()
    }
}

/// Mean of the last row.
pub fn average_error(r: &RMatrix) -> Result<f64> {
    let row = r.last_row()?;
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// Backward transfer `1/(T-1) Σ_{k<T} (R_kk - R_Tk)`; negative means forgetting.
pub fn bwt(r: &RMatrix) -> Result<f64> {
    let t = r.tasks;
    if t < 2 {
        return Err(Error::InvalidConfig(format!(
            "backward transfer needs T >= 2, got {t}"
        )));
    }
    let last = r.last_row()?;
    let diag = r.diagonal()?;
    Ok((0..t - 1).map(|k| diag[k] - last[k]).sum::<f64>() / (t - 1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Fraction of sequences whose sequence-head argmax is wrong.
    pub error_rate: f64,
    /// Fraction of frames whose frame-head argmax is wrong.
    pub frame_error_rate: f64,
    /// 1 where the sequence prediction is wrong.
    pub per_example: Vec<u8>,
}

pub fn evaluate(params: &ParamSet, test: &[Example]) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot evaluate on an empty test set".into(),
        ));
    }
    let mut per_example = Vec::with_capacity(test.len());
    let mut frame_errors = 0usize;
    let mut frames = 0usize;
    for chunk in test.chunks(EVAL_CHUNK) {
        let batch = Batch::from_examples(chunk)?;
        let out = forward(params, &batch)?;
        for e in 0..batch.b {
            per_example.push(u8::from(argmax(out.dec_row(e)) != batch.seq_labels[e]));
            for f in 0..batch.l {
                frames += 1;
                if argmax(out.ctc_row(e, f)) != batch.frame_labels[e * batch.l + f] {
                    frame_errors += 1;
                }
            }
        }
    }
    let wrong = per_example.iter().map(|&x| x as usize).sum::<usize>();
    Ok(Evaluation {
        error_rate: wrong as f64 / test.len() as f64,
        frame_error_rate: frame_errors as f64 / frames as f64,
        per_example,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigLevel {
    #[serde(rename = "***")]
    P001,
    #[serde(rename = "**")]
    P01,
    #[serde(rename = "*")]
    P05,
    #[serde(rename = "ns")]
    NotSignificant,
}

impl SigLevel {
    pub fn from_p(p: f64) -> Self {
        if p < 0.001 {
            SigLevel::P001
        } else if p < 0.01 {
            SigLevel::P01
        } else if p < 0.05 {
            SigLevel::P05
        } else {
            SigLevel::NotSignificant
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SigLevel::P001 => "***",
            SigLevel::P01 => "**",
            SigLevel::P05 => "*",
            SigLevel::NotSignificant => "ns",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a - b`.
    pub statistic: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub p_value: f64,
    pub level: SigLevel,
    pub exact: bool,
}

pub const WILCOXON_MIN_PAIRS: usize = 5;
pub const WILCOXON_EXACT_MAX: usize = 12;

/// Nonzero differences and their average ranks by absolute value.
fn signed_ranks(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < WILCOXON_MIN_PAIRS {
        return Err(Error::InsufficientPairs {
            needed: WILCOXON_MIN_PAIRS,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    Ok((diffs, ranks))
}

/// Two-sided signed-rank test with zero differences discarded and average
/// ranks for ties. Uses the exact permutation distribution for at most
/// [`WILCOXON_EXACT_MAX`] nonzero pairs and the continuity-corrected normal
/// approximation otherwise.
pub fn wilcoxon_signed_rank(errors_a: &[f64], errors_b: &[f64]) -> Result<WilcoxonResult> {
    let (_, ranks) = signed_ranks(errors_a, errors_b)?;
    if ranks.len() <= WILCOXON_EXACT_MAX {
        wilcoxon_exact(errors_a, errors_b)
    } else {
        wilcoxon_normal(errors_a, errors_b)
    }
}

pub fn wilcoxon_normal(errors_a: &[f64], errors_b: &[f64]) -> Result<WilcoxonResult> {
    let (diffs, ranks) = signed_ranks(errors_a, errors_b)?;
    let n = diffs.len() as f64;
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    for r in &ranks {
        *counts.entry((r * 2.0) as u64).or_insert(0.0) += 1.0;
    }
    for &c in counts.values() {
        tie_term += c * c * c - c;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        (2.0 * (1.0 - normal.cdf(z))).min(1.0)
    };
    Ok(WilcoxonResult {
        statistic: w_plus,
        n: diffs.len(),
        p_value,
        level: SigLevel::from_p(p_value),
        exact: false,
    })
}

/// Exact conditional distribution of `W+` given the observed ranks, computed
/// by dynamic programming over doubled (integer) ranks.
pub fn wilcoxon_exact(errors_a: &[f64], errors_b: &[f64]) -> Result<WilcoxonResult> {
    let (diffs, ranks) = signed_ranks(errors_a, errors_b)?;
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut dist = vec![0f64; total + 1];
    dist[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            dist[s] += dist[s - r];
        }
    }
    let count: f64 = dist.iter().sum();
    let observed: usize = diffs
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    // |2W - total| measures distance from the null centre in doubled units.
    let dev = (2 * observed as i64 - total as i64).abs();
    let extreme: f64 = dist
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as i64 - total as i64).abs() >= dev)
        .map(|(_, c)| c)
        .sum();
    let p_value = (extreme / count).min(1.0);
    Ok(WilcoxonResult {
        statistic: observed as f64 / 2.0,
        n: diffs.len(),
        p_value,
        level: SigLevel::from_p(p_value),
        exact: true,
    })
}

/// Gate values of one adaptation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatingRecord {
    pub task: usize,
    pub layers: Vec<LayerGates>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub count: usize,
    pub mean: f64,
    pub frac_intermediate: f64,
    pub frac_suppressed: f64,
    pub frac_accepted: f64,
}

impl GateSummary {
    pub fn of(gates: &[f64], lo: f64, hi: f64) -> Self {
        let k = gates.len();
        if k == 0 {
            return Self {
                count: 0,
                mean: 0.0,
                frac_intermediate: 0.0,
                frac_suppressed: 0.0,
                frac_accepted: 0.0,
            };
        }
        let suppressed = gates.iter().filter(|&&g| g < lo).count();
        let accepted = gates.iter().filter(|&&g| g >= hi).count();
        // The rest, so a gate exactly at `lo` is intermediate and the three
        // fractions always sum to 1.
        let intermediate = k - suppressed - accepted;
        Self {
            count: k,
            mean: gates.iter().sum::<f64>() / k as f64,
            frac_intermediate: intermediate as f64 / k as f64,
            frac_suppressed: suppressed as f64 / k as f64,
            frac_accepted: accepted as f64 / k as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGateStat {
    pub task: usize,
    pub layer: String,
    pub group: LayerGroup,
    #[serde(flatten)]
    pub summary: GateSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupGateStat {
    /// `None` aggregates over every recorded task.
    pub task: Option<usize>,
    pub group: LayerGroup,
    #[serde(flatten)]
    pub summary: GateSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatingStats {
    pub per_layer: Vec<LayerGateStat>,
    pub per_group: Vec<GroupGateStat>,
}

pub fn gating_stats(history: &[GatingRecord], thresholds: (f64, f64)) -> GatingStats {
    let (lo, hi) = thresholds;
    let mut per_layer = Vec::new();
    let mut per_group = Vec::new();
    let mut all: BTreeMap<LayerGroup, Vec<f64>> = BTreeMap::new();
    for rec in history {
        let mut by_group: BTreeMap<LayerGroup, Vec<f64>> = BTreeMap::new();
        for l in &rec.layers {
            per_layer.push(LayerGateStat {
                task: rec.task,
                layer: l.layer.clone(),
                group: l.group,
                summary: GateSummary::of(&l.gates, lo, hi),
            });
            by_group.entry(l.group).or_default().extend(&l.gates);
            all.entry(l.group).or_default().extend(&l.gates);
        }
        for (group, gates) in by_group {
            per_group.push(GroupGateStat {
                task: Some(rec.task),
                group,
                summary: GateSummary::of(&gates, lo, hi),
            });
        }
    }
    for (group, gates) in all {
        per_group.push(GroupGateStat {
            task: None,
            group,
            summary: GateSummary::of(&gates, lo, hi),
        });
    }
    GatingStats {
        per_layer,
        per_group,
    }
}

/// Memory contents right after the buffer was updated with `task`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub task: usize,
    pub total: usize,
    pub per_task: BTreeMap<usize, usize>,
    pub per_group: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub average_error: f64,
    pub bwt: f64,
    /// `R[T][T]`.
    pub final_task_error: f64,
    pub average_frame_error: f64,
}

/// Everything recorded for one method on one seeded task sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub arm: String,
    pub method: Method,
    pub memory: Option<String>,
    pub seed: u64,
    pub tasks: usize,
    pub lambda: Option<f64>,
    pub r: RMatrix,
    pub r_frame: RMatrix,
    /// Per-example sequence errors of the final model, one vector per task.
    pub per_example_errors: Vec<Vec<u8>>,
    pub gating_history: Vec<GatingRecord>,
    /// Test error on task `t` of the stage-1 model, for `t = 2..=T` (SVR only).
    pub stage1_errors: Vec<f64>,
    pub memory_log: Vec<MemorySnapshot>,
    pub summary: RunSummary,
}

impl RunSummary {
    pub fn from_matrices(r: &RMatrix, r_frame: &RMatrix) -> Result<Self> {
        let last = r.last_row()?;
        Ok(Self {
            average_error: average_error(r)?,
            bwt: bwt(r)?,
            final_task_error: last[last.len() - 1],
            average_frame_error: average_error(r_frame)?,
        })
    }
}

impl RunRecord {
    /// Recomputes the summary and checks the record is internally consistent.
    pub fn validate(&self) -> Result<()> {
        if self.r.tasks != self.tasks || self.r_frame.tasks != self.tasks {
            return Err(Error::IncompleteRecord(format!(
                "R matrix size differs from {} tasks",
                self.tasks
            )));
        }
        for (i, row) in self.r.rows.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::IncompleteRecord(format!(
                    "row {} has {} entries",
                    i + 1,
                    row.len()
                )));
            }
            for v in row.iter().flatten() {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::IncompleteRecord(format!(
                        "error rate {v} outside [0, 1]"
                    )));
                }
            }
        }
        if self.per_example_errors.len() != self.tasks {
            return Err(Error::IncompleteRecord(
                "per-example errors missing for some tasks".into(),
            ));
        }
        let expected = RunSummary::from_matrices(&self.r, &self.r_frame)?;
        if expected != self.summary {
            return Err(Error::IncompleteRecord(
                "summary does not match the R matrix".into(),
            ));
        }
        Ok(())
    }

    /// CSV with the R matrices, summary metrics and gate statistics.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("table,row,col,key,value\n");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for (name, m) in [("r", &self.r), ("r_frame", &self.r_frame)] {
            for (i, row) in m.rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    out.push_str(&format!("{name},{},{},error,{}\n", i + 1, j + 1, fmt(*v)));
                }
            }
        }
        let s = &self.summary;
        for (k, v) in [
            ("average_error", s.average_error),
            ("bwt", s.bwt),
            ("final_task_error", s.final_task_error),
            ("average_frame_error", s.average_frame_error),
        ] {
            out.push_str(&format!("summary,,,{k},{v}\n"));
        }
        if let Some(l) = self.lambda {
            out.push_str(&format!("summary,,,lambda,{l}\n"));
        }
        let stats = gating_stats(&self.gating_history, (GATE_LOW, GATE_HIGH));
        for l in &stats.per_layer {
            for (k, v) in l.summary.fields() {
                out.push_str(&format!("gating,{},{},{k},{v}\n", l.task, l.layer));
            }
        }
        for m in &self.memory_log {
            out.push_str(&format!("memory,{},,total,{}\n", m.task, m.total));
        }
        out
    }
}

pub const GATE_LOW: f64 = 0.05;
pub const GATE_HIGH: f64 = 0.95;

impl GateSummary {
    pub fn fields(&self) -> [(&'static str, f64); 5] {
        [
            ("count", self.count as f64),
            ("mean", self.mean),
            ("frac_intermediate", self.frac_intermediate),
            ("frac_suppressed", self.frac_suppressed),
            ("frac_accepted", self.frac_accepted),
        ]
    }
}
