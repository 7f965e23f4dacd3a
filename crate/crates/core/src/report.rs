//! Summary tables over the run records of an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{update_manifest, write_artifact};
use crate::metrics::{
    gating_stats, wilcoxon_signed_rank, GateSummary, GatingRecord, RunRecord, GATE_HIGH, GATE_LOW,
};
use crate::nnet::LayerGroup;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricStats {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub seeds: Vec<u64>,
    pub average_error: MetricStats,
    pub bwt: MetricStats,
    pub final_task_error: MetricStats,
    pub average_frame_error: MetricStats,
    /// Mean over seeds of the last row of R.
    pub final_row: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatingRow {
    pub arm: String,
    /// `"layer"` or `"group"`.
    pub scope: String,
    pub name: String,
    pub group: LayerGroup,
    #[serde(flatten)]
    pub summary: GateSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub arm_a: String,
    pub arm_b: String,
    /// `"***"`, `"**"`, `"*"`, `"ns"`, or `"insufficient_pairs"`.
    pub level: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub n_nonzero: usize,
    pub n_pooled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub arms: Vec<ArmSummary>,
    pub gating: Vec<GatingRow>,
    pub comparisons: Vec<Comparison>,
}

/// Reads every `runs/<arm>/seed-<s>.json` below `run_dir`.
pub fn load_records(run_dir: &Path) -> Result<Vec<RunRecord>> {
    let runs = run_dir.join("runs");
    let arm_dirs = match std::fs::read_dir(&runs) {
        Ok(rd) => rd,
        Err(_) => return Err(Error::Report { files: vec![runs] }),
    };
    let mut paths = Vec::new();
    for entry in arm_dirs {
        let dir = entry?.path();
        if !dir.is_dir() {
            continue;
        }
        for f in std::fs::read_dir(&dir)? {
            let p = f?.path();
            if p.extension().is_some_and(|e| e == "json") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Report { files: vec![runs] });
    }
    let mut records = Vec::new();
    let mut bad: Vec<PathBuf> = Vec::new();
    for p in paths {
        let parsed = std::fs::read(&p)
            .ok()
            .and_then(|bytes| serde_json::from_slice::<RunRecord>(&bytes).ok())
            .filter(|r| r.validate().is_ok());
        match parsed {
            Some(r) => records.push(r),
            None => bad.push(p),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Report { files: bad });
    }
    Ok(records)
}

pub fn build_report(records: &[RunRecord]) -> Report {
    let mut by_arm: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_arm.entry(&r.arm).or_default().push(r);
    }
    for rs in by_arm.values_mut() {
        rs.sort_by_key(|r| r.seed);
    }

    let arms = by_arm
        .iter()
        .map(|(arm, rs)| {
            let col = |f: &dyn Fn(&RunRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let t = rs.iter().map(|r| r.tasks).min().unwrap_or(0);
            let final_row = (0..t)
                .map(|j| {
                    rs.iter()
                        .map(|r| r.r.get(t - 1, j).unwrap_or(f64::NAN))
                        .sum::<f64>()
                        / rs.len() as f64
                })
                .collect();
            ArmSummary {
                arm: arm.to_string(),
                seeds: rs.iter().map(|r| r.seed).collect(),
                average_error: MetricStats::of(&col(&|r| r.summary.average_error)),
                bwt: MetricStats::of(&col(&|r| r.summary.bwt)),
                final_task_error: MetricStats::of(&col(&|r| r.summary.final_task_error)),
                average_frame_error: MetricStats::of(&col(&|r| r.summary.average_frame_error)),
                final_row,
            }
        })
        .collect();

    let mut gating = Vec::new();
    for (arm, rs) in &by_arm {
        // Pool every seed's history; task ids repeat across seeds.
        let history: Vec<GatingRecord> = rs
            .iter()
            .flat_map(|r| r.gating_history.iter().cloned())
            .collect();
        if history.is_empty() {
            continue;
        }
        let mut per_layer: BTreeMap<(LayerGroup, String), Vec<f64>> = BTreeMap::new();
        for rec in &history {
            for l in &rec.layers {
                per_layer
                    .entry((l.group, l.layer.clone()))
                    .or_default()
                    .extend(&l.gates);
            }
        }
        for ((group, name), gates) in per_layer {
            gating.push(GatingRow {
                arm: arm.to_string(),
                scope: "layer".into(),
                name,
                group,
                summary: GateSummary::of(&gates, GATE_LOW, GATE_HIGH),
            });
        }
        for g in gating_stats(&history, (GATE_LOW, GATE_HIGH)).per_group {
            if g.task.is_none() {
                gating.push(GatingRow {
                    arm: arm.to_string(),
                    scope: "group".into(),
                    name: g.group.name().to_string(),
                    group: g.group,
                    summary: g.summary,
                });
            }
        }
    }

    let pooled: BTreeMap<&str, (Vec<u64>, Vec<f64>)> = by_arm
        .iter()
        .map(|(arm, rs)| {
            let seeds = rs.iter().map(|r| r.seed).collect();
            let errs = rs
                .iter()
                .flat_map(|r| r.per_example_errors.iter().flatten().map(|&e| e as f64))
                .collect();
            (*arm, (seeds, errs))
        })
        .collect();
    let names: Vec<&str> = pooled.keys().copied().collect();
    let mut comparisons = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let (sa, ea) = &pooled[a];
            let (sb, eb) = &pooled[b];
            if sa != sb || ea.len() != eb.len() {
                continue;
            }
            let nonzero = ea.iter().zip(eb).filter(|(x, y)| x != y).count();
            let c = match wilcoxon_signed_rank(ea, eb) {
                Ok(w) => Comparison {
                    arm_a: a.to_string(),
                    arm_b: b.to_string(),
                    level: w.level.as_str().to_string(),
                    statistic: Some(w.statistic),
                    p_value: Some(w.p_value),
                    n_nonzero: nonzero,
                    n_pooled: ea.len(),
                },
                Err(_) => Comparison {
                    arm_a: a.to_string(),
                    arm_b: b.to_string(),
                    level: "insufficient_pairs".into(),
                    statistic: None,
                    p_value: None,
                    n_nonzero: nonzero,
                    n_pooled: ea.len(),
                },
            };
            comparisons.push(c);
        }
    }
    Report {
        arms,
        gating,
        comparisons,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Report {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "arm,n_seeds,average_error_mean,average_error_std,bwt_mean,bwt_std,final_task_error_mean,final_task_error_std,average_frame_error_mean,final_row\n",
        );
        for a in &self.arms {
            let row: Vec<String> = a.final_row.iter().map(f64::to_string).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                a.arm,
                a.seeds.len(),
                a.average_error.mean,
                a.average_error.std,
                a.bwt.mean,
                a.bwt.std,
                a.final_task_error.mean,
                a.final_task_error.std,
                a.average_frame_error.mean,
                row.join(";")
            ));
        }
        out
    }

    pub fn gating_csv(&self) -> String {
        let mut out = String::from(
            "arm,scope,name,group,count,mean,frac_intermediate,frac_suppressed,frac_accepted\n",
        );
        for g in &self.gating {
            let s = &g.summary;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                g.arm,
                g.scope,
                g.name,
                g.group.name(),
                s.count,
                s.mean,
                s.frac_intermediate,
                s.frac_suppressed,
                s.frac_accepted
            ));
        }
        out
    }

    pub fn significance_csv(&self) -> String {
        let mut out = String::from("arm_a,arm_b,level,statistic,p_value,n_nonzero,n_pooled\n");
        for c in &self.comparisons {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.arm_a,
                c.arm_b,
                c.level,
                opt(c.statistic),
                opt(c.p_value),
                c.n_nonzero,
                c.n_pooled
            ));
        }
        out
    }
}

/// Builds the report for `run_dir` and writes it to `run_dir/report/`.
pub fn report(run_dir: &Path) -> Result<Report> {
    let records = load_records(run_dir)?;
    let rep = build_report(&records);
    let mut manifest = BTreeMap::new();
    let mut json = serde_json::to_string_pretty(&rep)?;
    json.push('\n');
    write_artifact(
        run_dir,
        "report/summary.json",
        json.as_bytes(),
        &mut manifest,
    )?;
    write_artifact(
        run_dir,
        "report/summary.csv",
        rep.summary_csv().as_bytes(),
        &mut manifest,
    )?;
    write_artifact(
        run_dir,
        "report/gating.csv",
        rep.gating_csv().as_bytes(),
        &mut manifest,
    )?;
    write_artifact(
        run_dir,
        "report/significance.csv",
        rep.significance_csv().as_bytes(),
        &mut manifest,
    )?;
    update_manifest(run_dir, manifest)?;
    Ok(rep)
}
