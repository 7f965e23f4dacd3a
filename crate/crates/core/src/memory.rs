//! Rehearsal memory with fixed-size and per-task-growing policies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binfmt::Container;
use crate::error::{Error, Result};
use crate::nnet::Batch;
use crate::taskgen::{examples_from_blocks, examples_to_blocks, Example};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "m", rename_all = "snake_case")]
pub enum MemoryPolicy {
    /// Total size capped at `M`, shared equally among the tasks seen so far.
    Fixed(usize),
    /// `M` entries per task; total size `M * t`.
    Increasing(usize),
}

impl MemoryPolicy {
    pub fn label(&self) -> String {
        match self {
            MemoryPolicy::Fixed(m) => format!("{m}"),
            MemoryPolicy::Increasing(m) => format!("{m}t"),
        }
    }

    /// Inverse of [`MemoryPolicy::label`]: `"20"` is fixed, `"1t"` is per task.
    pub fn from_label(label: &str) -> Result<Self> {
        let bad =
            || Error::InvalidConfig(format!("bad memory size {label:?}, expected e.g. 20 or 1t"));
        match label.strip_suffix('t') {
            Some(n) => n.parse().map(MemoryPolicy::Increasing).map_err(|_| bad()),
            None => label.parse().map(MemoryPolicy::Fixed).map_err(|_| bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryEntry {
    pub example: Example,
    pub task_id: usize,
    pub group_id: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBuffer {
    pub policy: MemoryPolicy,
    pub balance_groups: bool,
    entries: Vec<MemoryEntry>,
    /// Every task ever added, with its group, including tasks whose quota
    /// has dropped to zero.
    tasks: BTreeMap<usize, usize>,
}

/// Splits `total` among `n` slots: `floor(total / n)` each, remainder to the first slots.
fn split_quota(total: usize, n: usize) -> Vec<usize> {
    let base = total / n;
    let rem = total % n;
    (0..n).map(|i| base + usize::from(i < rem)).collect()
}

impl MemoryBuffer {
    pub fn new(policy: MemoryPolicy, balance_groups: bool) -> Self {
        Self {
            policy,
            balance_groups,
            entries: Vec::new(),
            tasks: BTreeMap::new(),
        }
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn task_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.task_id).or_insert(0) += 1;
        }
        counts
    }

    pub fn group_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.group_id).or_insert(0) += 1;
        }
        counts
    }

    /// Per-task quotas of the fixed policy for the given `task -> group` map.
    pub fn fixed_quotas(
        m: usize,
        balance_groups: bool,
        tasks: &BTreeMap<usize, usize>,
    ) -> BTreeMap<usize, usize> {
        let mut quotas = BTreeMap::new();
        if tasks.is_empty() {
            return quotas;
        }
        if balance_groups {
            let mut by_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (&task, &group) in tasks {
                by_group.entry(group).or_default().push(task);
            }
            let group_quota = split_quota(m, by_group.len());
            for ((_, members), gq) in by_group.iter().zip(group_quota) {
                for (&task, q) in members.iter().zip(split_quota(gq, members.len())) {
                    quotas.insert(task, q);
                }
            }
        } else {
            let ids: Vec<usize> = tasks.keys().copied().collect();
            for (task, q) in ids.iter().zip(split_quota(m, ids.len())) {
                quotas.insert(*task, q);
            }
        }
        quotas
    }

    /// Adds samples of a new task's training set and evicts per the policy.
    pub fn update_memory(
        &mut self,
        train: &[Example],
        task_id: usize,
        group_id: usize,
        rng_seed: u64,
    ) -> Result<()> {
        if self.tasks.contains_key(&task_id) {
            return Err(Error::InvalidInput(format!(
                "task {task_id} is already in memory"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let quotas = match self.policy {
            MemoryPolicy::Increasing(_) => None,
            MemoryPolicy::Fixed(m) => {
                let mut tasks = self.tasks.clone();
                tasks.insert(task_id, group_id);
                Some(Self::fixed_quotas(m, self.balance_groups, &tasks))
            }
        };
        let new_quota = match (&quotas, self.policy) {
            (Some(q), _) => q[&task_id],
            (None, MemoryPolicy::Increasing(m)) | (None, MemoryPolicy::Fixed(m)) => m,
        };
        if train.len() < new_quota {
            return Err(Error::InsufficientData {
                needed: new_quota,
                available: train.len(),
            });
        }
        if let Some(q) = &quotas {
            self.evict_to(q, &mut rng);
        }
        let mut picked = index::sample(&mut rng, train.len(), new_quota).into_vec();
        picked.sort_unstable();
        self.entries.extend(picked.into_iter().map(|i| MemoryEntry {
            example: train[i].clone(),
            task_id,
            group_id,
        }));
        self.tasks.insert(task_id, group_id);
        Ok(())
    }

    fn evict_to(&mut self, quotas: &BTreeMap<usize, usize>, rng: &mut ChaCha8Rng) {
        let mut keep = vec![false; self.entries.len()];
        for (&task, &quota) in quotas {
            let idx: Vec<usize> = (0..self.entries.len())
                .filter(|&i| self.entries[i].task_id == task)
                .collect();
            if idx.len() <= quota {
                idx.iter().for_each(|&i| keep[i] = true);
            } else {
                for j in index::sample(rng, idx.len(), quota) {
                    keep[idx[j]] = true;
                }
            }
        }
        let mut it = keep.into_iter();
        self.entries.retain(|_| it.next().unwrap());
    }

    /// Task ids added so far, including those that currently hold no entries.
    pub fn seen_tasks(&self) -> Vec<usize> {
        self.tasks.keys().copied().collect()
    }

    /// Indices of `b` entries drawn with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let grouped = self.balance_groups && matches!(self.policy, MemoryPolicy::Increasing(_));
        if !grouped {
            return Ok((0..b)
                .map(|_| rng.random_range(0..self.entries.len()))
                .collect());
        }
        let mut by_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            by_group.entry(e.group_id).or_default().push(i);
        }
        let groups: Vec<&Vec<usize>> = by_group.values().collect();
        Ok((0..b)
            .map(|_| {
                let g = groups[rng.random_range(0..groups.len())];
                g[rng.random_range(0..g.len())]
            })
            .collect())
    }

    pub fn sample_memory<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(b, rng)?;
        Batch::from_examples(idx.iter().map(|&i| &self.entries[i].example))
    }

    fn sidecar_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".meta.json");
        PathBuf::from(p)
    }

    /// Writes entries to `path` and the per-entry task/group record to `<path>.meta.json`.
    pub fn export(&self, path: &Path) -> Result<()> {
        let examples: Vec<Example> = self.entries.iter().map(|e| e.example.clone()).collect();
        let (l, d) = examples
            .first()
            .map(|e| {
                (
                    e.frame_labels.len(),
                    e.frames.len() / e.frame_labels.len().max(1),
                )
            })
            .unwrap_or((0, 0));
        Container {
            meta: serde_json::json!({ "kind": "memory" }),
            blocks: examples_to_blocks("memory", &examples, l, d),
        }
        .write(path)?;
        let sidecar = Sidecar {
            policy: self.policy,
            balance_groups: self.balance_groups,
            entries: self
                .entries
                .iter()
                .map(|e| (e.task_id, e.group_id))
                .collect(),
            tasks: self.tasks.iter().map(|(&t, &g)| (t, g)).collect(),
        };
        std::fs::write(
            Self::sidecar_path(path),
            serde_json::to_vec_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    pub fn import(path: &Path) -> Result<Self> {
        let c = Container::read(path)?;
        let fmt = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let examples = examples_from_blocks(&c, "memory").map_err(fmt)?;
        let sidecar_path = Self::sidecar_path(path);
        let sidecar: Sidecar =
            serde_json::from_slice(&std::fs::read(&sidecar_path)?).map_err(|e| Error::Format {
                path: sidecar_path.clone(),
                reason: e.to_string(),
            })?;
        if sidecar.entries.len() != examples.len() {
            return Err(Error::Format {
                path: sidecar_path,
                reason: format!(
                    "{} metadata records for {} entries",
                    sidecar.entries.len(),
                    examples.len()
                ),
            });
        }
        Ok(Self {
            policy: sidecar.policy,
            balance_groups: sidecar.balance_groups,
            entries: examples
                .into_iter()
                .zip(sidecar.entries)
                .map(|(example, (task_id, group_id))| MemoryEntry {
                    example,
                    task_id,
                    group_id,
                })
                .collect(),
            tasks: sidecar.tasks.into_iter().collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    policy: MemoryPolicy,
    balance_groups: bool,
    entries: Vec<(usize, usize)>,
    tasks: Vec<(usize, usize)>,
}
