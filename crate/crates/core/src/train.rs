//! Minibatch training loops and the data-access context handed to adaptation code.

use std::cell::Cell;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::MemoryBuffer;
use crate::nnet::{adam_step, backward, AdamState, Batch, LossSpec, ParamSet};
use crate::taskgen::{stream_rng, Example, TaskData};

/// RNG stream indices derived from an adaptation seed.
pub(crate) const SHUFFLE_STREAM: u64 = 1;
pub(crate) const MEMORY_STREAM: u64 = 2;
pub(crate) const STAGE2_SHUFFLE_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Weight of the per-frame branch in the two-branch loss.
    pub c: f64,
}

impl Schedule {
    pub fn validate(&self, what: &str) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig(format!(
                "{what}.epochs must be at least 1"
            )));
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "{what}.lr must be finite and non-negative"
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig(format!(
                "{what}.batch_size must be positive"
            )));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::InvalidConfig(format!("{what}.c must lie in [0, 1]")));
        }
        Ok(())
    }
}

/// Shuffled minibatch index lists for one epoch; the last batch may be short.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn batch_of(examples: &[Example], idx: &[usize]) -> Result<Batch> {
    Batch::from_examples(idx.iter().map(|&i| &examples[i]))
}

/// Runs Adam over all parameters. `step_fn` returns the loss and gradient
/// for the current parameters and new-task minibatch.
pub fn train_params<F>(
    theta: &ParamSet,
    train: &[Example],
    schedule: &Schedule,
    shuffle_rng: &mut ChaCha8Rng,
    mut step_fn: F,
) -> Result<ParamSet>
where
    F: FnMut(&ParamSet, &Batch) -> Result<(f64, ParamSet)>,
{
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let mut params = theta.clone();
    let mut adam = AdamState::new(params.num_params(), schedule.lr);
    for _ in 0..schedule.epochs {
        for idx in epoch_batches(train.len(), schedule.batch_size, shuffle_rng) {
            let batch = batch_of(train, &idx)?;
            let (_, grads) = step_fn(&params, &batch)?;
            adam_step(&mut params, &grads, &mut adam)?;
        }
    }
    Ok(params)
}

/// Plain fine-tuning on the two-branch cross-entropy. Never consults memory.
pub fn fine_tune(
    theta_prev: &ParamSet,
    train: &[Example],
    schedule: &Schedule,
    seed: u64,
) -> Result<ParamSet> {
    let mut rng = stream_rng(seed, SHUFFLE_STREAM);
    train_params(theta_prev, train, schedule, &mut rng, |p, b| {
        backward(p, b, &LossSpec::ce(schedule.c))
    })
}

/// Adds `scale * other` into `acc` blockwise.
pub fn accumulate(acc: &mut ParamSet, other: &ParamSet, scale: f64) {
    for (a, o) in acc.linear_weights.iter_mut().zip(&other.linear_weights) {
        for (x, y) in a.data_mut().iter_mut().zip(o.data()) {
            *x += scale * y;
        }
    }
    for (a, o) in acc.other_params.iter_mut().zip(&other.other_params) {
        for (x, y) in a.iter_mut().zip(o) {
            *x += scale * y;
        }
    }
}

/// What an adaptation step may see: the current task's data and the memory.
///
/// Datasets of other tasks are unreachable through this handle; asking for
/// one is an error. Memory reads are counted so callers can check that a
/// stage never touched it.
pub struct AdaptContext<'a> {
    task_id: usize,
    data: &'a TaskData,
    memory: Option<&'a MemoryBuffer>,
    memory_reads: Cell<usize>,
}

impl<'a> AdaptContext<'a> {
    pub fn new(task_id: usize, data: &'a TaskData, memory: Option<&'a MemoryBuffer>) -> Self {
        Self {
            task_id,
            data,
            memory,
            memory_reads: Cell::new(0),
        }
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn train(&self) -> &'a [Example] {
        &self.data.train
    }

    pub fn val(&self) -> &'a [Example] {
        &self.data.val
    }

    /// The dataset of `task_id`, which must be the task being adapted to.
    pub fn dataset(&self, task_id: usize) -> Result<&'a TaskData> {
        if task_id != self.task_id {
            return Err(Error::DataAccess(format!(
                "adaptation to task {} requested the dataset of task {task_id}",
                self.task_id
            )));
        }
        Ok(self.data)
    }

    pub fn memory(&self) -> Result<&'a MemoryBuffer> {
        self.memory_reads.set(self.memory_reads.get() + 1);
        match self.memory {
            Some(m) if !m.is_empty() => Ok(m),
            _ => Err(Error::EmptyMemory),
        }
    }

    pub fn memory_reads(&self) -> usize {
        self.memory_reads.get()
    }
}
