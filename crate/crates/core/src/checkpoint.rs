//! Model snapshots in the shared binary container, stored at full f64 precision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binfmt::{Block, Container};
use crate::error::{Error, Result};
use crate::nnet::{Arch, ParamSet};
use crate::svr::GateMode;

/// Gate parameters of an interrupted stage 2, restorable with
/// [`crate::svr::GatedModel::set_trainable`] after rebuilding the gated model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateState {
    pub mode: GateMode,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub task: usize,
    pub gates: Option<GateState>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    arch: Arch,
    task: usize,
    gate_mode: Option<GateMode>,
}

impl Checkpoint {
    pub fn to_container(&self) -> Container {
        let mut blocks = Vec::new();
        for (i, w) in self.params.linear_weights.iter().enumerate() {
            blocks.push(Block::f64(
                format!("w{i}"),
                vec![w.rows(), w.cols()],
                w.data().to_vec(),
            ));
        }
        for (i, o) in self.params.other_params.iter().enumerate() {
            blocks.push(Block::f64(format!("b{i}"), vec![o.len()], o.clone()));
        }
        if let Some(g) = &self.gates {
            blocks.push(Block::f64("alpha", vec![g.alpha.len()], g.alpha.clone()));
        }
        let meta = Meta {
            kind: "checkpoint".into(),
            arch: self.params.arch,
            task: self.task,
            gate_mode: self.gates.as_ref().map(|g| g.mode),
        };
        Container {
            meta: serde_json::to_value(meta).expect("checkpoint metadata serializes"),
            blocks,
        }
    }

    pub fn from_container(c: &Container) -> std::result::Result<Self, String> {
        let meta: Meta = serde_json::from_value(c.meta.clone()).map_err(|e| e.to_string())?;
        if meta.kind != "checkpoint" {
            return Err(format!("expected a checkpoint, found {:?}", meta.kind));
        }
        let mut params = ParamSet::zeros(meta.arch);
        for (i, w) in params.linear_weights.iter_mut().enumerate() {
            let b = c
                .block(&format!("w{i}"))
                .ok_or(format!("missing block w{i}"))?;
            if b.dims != [w.rows(), w.cols()] {
                return Err(format!("block w{i} has dims {:?}", b.dims));
            }
            w.data_mut().copy_from_slice(&b.values);
        }
        for (i, o) in params.other_params.iter_mut().enumerate() {
            let b = c
                .block(&format!("b{i}"))
                .ok_or(format!("missing block b{i}"))?;
            if b.dims != [o.len()] {
                return Err(format!("block b{i} has dims {:?}", b.dims));
            }
            o.copy_from_slice(&b.values);
        }
        let gates = match meta.gate_mode {
            None => None,
            Some(mode) => {
                let b = c.block("alpha").ok_or("missing block alpha")?;
                Some(GateState {
                    mode,
                    alpha: b.values.clone(),
                })
            }
        };
        Ok(Self {
            params,
            task: meta.task,
            gates,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read(path)?;
        Self::from_container(&c).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }
}
