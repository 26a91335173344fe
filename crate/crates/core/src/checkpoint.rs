//! Checkpoints: network parameters plus provenance, stored in the same
//! array-container format as datasets.
//!
//! The 64-bit config hash is split into two 32-bit halves so it survives the
//! f64-only payload exactly.

use crate::config::ModelKind;
use crate::container::Container;
use crate::error::{contract, Error, Result};
use crate::matrix::Matrix;
use crate::nets::{
    LSparcomLayer, LSparcomParams, LihtLayer, LihtParams, ListaLayer, ListaParams, Model,
    UadmmOpParams, UnrolledAdmmParams,
};

/// A persisted network: the three trainable kinds plus the fixed
/// hard-threshold network (which carries no trainable scalars).
#[derive(Debug, Clone)]
pub enum Checkpoint {
    Model(Model),
    Liht(LihtParams),
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        match self {
            Checkpoint::Model(Model::Lista(_)) => ModelKind::Lista,
            Checkpoint::Model(Model::LSparcom(_)) => ModelKind::Lsparcom,
            Checkpoint::Model(Model::Uadmm { .. }) => ModelKind::Uadmm,
            Checkpoint::Liht(_) => ModelKind::Liht,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Checkpoint::Model(m) => m.depth(),
            Checkpoint::Liht(p) => p.depth(),
        }
    }

    /// Trainable-scalar count; the fixed hard-threshold network reports its
    /// parameter-matrix footprint (the scalars a learned variant would train).
    pub fn params_count(&self) -> usize {
        match self {
            Checkpoint::Model(m) => m.param_count(),
            Checkpoint::Liht(p) => p
                .stored_layers()
                .iter()
                .map(|l| l.w_t.rows() * l.w_t.cols() + l.w_e.rows() * l.w_e.cols())
                .sum(),
        }
    }

    pub fn forward(&self, y: &Matrix) -> Result<Matrix> {
        match self {
            Checkpoint::Model(m) => m.forward(y),
            Checkpoint::Liht(p) => crate::nets::liht_forward(p, y),
        }
    }

    pub fn to_container(&self, seed: u64, config_hash: u64) -> Result<Container> {
        let mut c = Container::new();
        c.push_scalar("seed", seed as f64)?;
        c.push_scalar("config_hash_hi", (config_hash >> 32) as f64)?;
        c.push_scalar("config_hash_lo", (config_hash & 0xFFFF_FFFF) as f64)?;
        c.push_scalar("depth", self.depth() as f64)?;
        match self {
            Checkpoint::Model(Model::Lista(p)) => {
                c.push_scalar("model_kind", 0.0)?;
                c.push_scalar("tied", if p.tied() { 1.0 } else { 0.0 })?;
                for (i, lay) in p.stored_layers().iter().enumerate() {
                    c.push_matrix(&format!("layer{i}.w_t"), &lay.w_t)?;
                    c.push_matrix(&format!("layer{i}.w_e"), &lay.w_e)?;
                    c.push_scalar(&format!("layer{i}.raw_lambda"), lay.raw_lambda)?;
                }
            }
            Checkpoint::Liht(p) => {
                c.push_scalar("model_kind", 1.0)?;
                c.push_scalar("k", p.k as f64)?;
                for (i, lay) in p.stored_layers().iter().enumerate() {
                    c.push_matrix(&format!("layer{i}.w_t"), &lay.w_t)?;
                    c.push_matrix(&format!("layer{i}.w_e"), &lay.w_e)?;
                }
            }
            Checkpoint::Model(Model::LSparcom(p)) => {
                c.push_scalar("model_kind", 2.0)?;
                for (i, lay) in p.stored_layers().iter().enumerate() {
                    c.push_matrix(&format!("layer{i}.w_t"), &lay.w_t)?;
                    c.push_matrix(&format!("layer{i}.w_e"), &lay.w_e)?;
                    c.push_scalar(&format!("layer{i}.alpha"), lay.alpha)?;
                    c.push_scalar(&format!("layer{i}.raw_beta"), lay.raw_beta)?;
                }
            }
            Checkpoint::Model(Model::Uadmm { params, w }) => {
                c.push_scalar("model_kind", 3.0)?;
                c.push_scalar("train_d", if params.train_d { 1.0 } else { 0.0 })?;
                c.push_scalar("ops_per_stage", params.ops_per_stage() as f64)?;
                c.push_matrix("W", w)?;
                for (l, stage) in params.stages().iter().enumerate() {
                    for (i, op) in stage.iter().enumerate() {
                        c.push_matrix(&format!("stage{l}.op{i}.d"), &op.d)?;
                        c.push_scalar(&format!("stage{l}.op{i}.raw_lambda"), op.raw_lambda)?;
                        c.push_scalar(&format!("stage{l}.op{i}.raw_rho"), op.raw_rho)?;
                        c.push_scalar(&format!("stage{l}.op{i}.raw_eta"), op.raw_eta)?;
                    }
                }
            }
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Checkpoint> {
        let depth = c.scalar("depth")? as usize;
        match c.scalar("model_kind")? as i64 {
            0 => {
                let tied = c.scalar("tied")? != 0.0;
                let stored = if tied { 1 } else { depth.max(1) };
                let mut layers = Vec::with_capacity(stored);
                for i in 0..stored {
                    layers.push(ListaLayer {
                        w_t: c.matrix(&format!("layer{i}.w_t"))?,
                        w_e: c.matrix(&format!("layer{i}.w_e"))?,
                        raw_lambda: c.scalar(&format!("layer{i}.raw_lambda"))?,
                    });
                }
                Ok(Checkpoint::Model(Model::Lista(ListaParams::from_layers(
                    depth, tied, layers,
                )?)))
            }
            1 => {
                let k = c.scalar("k")? as usize;
                let mut layers = Vec::with_capacity(depth);
                for i in 0..depth {
                    layers.push(LihtLayer {
                        w_t: c.matrix(&format!("layer{i}.w_t"))?,
                        w_e: c.matrix(&format!("layer{i}.w_e"))?,
                    });
                }
                Ok(Checkpoint::Liht(LihtParams::from_layers(depth, k, layers)?))
            }
            2 => {
                let mut layers = Vec::with_capacity(depth);
                for i in 0..depth {
                    layers.push(LSparcomLayer {
                        w_t: c.matrix(&format!("layer{i}.w_t"))?,
                        w_e: c.matrix(&format!("layer{i}.w_e"))?,
                        alpha: c.scalar(&format!("layer{i}.alpha"))?,
                        raw_beta: c.scalar(&format!("layer{i}.raw_beta"))?,
                    });
                }
                Ok(Checkpoint::Model(Model::LSparcom(
                    LSparcomParams::from_layers(depth, layers)?,
                )))
            }
            3 => {
                let ops = c.scalar("ops_per_stage")? as usize;
                let train_d = c.scalar("train_d")? != 0.0;
                let w = c.matrix("W")?;
                let mut stages = Vec::with_capacity(depth);
                for l in 0..depth {
                    let mut stage = Vec::with_capacity(ops);
                    for i in 0..ops {
                        stage.push(UadmmOpParams {
                            d: c.matrix(&format!("stage{l}.op{i}.d"))?,
                            raw_lambda: c.scalar(&format!("stage{l}.op{i}.raw_lambda"))?,
                            raw_rho: c.scalar(&format!("stage{l}.op{i}.raw_rho"))?,
                            raw_eta: c.scalar(&format!("stage{l}.op{i}.raw_eta"))?,
                        });
                    }
                    stages.push(stage);
                }
                Ok(Checkpoint::Model(Model::Uadmm {
                    params: UnrolledAdmmParams::from_stages(stages, train_d)?,
                    w,
                }))
            }
            other => Err(Error::Container(format!("unknown model kind code {other}"))),
        }
    }

    /// Provenance stored alongside the parameters.
    pub fn provenance(c: &Container) -> Result<(u64, u64)> {
        let seed = c.scalar("seed")? as u64;
        let hi = c.scalar("config_hash_hi")? as u64;
        let lo = c.scalar("config_hash_lo")? as u64;
        if hi > u32::MAX as u64 || lo > u32::MAX as u64 {
            return Err(contract("corrupt config hash halves"));
        }
        Ok((seed, (hi << 32) | lo))
    }
}
