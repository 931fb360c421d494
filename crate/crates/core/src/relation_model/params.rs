use rand::Rng;

use super::{ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, RngStream, Tensor};

pub(crate) const GEOMETRY_DIM: usize = 6;

/// A `[out × in]` weight with an optional bias.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

/// One transformer block. `cross` is present only in decoder blocks of the
/// encoder-decoder variant.
#[derive(Clone, Copy, Debug)]
pub struct Block {
    pub norm1: Norm,
    pub attention: Attention,
    pub cross: Option<(Norm, Attention)>,
    pub norm2: Norm,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Variance-preserving uniform weights, zero biases, unit norm gains.
    Xavier,
    /// As `Xavier`, but the attention output projections and the second MLP
    /// layers start at zero so every block is initially the identity.
    ZeroResidual,
}

/// All trainable tensors of the model plus typed handles into them.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub actor_dim: usize,
    pub scene_dim: usize,
    pub store: ParamStore,
    pub actor_proj: ParamId,
    pub geom_proj: ParamId,
    pub scene_proj: ParamId,
    /// Scene-only encoder blocks (encoder-decoder variant).
    pub scene_blocks: Vec<Block>,
    /// The main stack: unified blocks, cross-attention blocks, or decoder blocks.
    pub blocks: Vec<Block>,
    pub head_fc1: Linear,
    pub head_fc2: Linear,
}

struct Builder {
    store: ParamStore,
    rng: rand_chacha::ChaCha8Rng,
    init: Init,
}

impl Builder {
    fn xavier(&mut self, out: usize, inp: usize) -> Tensor {
        let bound = (6.0 / (out + inp) as f64).sqrt();
        Tensor::from_fn(out, inp, |_, _| self.rng.random_range(-bound..=bound))
    }

    fn matrix(&mut self, name: String, out: usize, inp: usize) -> Result<ParamId> {
        let w = self.xavier(out, inp);
        self.store.register(name, w)
    }

    fn linear(&mut self, name: &str, out: usize, inp: usize, residual: bool) -> Result<Linear> {
        let mut w = self.xavier(out, inp);
        if residual && self.init == Init::ZeroResidual {
            w = Tensor::zeros(&[out, inp]);
        }
        let weight = self.store.register(format!("{name}.weight"), w)?;
        let bias = self.store.register(format!("{name}.bias"), Tensor::zeros(&[out]))?;
        Ok(Linear {
            weight,
            bias: Some(bias),
        })
    }

    fn norm(&mut self, name: &str, d: usize) -> Result<Norm> {
        Ok(Norm {
            gain: self.store.register(format!("{name}.gain"), Tensor::full(&[d], 1.0))?,
            bias: self.store.register(format!("{name}.bias"), Tensor::zeros(&[d]))?,
        })
    }

    fn attention(&mut self, name: &str, d: usize) -> Result<Attention> {
        Ok(Attention {
            query: self.linear(&format!("{name}.query"), d, d, false)?,
            key: self.linear(&format!("{name}.key"), d, d, false)?,
            value: self.linear(&format!("{name}.value"), d, d, false)?,
            output: self.linear(&format!("{name}.output"), d, d, true)?,
        })
    }

    fn block(&mut self, name: &str, cfg: &ModelConfig, cross: bool) -> Result<Block> {
        let d = cfg.embed_dim;
        let norm1 = self.norm(&format!("{name}.norm1"), d)?;
        let attention = self.attention(&format!("{name}.attn"), d)?;
        let cross = if cross {
            Some((
                self.norm(&format!("{name}.cross_norm"), d)?,
                self.attention(&format!("{name}.cross_attn"), d)?,
            ))
        } else {
            None
        };
        Ok(Block {
            norm1,
            attention,
            cross,
            norm2: self.norm(&format!("{name}.norm2"), d)?,
            fc1: self.linear(&format!("{name}.mlp.fc1"), cfg.ffn_dim, d, false)?,
            fc2: self.linear(&format!("{name}.mlp.fc2"), d, cfg.ffn_dim, true)?,
        })
    }
}

impl ModelParams {
    /// Registers every parameter under a unique dotted name and initialises it
    /// from `rng`.
    pub fn init(cfg: &ModelConfig, actor_dim: usize, scene_dim: usize, init: Init, rng: &RngStream) -> Result<Self> {
        cfg.validate()?;
        if actor_dim == 0 || scene_dim == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        let d = cfg.embed_dim;
        let mut b = Builder {
            store: ParamStore::new(),
            rng: rng.generator(),
            init,
        };
        let actor_proj = b.matrix("embed.actor".into(), d, actor_dim)?;
        let geom_proj = b.matrix("embed.geometry".into(), d, GEOMETRY_DIM)?;
        let scene_proj = b.matrix("embed.scene".into(), d, scene_dim)?;
        let mut scene_blocks = Vec::new();
        let mut blocks = Vec::new();
        match cfg.variant {
            Variant::Unified | Variant::DecoderOnly => {
                for l in 0..cfg.layers {
                    blocks.push(b.block(&format!("blocks.{l}"), cfg, false)?);
                }
            }
            Variant::EncoderDecoder => {
                for l in 0..cfg.layers {
                    scene_blocks.push(b.block(&format!("scene_blocks.{l}"), cfg, false)?);
                }
                for l in 0..cfg.layers {
                    blocks.push(b.block(&format!("blocks.{l}"), cfg, true)?);
                }
            }
        }
        let head_fc1 = b.linear("head.fc1", d, d, false)?;
        let head_fc2 = b.linear("head.fc2", cfg.num_classes, d, false)?;
        Ok(ModelParams {
            config: cfg.clone(),
            actor_dim,
            scene_dim,
            store: b.store,
            actor_proj,
            geom_proj,
            scene_proj,
            scene_blocks,
            blocks,
            head_fc1,
            head_fc2,
        })
    }

    /// Overwrites a parameter by name.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .store
            .id_of(name)
            .ok_or_else(|| Error::Contract(format!("no parameter named `{name}`")))?;
        let slot = self.store.value_mut(id)?;
        if slot.shape() != value.shape() {
            return Err(Error::dim("set parameter", slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }

    /// Zeros every parameter whose name ends with `suffix`.
    pub fn zero_matching(&mut self, suffix: &str) -> Result<usize> {
        let mut n = 0;
        for p in self.store.params_mut()? {
            if p.name.ends_with(suffix) {
                p.value = Tensor::zeros(p.value.shape());
                n += 1;
            }
        }
        Ok(n)
    }
}
