use super::params::{Attention, Block, Linear, Norm, GEOMETRY_DIM};
use super::{ModelParams, Variant};
use crate::error::{Error, Result};
use crate::numerics::{dropout_mask, RngStream, Tape, Tensor, Var, LAYER_NORM_EPS};
use crate::synthdata::{ActorProposal, SceneContextGrid};

/// Encoder input or output: `K` actor tokens followed by `N` scene tokens,
/// one token per row.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub tokens: Tensor,
    pub actor_count: usize,
    pub scene_count: usize,
}

impl TokenSequence {
    pub fn new(tokens: Tensor, actor_count: usize, scene_count: usize) -> Result<Self> {
        if tokens.rank() != 2 || tokens.rows() != actor_count + scene_count {
            return Err(Error::dim("token sequence", tokens.shape(), &[actor_count + scene_count]));
        }
        Ok(TokenSequence {
            tokens,
            actor_count,
            scene_count,
        })
    }

    pub fn actor_tokens(&self) -> Tensor {
        let d = self.tokens.cols();
        Tensor::matrix_unchecked(self.actor_count, d, self.tokens.data()[..self.actor_count * d].to_vec())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    pub training: bool,
    /// Keep the attention probabilities of every layer and head.
    pub record_attention: bool,
}

impl ForwardOptions {
    pub fn train() -> Self {
        ForwardOptions {
            training: true,
            record_attention: false,
        }
    }

    pub fn eval() -> Self {
        ForwardOptions::default()
    }
}

pub struct ForwardOutput {
    /// `[K × N_cls]` action logits.
    pub logits: Var,
    /// Encoded actor tokens `[K × D]`.
    pub actor_tokens: Var,
    /// Attention per layer as `[heads × queries × keys]`. Unified:
    /// `(K+N) × (K+N)`; decoder variants: actor-to-scene `K × N`.
    pub attention: Vec<Tensor>,
}

const SITE_ATTN_PROBS: u64 = 1;
const SITE_ATTN_OUT: u64 = 2;
const SITE_MLP_OUT: u64 = 3;
const SITE_CROSS_PROBS: u64 = 4;
const SITE_CROSS_OUT: u64 = 5;

struct Pass<'a> {
    tape: &'a mut Tape,
    params: &'a ModelParams,
    rng: RngStream,
    opts: ForwardOptions,
}

impl Pass<'_> {
    fn linear(&mut self, x: Var, l: &Linear) -> Result<Var> {
        let w = self.tape.param(&self.params.store, l.weight);
        let mut y = self.tape.matmul_nt(x, w)?;
        if let Some(b) = l.bias {
            let b = self.tape.param(&self.params.store, b);
            y = self.tape.add_row(y, b)?;
        }
        Ok(y)
    }

    fn norm(&mut self, x: Var, n: &Norm) -> Result<Var> {
        let g = self.tape.param(&self.params.store, n.gain);
        let b = self.tape.param(&self.params.store, n.bias);
        self.tape.layer_norm(x, g, b, LAYER_NORM_EPS)
    }

    fn dropout(&mut self, x: Var, rate: f64, rng: RngStream) -> Result<Var> {
        if !self.opts.training || rate == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(self.tape.value(x).numel(), rate, &rng)?;
        self.tape.mul_const(x, mask)
    }

    /// Multi-head scaled dot-product attention of `xq` over `xkv`.
    fn attention(&mut self, a: &Attention, xq: Var, xkv: Var, rng: RngStream) -> Result<(Var, Option<Tensor>)> {
        let cfg = &self.params.config;
        let (heads, dh) = (cfg.heads, cfg.head_dim());
        let q = self.linear(xq, &a.query)?;
        let k = self.linear(xkv, &a.key)?;
        let v = self.linear(xkv, &a.value)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        let mut maps: Vec<f64> = Vec::new();
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.tape.slice_cols(q, h * dh, dh)?,
                    self.tape.slice_cols(k, h * dh, dh)?,
                    self.tape.slice_cols(v, h * dh, dh)?,
                )
            };
            let s = self.tape.matmul_nt(qh, kh)?;
            let s = self.tape.scale(s, scale);
            let p = self.tape.softmax(s)?;
            if self.opts.record_attention {
                maps.extend_from_slice(self.tape.value(p).data());
            }
            let p = self.dropout(p, cfg.attention_dropout, rng.split(h as u64))?;
            outs.push(self.tape.matmul(p, vh)?);
        }
        let o = if heads == 1 { outs[0] } else { self.tape.concat_cols(&outs)? };
        let recorded = if self.opts.record_attention {
            let (nq, nk) = (self.tape.value(xq).rows(), self.tape.value(xkv).rows());
            Some(Tensor::new(vec![heads, nq, nk], maps)?)
        } else {
            None
        };
        Ok((self.linear(o, &a.output)?, recorded))
    }

    fn mlp(&mut self, b: &Block, x: Var, rng: RngStream) -> Result<Var> {
        let h = self.linear(x, &b.fc1)?;
        let h = self.tape.gelu(h);
        let h = self.linear(h, &b.fc2)?;
        self.dropout(h, self.params.config.dropout, rng)
    }

    /// Self-attention block over all rows of `x`.
    fn self_block(&mut self, b: &Block, x: Var, rng: RngStream) -> Result<(Var, Option<Tensor>)> {
        let rate = self.params.config.dropout;
        if self.params.config.pre_norm {
            let h = self.norm(x, &b.norm1)?;
            let (a, att) = self.attention(&b.attention, h, h, rng.split(SITE_ATTN_PROBS))?;
            let a = self.dropout(a, rate, rng.split(SITE_ATTN_OUT))?;
            let z = self.tape.add(x, a)?;
            let h = self.norm(z, &b.norm2)?;
            let m = self.mlp(b, h, rng.split(SITE_MLP_OUT))?;
            Ok((self.tape.add(z, m)?, att))
        } else {
            let (a, att) = self.attention(&b.attention, x, x, rng.split(SITE_ATTN_PROBS))?;
            let a = self.dropout(a, rate, rng.split(SITE_ATTN_OUT))?;
            let z = self.tape.add(x, a)?;
            let z = self.norm(z, &b.norm1)?;
            let m = self.mlp(b, z, rng.split(SITE_MLP_OUT))?;
            let y = self.tape.add(z, m)?;
            Ok((self.norm(y, &b.norm2)?, att))
        }
    }

    /// Residual attention from `x` into `memory` using `norm` on both sides
    /// (pre-norm) or on the sum (post-norm).
    fn cross(
        &mut self,
        norm: &Norm,
        att: &Attention,
        x: Var,
        memory: Var,
        rng: RngStream,
        out_site: u64,
    ) -> Result<(Var, Option<Tensor>)> {
        let rate = self.params.config.dropout;
        if self.params.config.pre_norm {
            let hq = self.norm(x, norm)?;
            let hk = self.norm(memory, norm)?;
            let (a, w) = self.attention(att, hq, hk, rng)?;
            let a = self.dropout(a, rate, rng.split(out_site))?;
            Ok((self.tape.add(x, a)?, w))
        } else {
            let (a, w) = self.attention(att, x, memory, rng)?;
            let a = self.dropout(a, rate, rng.split(out_site))?;
            let z = self.tape.add(x, a)?;
            Ok((self.norm(z, norm)?, w))
        }
    }

    fn feed_forward(&mut self, b: &Block, z: Var, rng: RngStream) -> Result<Var> {
        if self.params.config.pre_norm {
            let h = self.norm(z, &b.norm2)?;
            let m = self.mlp(b, h, rng)?;
            self.tape.add(z, m)
        } else {
            let m = self.mlp(b, z, rng)?;
            let y = self.tape.add(z, m)?;
            self.norm(y, &b.norm2)
        }
    }

    /// Actor tokens cross-attend into scene tokens (decoder-only variant).
    fn cross_block(&mut self, b: &Block, actors: Var, scene: Var, rng: RngStream) -> Result<(Var, Option<Tensor>)> {
        let (z, w) = self.cross(&b.norm1, &b.attention, actors, scene, rng.split(SITE_ATTN_PROBS), SITE_ATTN_OUT)?;
        Ok((self.feed_forward(b, z, rng.split(SITE_MLP_OUT))?, w))
    }

    /// Actor self-attention, then cross-attention into `memory`, then MLP.
    fn decoder_block(&mut self, b: &Block, actors: Var, memory: Var, rng: RngStream) -> Result<(Var, Option<Tensor>)> {
        let (z, _) = self.cross(&b.norm1, &b.attention, actors, actors, rng.split(SITE_ATTN_PROBS), SITE_ATTN_OUT)?;
        let (cn, ca) = b.cross.as_ref().expect("decoder block without cross-attention");
        let (z, w) = self.cross(cn, ca, z, memory, rng.split(SITE_CROSS_PROBS), SITE_CROSS_OUT)?;
        Ok((self.feed_forward(b, z, rng.split(SITE_MLP_OUT))?, w))
    }
}

/// `a = E_a·f_a + E_g·g` for each proposal, one row per proposal.
pub fn embed_actors_tape(tape: &mut Tape, params: &ModelParams, proposals: &[ActorProposal]) -> Result<Var> {
    if proposals.is_empty() {
        return Err(Error::Contract("at least one proposal is required".into()));
    }
    let c = params.actor_dim;
    let mut feats = Vec::with_capacity(proposals.len() * c);
    let mut geoms = Vec::with_capacity(proposals.len() * GEOMETRY_DIM);
    for p in proposals {
        if p.feature.len() != c {
            return Err(Error::dim("actor feature", &[c], &[p.feature.len()]));
        }
        feats.extend_from_slice(&p.feature);
        geoms.extend_from_slice(p.geometry.as_slice());
    }
    let f = tape.constant(Tensor::matrix(proposals.len(), c, feats)?);
    let g = tape.constant(Tensor::matrix(proposals.len(), GEOMETRY_DIM, geoms)?);
    let ea = tape.param(&params.store, params.actor_proj);
    let eg = tape.param(&params.store, params.geom_proj);
    let a = tape.matmul_nt(f, ea)?;
    let b = tape.matmul_nt(g, eg)?;
    tape.add(a, b)
}

/// Sinusoidal positional encoding, one row per position: channel `2i` holds
/// `sin(n / 10000^(2i/D))` and channel `2i+1` the matching cosine.
pub fn sinusoidal_pe(n: usize, d: usize) -> Result<Tensor> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::Config(format!("positional encoding needs an even dimension, got {d}")));
    }
    let freqs: Vec<f64> = (0..d / 2)
        .map(|i| 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64))
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for pos in 0..n {
        for &f in &freqs {
            let (s, c) = (pos as f64 * f).sin_cos();
            data.push(s);
            data.push(c);
        }
    }
    Tensor::matrix(n, d, data)
}

/// `v = E_v·f_v + E_pos` with the position equal to the flattened token index.
pub fn embed_scene_tape(tape: &mut Tape, params: &ModelParams, grid: &SceneContextGrid) -> Result<Var> {
    if grid.feature_dim() != params.scene_dim {
        return Err(Error::dim("scene feature", &[params.scene_dim], &[grid.feature_dim()]));
    }
    let f = tape.constant(grid.features.clone());
    let ev = tape.param(&params.store, params.scene_proj);
    let v = tape.matmul_nt(f, ev)?;
    let pe = tape.constant(sinusoidal_pe(grid.num_tokens(), params.config.embed_dim)?);
    tape.add(v, pe)
}

/// Unified encoder over a `[K+N × D]` token matrix.
pub fn encode_tape(
    tape: &mut Tape,
    params: &ModelParams,
    tokens: Var,
    rng: &RngStream,
    opts: ForwardOptions,
) -> Result<(Var, Vec<Tensor>)> {
    if params.config.variant != Variant::Unified {
        return Err(Error::Contract(format!(
            "encode requires the unified variant, got {:?}",
            params.config.variant
        )));
    }
    let d = params.config.embed_dim;
    if tape.value(tokens).cols() != d {
        return Err(Error::dim("encode", tape.value(tokens).shape(), &[d]));
    }
    let mut pass = Pass {
        tape,
        params,
        rng: *rng,
        opts,
    };
    let mut x = tokens;
    let mut maps = Vec::new();
    for (l, b) in params.blocks.iter().enumerate() {
        let r = pass.rng.derive(&[1, l as u64]);
        let (y, att) = pass.self_block(b, x, r)?;
        x = y;
        maps.extend(att);
    }
    Ok((x, maps))
}

/// Decoder-only or encoder-decoder relation modelling; returns the updated
/// actor tokens.
pub fn encode_variant_tape(
    tape: &mut Tape,
    params: &ModelParams,
    actors: Var,
    scene: Var,
    rng: &RngStream,
    opts: ForwardOptions,
) -> Result<(Var, Vec<Tensor>)> {
    let mut pass = Pass {
        tape,
        params,
        rng: *rng,
        opts,
    };
    let mut maps = Vec::new();
    let mut a = actors;
    match params.config.variant {
        Variant::Unified => {
            return Err(Error::Contract(
                "encode_variant does not handle the unified variant; use encode".into(),
            ))
        }
        Variant::DecoderOnly => {
            for (l, b) in params.blocks.iter().enumerate() {
                let (y, att) = pass.cross_block(b, a, scene, pass.rng.derive(&[1, l as u64]))?;
                a = y;
                maps.extend(att);
            }
        }
        Variant::EncoderDecoder => {
            let mut s = scene;
            for (l, b) in params.scene_blocks.iter().enumerate() {
                s = pass.self_block(b, s, pass.rng.derive(&[2, l as u64]))?.0;
            }
            for (l, b) in params.blocks.iter().enumerate() {
                let (y, att) = pass.decoder_block(b, a, s, pass.rng.derive(&[1, l as u64]))?;
                a = y;
                maps.extend(att);
            }
        }
    }
    Ok((a, maps))
}

/// Two-layer GELU head applied to each actor token.
pub fn classify_tape(tape: &mut Tape, params: &ModelParams, actors: Var) -> Result<Var> {
    let mut pass = Pass {
        tape,
        params,
        rng: RngStream::new(0, 0),
        opts: ForwardOptions::eval(),
    };
    let h = pass.linear(actors, &params.head_fc1)?;
    let h = pass.tape.gelu(h);
    pass.linear(h, &params.head_fc2)
}

/// Full pass: embed, relate, classify.
pub fn forward(
    tape: &mut Tape,
    params: &ModelParams,
    proposals: &[ActorProposal],
    grid: &SceneContextGrid,
    rng: &RngStream,
    opts: ForwardOptions,
) -> Result<ForwardOutput> {
    let k = proposals.len();
    let a = embed_actors_tape(tape, params, proposals)?;
    let v = embed_scene_tape(tape, params, grid)?;
    let (actors, attention) = match params.config.variant {
        Variant::Unified => {
            let j = tape.concat_rows(&[a, v])?;
            let (out, maps) = encode_tape(tape, params, j, rng, opts)?;
            (tape.slice_rows(out, 0, k)?, maps)
        }
        _ => encode_variant_tape(tape, params, a, v, rng, opts)?,
    };
    let logits = classify_tape(tape, params, actors)?;
    Ok(ForwardOutput {
        logits,
        actor_tokens: actors,
        attention,
    })
}

/// Actor-only forward with no scene tokens at all (unified variant).
pub fn forward_actors_only(
    tape: &mut Tape,
    params: &ModelParams,
    proposals: &[ActorProposal],
    rng: &RngStream,
    opts: ForwardOptions,
) -> Result<ForwardOutput> {
    let a = embed_actors_tape(tape, params, proposals)?;
    let (actors, attention) = encode_tape(tape, params, a, rng, opts)?;
    let logits = classify_tape(tape, params, actors)?;
    Ok(ForwardOutput {
        logits,
        actor_tokens: actors,
        attention,
    })
}

pub fn embed_actors(proposals: &[ActorProposal], params: &ModelParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = embed_actors_tape(&mut tape, params, proposals)?;
    Ok(tape.value(v).clone())
}

pub fn embed_scene(grid: &SceneContextGrid, params: &ModelParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = embed_scene_tape(&mut tape, params, grid)?;
    Ok(tape.value(v).clone())
}

pub fn encode(seq: &TokenSequence, params: &ModelParams, rng: &RngStream, training: bool) -> Result<TokenSequence> {
    let mut tape = Tape::new();
    let x = tape.constant(seq.tokens.clone());
    let opts = ForwardOptions {
        training,
        record_attention: false,
    };
    let (y, _) = encode_tape(&mut tape, params, x, rng, opts)?;
    TokenSequence::new(tape.value(y).clone(), seq.actor_count, seq.scene_count)
}

pub fn encode_variant(
    actors: &Tensor,
    scene: &Tensor,
    params: &ModelParams,
    rng: &RngStream,
    training: bool,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a = tape.constant(actors.clone());
    let s = tape.constant(scene.clone());
    let opts = ForwardOptions {
        training,
        record_attention: false,
    };
    let (y, _) = encode_variant_tape(&mut tape, params, a, s, rng, opts)?;
    Ok(tape.value(y).clone())
}

pub fn classify(actor_tokens: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a = tape.constant(actor_tokens.clone());
    let y = classify_tape(&mut tape, params, a)?;
    Ok(tape.value(y).clone())
}
