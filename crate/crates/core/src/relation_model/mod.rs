//! Actor and scene embeddings, the relation transformer and its variants,
//! and the per-actor classification head.
//!
//! Tensors are token-major: a sequence of `K` actor tokens and `N` scene
//! tokens is a `[(K+N) × D]` matrix whose first `K` rows are actors. Scene
//! tokens get a sinusoidal position equal to their flattened grid index;
//! actor tokens get none and carry box geometry instead, so the encoder is
//! equivariant to permutations of the proposals.

mod config;
mod forward;
mod params;
mod prediction;

pub use config::{Activation, ModelConfig, Variant};
pub use forward::{
    classify, classify_tape, embed_actors, embed_actors_tape, embed_scene, embed_scene_tape, encode, encode_tape,
    encode_variant, encode_variant_tape, forward, forward_actors_only, sinusoidal_pe, ForwardOptions, ForwardOutput,
    TokenSequence,
};
pub use params::{Attention, Block, Init, Linear, ModelParams, Norm};
pub use prediction::{predict, predict_many, select_final, Prediction, PredictionSet};
