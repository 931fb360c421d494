//! Two-stage video action detection around a unified actor-scene context
//! transformer.
//!
//! Detector proposals and flattened spatio-temporal scene tokens are
//! embedded, concatenated and passed through a stack of pre-norm
//! self-attention blocks; the actor tokens are then classified into
//! multi-label action scores. Training matches predictions to padded ground
//! truth with the Hungarian algorithm and applies a sigmoid focal loss.
//! Long clips are handled by sliding the model over time and fusing the
//! per-window scores with learned per-class weights.
//!
//! Everything runs on a small `f64` tape-based autodiff engine and is
//! exercised against a synthetic actor world that stands in for a person
//! detector and a video backbone.

pub mod checkpoint;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod longterm;
pub mod numerics;
pub mod relation_model;
pub mod set_matching;
pub mod synthdata;
pub mod training;

pub use error::{Error, Result};
