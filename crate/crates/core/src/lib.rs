//! Fingerstyle guitar tablature as an event-token language.
//!
//! The crate covers the whole pipeline: fretboard arithmetic, a quantized tab
//! model, a bit-exact token codec with a well-formedness grammar, bar-level
//! groove vectors and their k-means codebook, a segment-recurrent causal
//! attention model, and the continuation metrics used to score generated tabs.

pub mod codec;
pub mod corpus;
mod error;
pub mod fretboard;
pub mod groove;
pub mod metrics;
pub mod model;
pub mod quantizer;
pub mod render;
pub mod tab;

pub use error::{Error, Result};
