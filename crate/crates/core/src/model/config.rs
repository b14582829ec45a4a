use serde::{Deserialize, Serialize};

use crate::codec::{Mode, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub seq_len: usize,
    pub mem_len: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub mode: Mode,
}

impl ModelConfig {
    /// Laptop-sized default: 4 layers, 4 heads, width 128, 128/128 context.
    pub fn desk(mode: Mode) -> ModelConfig {
        ModelConfig {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            seq_len: 128,
            mem_len: 128,
            dropout: 0.1,
            vocab_size: Vocabulary::new(mode).len(),
            mode,
        }
    }

    /// 12 layers, 8 heads, width 512, 512-event segments and memory.
    pub fn large(mode: Mode) -> ModelConfig {
        ModelConfig {
            n_layers: 12,
            n_heads: 8,
            d_model: 512,
            d_ff: 2048,
            seq_len: 512,
            mem_len: 512,
            dropout: 0.1,
            vocab_size: Vocabulary::new(mode).len(),
            mode,
        }
    }

    /// Small enough for finite-difference gradient checks.
    pub fn tiny(mode: Mode) -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            seq_len: 16,
            mem_len: 16,
            dropout: 0.0,
            vocab_size: Vocabulary::new(mode).len(),
            mode,
        }
    }

    pub fn preset(name: &str, mode: Mode) -> Result<ModelConfig> {
        match name {
            "desk" => Ok(ModelConfig::desk(mode)),
            "large" => Ok(ModelConfig::large(mode)),
            "tiny" => Ok(ModelConfig::tiny(mode)),
            other => Err(Error::domain(format!("unknown model preset `{other}`"))),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::domain("layer, head, and width counts must be positive"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::domain(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(Error::domain("d_model must be even for sinusoidal distances"));
        }
        if self.seq_len == 0 || self.mem_len == 0 {
            return Err(Error::domain("seq_len and mem_len must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::domain("dropout must lie in [0, 1)"));
        }
        let expected = Vocabulary::new(self.mode).len();
        if self.vocab_size != expected {
            return Err(Error::domain(format!(
                "vocab_size {} does not match the {:?} vocabulary ({expected})",
                self.vocab_size, self.mode
            )));
        }
        Ok(())
    }

    /// Trainable scalar count implied by the configuration.
    pub fn parameter_count(&self) -> usize {
        let (d, f, v) = (self.d_model, self.d_ff, self.vocab_size);
        let per_layer = 5 * d * d // q, k, v, relative, output projections
            + d // output bias
            + 2 * d // content and position biases
            + 4 * d // two layer norms
            + d * f + f + f * d + d;
        v * d + self.n_layers * per_layer + 2 * d + d * v + v
    }
}
