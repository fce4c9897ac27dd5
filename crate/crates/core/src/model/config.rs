use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolerActivation {
    Tanh,
    Identity,
}

impl PoolerActivation {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolerActivation::Tanh => "tanh",
            PoolerActivation::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub dropout_p: f64,
    pub pooler_dim: usize,
    pub pooler_activation: PoolerActivation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 256,
            hidden_dim: 32,
            layers: 2,
            heads: 2,
            ff_dim: 64,
            max_len: 32,
            dropout_p: 0.1,
            pooler_dim: 32,
            pooler_activation: PoolerActivation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn with_pooler_dim(&self, d: usize) -> Self {
        Self {
            pooler_dim: d,
            ..self.clone()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size < 4 {
            return fail(format!(
                "vocab_size {} leaves no room beyond the reserved ids",
                self.vocab_size
            ));
        }
        if self.hidden_dim == 0 || self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return fail(format!(
                "hidden_dim {} must be a positive multiple of heads {}",
                self.hidden_dim, self.heads
            ));
        }
        if self.ff_dim == 0 {
            return fail("ff_dim must be positive".into());
        }
        if self.pooler_dim == 0 {
            return fail("pooler_dim must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(format!("dropout_p {} must lie in [0, 1)", self.dropout_p));
        }
        if self.max_len < 2 {
            return fail(format!("max_len {} must be at least 2", self.max_len));
        }
        Ok(())
    }

    /// Same encoder architecture, ignoring the pooler dimension and activation.
    pub fn same_encoder(&self, other: &ModelConfig) -> bool {
        self.vocab_size == other.vocab_size
            && self.hidden_dim == other.hidden_dim
            && self.layers == other.layers
            && self.heads == other.heads
            && self.ff_dim == other.ff_dim
            && self.max_len == other.max_len
    }
}
