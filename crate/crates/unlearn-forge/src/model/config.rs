//! Model shape. Activation is always tanh and precision always `f64`, so
//! neither is configurable; what varies between presets is the window, the
//! embedding width, and the hidden stack.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// How many trailing tokens the model conditions on.
    pub context_window: usize,
    pub embed_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub vocab_size: usize,
    /// Token used to left-pad contexts near the start of a sequence.
    /// Defaults to the standard vocab layout's PAD slot.
    #[serde(default = "default_pad")]
    pub pad_token: u32,
}

fn default_pad() -> u32 {
    4
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context_window < 2 {
            return Err(Error::config("context_window must be at least 2"));
        }
        if self.embed_dim == 0 || self.vocab_size == 0 {
            return Err(Error::config("embed_dim and vocab_size must be at least 1"));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden_dims must be non-empty with all dims >= 1"));
        }
        if self.pad_token as usize >= self.vocab_size {
            return Err(Error::config("pad_token must be inside the vocabulary"));
        }
        Ok(())
    }

    /// Width of the concatenated context embedding feeding the first layer.
    pub fn input_dim(&self) -> usize {
        self.context_window * self.embed_dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_shapes() {
        let ok = ModelConfig {
            context_window: 4,
            embed_dim: 8,
            hidden_dims: vec![16],
            vocab_size: 69,
            pad_token: 4,
        };
        assert!(ok.validate().is_ok());
        assert_eq!(ok.input_dim(), 32);
        assert!(ModelConfig { context_window: 1, ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { hidden_dims: vec![], ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { hidden_dims: vec![8, 0], ..ok }.validate().is_err());
    }
}
