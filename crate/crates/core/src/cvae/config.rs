use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::DOWNSAMPLED_FRAMES;

/// Network sizes. Defaults follow the published setup where it is stated
/// (latent 20, 4 heads of size 256, feed-forward 512); the remaining widths
/// are our choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub attention_head_size: usize,
    pub feedforward_dim: usize,
    pub attention_heads: usize,
    pub condition_embedding_dim: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub recurrent_hidden: usize,
    pub transformer_blocks: usize,
    pub sequence_length: usize,
    /// Add sinusoidal position encodings before the attention blocks.
    pub positional_encoding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 20,
            attention_head_size: 256,
            feedforward_dim: 512,
            attention_heads: 4,
            condition_embedding_dim: 16,
            conv_channels: 64,
            conv_kernel: 5,
            recurrent_hidden: 128,
            transformer_blocks: 2,
            sequence_length: DOWNSAMPLED_FRAMES,
            positional_encoding: false,
        }
    }
}

impl ModelConfig {
    /// A narrow network with position encodings that can overfit a few
    /// dozen scenarios in minutes on a single CPU core.
    pub fn compact() -> Self {
        ModelConfig {
            attention_head_size: 16,
            feedforward_dim: 128,
            condition_embedding_dim: 8,
            conv_channels: 32,
            recurrent_hidden: 64,
            transformer_blocks: 1,
            positional_encoding: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("latent_dim", self.latent_dim),
            ("attention_head_size", self.attention_head_size),
            ("feedforward_dim", self.feedforward_dim),
            ("attention_heads", self.attention_heads),
            ("condition_embedding_dim", self.condition_embedding_dim),
            ("conv_channels", self.conv_channels),
            ("conv_kernel", self.conv_kernel),
            ("recurrent_hidden", self.recurrent_hidden),
            ("transformer_blocks", self.transformer_blocks),
            ("sequence_length", self.sequence_length),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("model.{name} must be positive")));
            }
        }
        if self.conv_kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig("model.conv_kernel must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// When set, the learning rate follows a half cosine from
    /// `learning_rate` down to this value over `epochs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_learning_rate: Option<f64>,
    pub beta_start: f64,
    pub beta_end: f64,
    pub beta_warmup_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            batch_size: 32,
            learning_rate: 1e-4,
            final_learning_rate: None,
            beta_start: 0.4,
            beta_end: 0.8,
            beta_warmup_epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("train.epochs and train.batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("train.learning_rate must be positive");
        }
        if let Some(f) = self.final_learning_rate {
            if !(f > 0.0 && f <= self.learning_rate) {
                return bad("train.final_learning_rate must lie in (0, learning_rate]");
            }
        }
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end) {
            return bad("need 0 < train.beta_start <= train.beta_end");
        }
        if self.beta_warmup_epochs > self.epochs {
            return bad("train.beta_warmup_epochs must not exceed train.epochs");
        }
        Ok(())
    }
}

/// Learning rate for a 0-based epoch; epochs past `cfg.epochs` keep the
/// final rate.
pub fn learning_rate_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let Some(last) = cfg.final_learning_rate else {
        return cfg.learning_rate;
    };
    let done = (epoch as f64 / cfg.epochs as f64).min(1.0);
    last + (cfg.learning_rate - last) * (1.0 + (std::f64::consts::PI * done).cos()) / 2.0
}

/// KL weight for a 0-based epoch: linear from `beta_start` to `beta_end`
/// over the warm-up, constant afterwards.
pub fn beta_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let warmup = cfg.beta_warmup_epochs;
    if epoch >= warmup {
        return cfg.beta_end;
    }
    // Weighted sum over whole epochs rounds exactly at the published points.
    let done = epoch as f64;
    let left = (warmup - epoch) as f64;
    (cfg.beta_start * left + cfg.beta_end * done) / warmup as f64
}
