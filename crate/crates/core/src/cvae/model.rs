use candle_core::{DType, Device, Tensor};

use super::config::ModelConfig;
use super::layers::{sinusoidal_encoding, BiGru, Conv1d, Embedding, Gru, Linear, TransformerBlock};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Scenario features per time step: `(x1, y1, x2, y2)`.
pub const FEATURES: usize = 4;
pub const LOG_VAR_LIMIT: f64 = 10.0;

/// Batched diagonal Gaussian `q(z | S, C)`; both tensors are `[B, latent]`.
#[derive(Clone, Debug)]
pub struct GaussianPosterior {
    pub mu: Tensor,
    pub log_var: Tensor,
}

/// `z = mu + exp(log_var / 2) * eps`.
pub fn reparameterize(posterior: &GaussianPosterior, eps: &Tensor) -> Result<Tensor> {
    if posterior.mu.dims() != eps.dims() {
        return Err(Error::ShapeMismatch(format!(
            "noise {:?} vs posterior {:?}",
            eps.dims(),
            posterior.mu.dims()
        )));
    }
    let sigma = posterior.log_var.affine(0.5, 0.0)?.exp()?;
    Ok((&posterior.mu + (sigma * eps)?)?)
}

struct Encoder {
    embedding: Embedding,
    conv: Conv1d,
    gru: BiGru,
    blocks: Vec<TransformerBlock>,
    mu: Linear,
    log_var: Linear,
}

struct Decoder {
    embedding: Embedding,
    gru: Gru,
    blocks: Vec<TransformerBlock>,
    head: Linear,
}

struct Network {
    encoder: Encoder,
    decoder: Decoder,
}

impl Network {
    fn new(store: &mut ParamStore, c: &ModelConfig, categories: usize) -> Result<Self> {
        let enc_dim = 2 * c.recurrent_hidden;
        let encoder = Encoder {
            embedding: Embedding::new(store, "encoder.embedding", categories, c.condition_embedding_dim)?,
            conv: Conv1d::new(
                store,
                "encoder.conv",
                FEATURES + c.condition_embedding_dim,
                c.conv_channels,
                c.conv_kernel,
            )?,
            gru: BiGru::new(store, "encoder.gru", c.conv_channels, c.recurrent_hidden)?,
            blocks: blocks(store, "encoder", enc_dim, c)?,
            mu: Linear::new(store, "encoder.mu", enc_dim, c.latent_dim)?,
            log_var: Linear::new(store, "encoder.log_var", enc_dim, c.latent_dim)?,
        };
        let decoder = Decoder {
            embedding: Embedding::new(store, "decoder.embedding", categories, c.condition_embedding_dim)?,
            gru: Gru::new(
                store,
                "decoder.gru",
                c.latent_dim + c.condition_embedding_dim,
                c.recurrent_hidden,
            )?,
            blocks: blocks(store, "decoder", c.recurrent_hidden, c)?,
            head: Linear::new(store, "decoder.head", c.recurrent_hidden, FEATURES)?,
        };
        Ok(Network { encoder, decoder })
    }
}

/// The conditional VAE network.
///
/// Encoder: condition embedding broadcast over time and concatenated to the
/// positions, temporal convolution, bidirectional GRU, self-attention
/// blocks, mean pooling over time, then dense heads for `mu` and `log_var`.
/// Decoder: `z` and the condition embedding repeated over time, a GRU, the
/// same attention block configuration (separate weights), and a per-step
/// dense head.
pub struct Cvae {
    config: ModelConfig,
    categories: usize,
    params: ParamStore,
    tracked: Network,
    frozen: Network,
    positions: Option<(Tensor, Tensor)>,
}

fn blocks(store: &mut ParamStore, prefix: &str, dim: usize, cfg: &ModelConfig) -> Result<Vec<TransformerBlock>> {
    (0..cfg.transformer_blocks)
        .map(|i| {
            TransformerBlock::new(
                store,
                &format!("{prefix}.block{i}"),
                dim,
                cfg.attention_heads,
                cfg.attention_head_size,
                cfg.feedforward_dim,
            )
        })
        .collect()
}

impl Cvae {
    /// Builds a freshly initialized model for `categories` condition rows.
    pub fn new(config: ModelConfig, categories: usize, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        if categories == 0 {
            return Err(Error::InvalidConfig("model needs at least one category".into()));
        }
        let mut store = ParamStore::new(dtype, seed);
        let tracked = Network::new(&mut store, &config, categories)?;
        store.freeze();
        let frozen = Network::new(&mut store, &config, categories)?;
        let c = &config;
        let enc_dim = 2 * c.recurrent_hidden;
        let positions = if c.positional_encoding {
            let dev = Device::Cpu;
            Some((
                sinusoidal_encoding(c.sequence_length, enc_dim, dtype, &dev)?,
                sinusoidal_encoding(c.sequence_length, c.recurrent_hidden, dtype, &dev)?,
            ))
        } else {
            None
        };
        Ok(Cvae {
            config,
            categories,
            params: store,
            tracked,
            frozen,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    fn check_rows(&self, rows: &Tensor, batch: usize) -> Result<()> {
        if rows.dims() != [batch] {
            return Err(Error::ShapeMismatch(format!(
                "expected {batch} condition rows, got {:?}",
                rows.dims()
            )));
        }
        let max = rows.to_vec1::<u32>()?.into_iter().max().unwrap_or(0) as usize;
        if max >= self.categories {
            return Err(Error::ShapeMismatch(format!(
                "condition row {max} out of range for {} categories",
                self.categories
            )));
        }
        Ok(())
    }

    /// `scenarios: [B, T, 4]` normalized positions, `rows: [B]` u32
    /// embedding rows. Returns `mu` and `log_var`, each `[B, latent]`;
    /// `log_var` is clamped to ±[`LOG_VAR_LIMIT`].
    pub fn encode(&self, scenarios: &Tensor, rows: &Tensor) -> Result<GaussianPosterior> {
        self.encode_with(&self.tracked, scenarios, rows)
    }

    /// [`Cvae::encode`] without recording a backward graph.
    pub fn encode_detached(&self, scenarios: &Tensor, rows: &Tensor) -> Result<GaussianPosterior> {
        self.encode_with(&self.frozen, scenarios, rows)
    }

    fn encode_with(&self, net: &Network, scenarios: &Tensor, rows: &Tensor) -> Result<GaussianPosterior> {
        let (b, t, f) = scenarios.dims3()?;
        if f != FEATURES {
            return Err(Error::ShapeMismatch(format!("expected {FEATURES} features, got {f}")));
        }
        self.check_rows(rows, b)?;
        let e = &net.encoder;
        let emb = e.embedding.forward(rows)?;
        let emb = emb.unsqueeze(1)?.broadcast_as((b, t, emb.dim(1)?))?;
        let x = Tensor::cat(&[scenarios, &emb], 2)?;
        let mut h = e.gru.forward(&e.conv.forward(&x)?)?;
        if let Some((pe, _)) = &self.positions {
            h = h.broadcast_add(&pe.narrow(0, 0, t)?)?;
        }
        for blk in &e.blocks {
            h = blk.forward(&h)?;
        }
        let pooled = h.mean(1)?;
        Ok(GaussianPosterior {
            mu: e.mu.forward(&pooled)?,
            log_var: e
                .log_var
                .forward(&pooled)?
                .clamp(-LOG_VAR_LIMIT, LOG_VAR_LIMIT)?,
        })
    }

    /// `z: [B, latent]`, `rows: [B]` → `[B, steps, 4]` normalized positions.
    pub fn decode_steps(&self, z: &Tensor, rows: &Tensor, steps: usize) -> Result<Tensor> {
        self.decode_with(&self.tracked, z, rows, steps)
    }

    fn decode_with(&self, net: &Network, z: &Tensor, rows: &Tensor, steps: usize) -> Result<Tensor> {
        let (b, l) = z.dims2()?;
        if l != self.config.latent_dim {
            return Err(Error::ShapeMismatch(format!(
                "latent width {l}, model expects {}",
                self.config.latent_dim
            )));
        }
        self.check_rows(rows, b)?;
        let d = &net.decoder;
        let input = Tensor::cat(&[z, &d.embedding.forward(rows)?], 1)?;
        let mut h = d.gru.forward_constant(&input, steps)?;
        if let Some((_, pe)) = &self.positions {
            h = h.broadcast_add(&pe.narrow(0, 0, steps)?)?;
        }
        for blk in &d.blocks {
            h = blk.forward(&h)?;
        }
        d.head.forward(&h)
    }

    pub fn decode(&self, z: &Tensor, rows: &Tensor) -> Result<Tensor> {
        self.decode_steps(z, rows, self.config.sequence_length)
    }

    /// [`Cvae::decode`] without recording a backward graph.
    pub fn decode_detached(&self, z: &Tensor, rows: &Tensor) -> Result<Tensor> {
        self.decode_with(&self.frozen, z, rows, self.config.sequence_length)
    }
}
