use std::collections::HashMap;
use std::fs;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::model::{reparameterize, Cvae, GaussianPosterior, FEATURES};
use super::train::{row_of, standard_normal, EpochRecord, Tensorized};
use crate::error::{Error, Result};
use crate::extract::{decode_condition, NormalizationStats, Scenario};

pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";
pub const CONFIG_FILE: &str = "config.toml";
pub const NORMALIZATION_FILE: &str = "normalization.json";
pub const VOCABULARY_FILE: &str = "vocabulary.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const HISTORY_HEADER: [&str; 6] = ["epoch", "beta", "train_recon", "train_kl", "val_recon", "val_kl"];

/// Everything needed to continue training: the last (not best) weights and
/// the optimizer moments.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub weights: HashMap<String, Tensor>,
    pub optimizer: HashMap<String, Tensor>,
}

/// How `reconstruct` picks the latent code.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReconstructMode {
    /// Decode the posterior mean.
    #[default]
    Mean,
    /// Decode one reparameterized sample.
    Sample { seed: u64 },
}

/// A trained model with everything needed to map between meter-space
/// scenarios and latent codes.
pub struct ModelArtifact {
    pub model: Cvae,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub normalization: NormalizationStats,
    /// Sorted category ids; the position of an id is its embedding row.
    pub vocabulary: Vec<u32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub dt: f64,
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    model: ModelConfig,
    train: TrainConfig,
    training: TrainingSummary,
}

#[derive(Serialize, Deserialize)]
struct TrainingSummary {
    best_epoch: usize,
    best_val_loss: f64,
    dt: f64,
}

const GENERATE_CHUNK: usize = 64;

impl ModelArtifact {
    /// Writes the artifact directory, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.model.params().save(&dir.join(WEIGHTS_FILE))?;
        if let Some(cp) = &self.checkpoint {
            let mut all = HashMap::new();
            for (k, v) in &cp.weights {
                all.insert(format!("weights.{k}"), v.clone());
            }
            all.extend(cp.optimizer.iter().map(|(k, v)| (k.clone(), v.clone())));
            candle_core::safetensors::save(&all, dir.join(CHECKPOINT_FILE))?;
        }
        let config = ConfigFile {
            model: self.model_config.clone(),
            train: self.train_config.clone(),
            training: TrainingSummary {
                best_epoch: self.best_epoch,
                best_val_loss: self.best_val_loss,
                dt: self.dt,
            },
        };
        let text = toml::to_string(&config).map_err(|e| Error::Format(e.to_string()))?;
        write(dir, CONFIG_FILE, text.as_bytes())?;
        write(dir, NORMALIZATION_FILE, serde_json::to_string_pretty(&self.normalization)?.as_bytes())?;
        write(dir, VOCABULARY_FILE, serde_json::to_string(&self.vocabulary)?.as_bytes())?;

        let path = dir.join(HISTORY_FILE);
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(|e| Error::csv(&path, e))?;
        w.write_record(HISTORY_HEADER).map_err(|e| Error::csv(&path, e))?;
        for r in &self.history {
            w.serialize(r).map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let config_path = dir.join(CONFIG_FILE);
        let config: ConfigFile = toml::from_str(&read(CONFIG_FILE)?).map_err(|source| Error::Toml {
            path: config_path,
            source,
        })?;
        let normalization: NormalizationStats = serde_json::from_str(&read(NORMALIZATION_FILE)?)?;
        let vocabulary: Vec<u32> = serde_json::from_str(&read(VOCABULARY_FILE)?)?;
        if vocabulary.is_empty() || vocabulary.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("vocabulary must be sorted, unique and non-empty".into()));
        }
        for &c in &vocabulary {
            decode_condition(c)?;
        }

        let path = dir.join(HISTORY_FILE);
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        let header = r.headers().map_err(|e| Error::csv(&path, e))?;
        if header.iter().ne(HISTORY_HEADER) {
            return Err(Error::Format(format!("unexpected history header in {}", path.display())));
        }
        let history = r
            .deserialize()
            .collect::<std::result::Result<Vec<EpochRecord>, _>>()
            .map_err(|e| Error::csv(&path, e))?;

        let model = Cvae::new(config.model.clone(), vocabulary.len(), DType::F32, config.train.seed)?;
        model.params().load(&dir.join(WEIGHTS_FILE))?;

        let cp_path = dir.join(CHECKPOINT_FILE);
        let checkpoint = if cp_path.exists() {
            let all = candle_core::safetensors::load(&cp_path, &Device::Cpu)?;
            let mut cp = Checkpoint {
                weights: HashMap::new(),
                optimizer: HashMap::new(),
            };
            for (k, v) in all {
                match k.strip_prefix("weights.") {
                    Some(name) => cp.weights.insert(name.to_string(), v),
                    None => cp.optimizer.insert(k, v),
                };
            }
            Some(cp)
        } else {
            None
        };

        Ok(ModelArtifact {
            model,
            model_config: config.model,
            train_config: config.train,
            normalization,
            vocabulary,
            history,
            best_epoch: config.training.best_epoch,
            best_val_loss: config.training.best_val_loss,
            dt: config.training.dt,
            checkpoint,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.model_config.latent_dim
    }

    pub fn sequence_length(&self) -> usize {
        self.model_config.sequence_length
    }

    pub fn contains(&self, category: u32) -> bool {
        self.vocabulary.binary_search(&category).is_ok()
    }

    fn rows(&self, category: u32, n: usize) -> Result<Tensor> {
        let row = row_of(&self.vocabulary, category)?;
        Ok(Tensor::from_vec(vec![row; n], n, self.model.device())?)
    }

    /// Posterior for meter-space scenarios, one row per scenario.
    pub fn encode(&self, scenarios: &[Scenario]) -> Result<GaussianPosterior> {
        let data = Tensorized::new(scenarios, &self.normalization, &self.vocabulary, self.sequence_length())?;
        let idx: Vec<usize> = (0..scenarios.len()).collect();
        let (x, rows) = data.batch(&idx, self.model.dtype(), self.model.device())?;
        self.model.encode_detached(&x, &rows)
    }

    /// Decodes latent codes under one condition into meter-space scenarios.
    pub fn decode_latents(&self, latents: &[Vec<f64>], category: u32) -> Result<Vec<Scenario>> {
        let l = self.latent_dim();
        if let Some(bad) = latents.iter().find(|z| z.len() != l) {
            return Err(Error::ShapeMismatch(format!("latent of width {}, model expects {l}", bad.len())));
        }
        if latents.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent code"));
        }
        let flat: Vec<f64> = latents.iter().flatten().copied().collect();
        let z = Tensor::from_vec(flat, (latents.len(), l), self.model.device())?.to_dtype(self.model.dtype())?;
        self.decode_tensor(&z, category)
    }

    fn decode_tensor(&self, z: &Tensor, category: u32) -> Result<Vec<Scenario>> {
        let condition = decode_condition(category)?;
        let n = z.dim(0)?;
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let len = GENERATE_CHUNK.min(n - start);
            let chunk = z.narrow(0, start, len)?;
            let xhat = self.model.decode_detached(&chunk, &self.rows(category, len)?)?;
            out.extend(self.to_scenarios(&xhat, &vec![condition; len], &vec![0; len])?);
            start += len;
        }
        Ok(out)
    }

    fn to_scenarios(
        &self,
        xhat: &Tensor,
        conditions: &[crate::extract::ConditionCategory],
        origins: &[i64],
    ) -> Result<Vec<Scenario>> {
        let values = xhat.to_dtype(DType::F64)?.to_vec3::<f64>()?;
        Ok(values
            .into_iter()
            .zip(conditions.iter().zip(origins))
            .map(|(rows, (&condition, &frame_origin))| Scenario {
                positions: rows
                    .into_iter()
                    .map(|r| {
                        debug_assert_eq!(r.len(), FEATURES);
                        self.normalization.invert_row([r[0], r[1], r[2], r[3]])
                    })
                    .collect(),
                condition,
                frame_origin,
                dt: self.dt,
            })
            .collect())
    }

    /// Samples `count` scenarios with `z ~ N(0, I)`; deterministic in `seed`.
    pub fn generate(&self, category: u32, count: usize, seed: u64) -> Result<Vec<Scenario>> {
        row_of(&self.vocabulary, category)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = standard_normal(&mut rng, (count, self.latent_dim()), self.model.dtype())?;
        self.decode_tensor(&z, category)
    }

    /// Encodes and decodes each scenario under its own condition.
    pub fn reconstruct(&self, scenarios: &[Scenario], mode: ReconstructMode) -> Result<Vec<Scenario>> {
        let data = Tensorized::new(scenarios, &self.normalization, &self.vocabulary, self.sequence_length())?;
        let mut rng = match mode {
            ReconstructMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            ReconstructMode::Mean => None,
        };
        let mut out = Vec::with_capacity(scenarios.len());
        let idx: Vec<usize> = (0..scenarios.len()).collect();
        for chunk in idx.chunks(GENERATE_CHUNK) {
            let (x, rows) = data.batch(chunk, self.model.dtype(), self.model.device())?;
            let post = self.model.encode_detached(&x, &rows)?;
            let z = match rng.as_mut() {
                Some(rng) => {
                    let eps = standard_normal(rng, (chunk.len(), self.latent_dim()), self.model.dtype())?;
                    reparameterize(&post, &eps)?
                }
                None => post.mu.clone(),
            };
            let xhat = self.model.decode_detached(&z, &rows)?;
            let conditions: Vec<_> = chunk.iter().map(|&i| scenarios[i].condition).collect();
            let origins: Vec<_> = chunk.iter().map(|&i| scenarios[i].frame_origin).collect();
            out.extend(self.to_scenarios(&xhat, &conditions, &origins)?);
        }
        Ok(out)
    }
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
}
