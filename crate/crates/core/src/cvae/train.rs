use std::collections::HashMap;

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::artifact::{Checkpoint, ModelArtifact};
use super::config::{beta_at, learning_rate_at, ModelConfig, TrainConfig};
use super::loss::{kl_loss, recon_loss, total_loss};
use super::model::{reparameterize, Cvae, FEATURES};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::extract::{Dataset, NormalizationStats, Scenario};

/// One row of the loss history. Validation losses use the posterior mean
/// and are weighted with the same `beta` as training in that epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub beta: f64,
    pub train_recon: f64,
    pub train_kl: f64,
    pub val_recon: f64,
    pub val_kl: f64,
}

impl EpochRecord {
    pub fn val_total(&self) -> f64 {
        self.val_recon + self.beta * self.val_kl
    }
}

/// Meter-space scenarios for training plus the normalization to apply.
pub struct TrainingSet {
    pub train: Vec<Scenario>,
    pub validation: Vec<Scenario>,
    pub normalization: NormalizationStats,
}

impl TrainingSet {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        Ok(TrainingSet {
            train: dataset.part("train")?.into_iter().cloned().collect(),
            validation: dataset.part("validation")?.into_iter().cloned().collect(),
            normalization: dataset.normalization,
        })
    }

    fn vocabulary(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .train
            .iter()
            .chain(&self.validation)
            .map(|s| s.condition.category_id)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Normalized positions and embedding rows, ready for batching.
pub(crate) struct Tensorized {
    values: Vec<f64>,
    rows: Vec<u32>,
    steps: usize,
}

impl Tensorized {
    pub(crate) fn new(
        scenarios: &[Scenario],
        normalization: &NormalizationStats,
        vocabulary: &[u32],
        steps: usize,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(scenarios.len() * steps * FEATURES);
        let mut rows = Vec::with_capacity(scenarios.len());
        for s in scenarios {
            if s.len() != steps {
                return Err(Error::ShapeMismatch(format!(
                    "scenario has {} steps, model expects {steps}",
                    s.len()
                )));
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("scenario positions"));
            }
            for &r in &s.positions {
                values.extend(normalization.apply_row(r));
            }
            rows.push(row_of(vocabulary, s.condition.category_id)?);
        }
        Ok(Tensorized { values, rows, steps })
    }

    pub(crate) fn len(&self) -> usize {
        self.rows.len()
    }

    pub(crate) fn batch(&self, idx: &[usize], dtype: DType, device: &Device) -> Result<(Tensor, Tensor)> {
        let stride = self.steps * FEATURES;
        let mut values = Vec::with_capacity(idx.len() * stride);
        for &i in idx {
            values.extend_from_slice(&self.values[i * stride..(i + 1) * stride]);
        }
        let x = Tensor::from_vec(values, (idx.len(), self.steps, FEATURES), device)?.to_dtype(dtype)?;
        let rows: Vec<u32> = idx.iter().map(|&i| self.rows[i]).collect();
        Ok((x, Tensor::from_vec(rows, idx.len(), device)?))
    }
}

pub(crate) fn row_of(vocabulary: &[u32], category: u32) -> Result<u32> {
    vocabulary
        .binary_search(&category)
        .map(|r| r as u32)
        .map_err(|_| Error::UnknownCategory(category))
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng, shape: (usize, usize), dtype: DType) -> Result<Tensor> {
    let values: Vec<f64> = (0..shape.0 * shape.1)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Ok(Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(dtype)?)
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Mean reconstruction and KL over a set, decoding the posterior mean.
fn evaluate(model: &Cvae, data: &Tensorized, batch_size: usize) -> Result<(f64, f64)> {
    let (mut rec, mut kl) = (0.0, 0.0);
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(batch_size) {
        let (x, rows) = data.batch(chunk, model.dtype(), model.device())?;
        let post = model.encode_detached(&x, &rows)?;
        let xhat = model.decode_detached(&post.mu, &rows)?;
        let n = chunk.len() as f64;
        rec += scalar(&recon_loss(&x, &xhat)?)? * n;
        kl += scalar(&kl_loss(&post)?)? * n;
    }
    let n = data.len().max(1) as f64;
    Ok((rec / n, kl / n))
}

struct Progress {
    history: Vec<EpochRecord>,
    best_epoch: usize,
    best_val_loss: f64,
    best_weights: Option<HashMap<String, Tensor>>,
}

fn run_epochs(
    model: &Cvae,
    adam: &mut Adam,
    cfg: &TrainConfig,
    train: &Tensorized,
    validation: &Tensorized,
    progress: &mut Progress,
    epochs: usize,
) -> Result<()> {
    if train.len() == 0 {
        return Err(Error::EmptyTrainingSplit);
    }
    let eval_set = if validation.len() > 0 { validation } else { train };
    let start = progress.history.len();
    for epoch in start..start + epochs {
        let beta = beta_at(epoch, cfg);
        adam.learning_rate = learning_rate_at(epoch, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        let (mut rec_sum, mut kl_sum) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, rows) = train.batch(chunk, model.dtype(), model.device())?;
            let post = model.encode(&x, &rows)?;
            let eps = standard_normal(&mut rng, (chunk.len(), model.config().latent_dim), model.dtype())?;
            let z = reparameterize(&post, &eps)?;
            let xhat = model.decode(&z, &rows)?;
            let rec = recon_loss(&x, &xhat)?;
            let kl = kl_loss(&post)?;
            let loss = total_loss(&rec, &kl, beta)?;
            let loss_value = scalar(&loss)?;
            if !loss_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    what: "training loss",
                });
            }
            let grads = loss.backward()?;
            adam.step(model.params(), &grads)?;
            rec_sum += scalar(&rec)? * chunk.len() as f64;
            kl_sum += scalar(&kl)? * chunk.len() as f64;
        }
        let n = train.len() as f64;
        let (val_recon, val_kl) = evaluate(model, eval_set, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            beta,
            train_recon: rec_sum / n,
            train_kl: kl_sum / n,
            val_recon,
            val_kl,
        };
        if !record.val_total().is_finite() {
            return Err(Error::Diverged {
                epoch,
                what: "validation loss",
            });
        }
        log::info!(
            "epoch {epoch}: beta {beta:.3} train recon {:.5} kl {:.4} | val recon {:.5} kl {:.4}",
            record.train_recon,
            record.train_kl,
            record.val_recon,
            record.val_kl
        );
        if record.val_total() < progress.best_val_loss {
            progress.best_val_loss = record.val_total();
            progress.best_epoch = epoch;
            progress.best_weights = Some(model.params().snapshot()?);
        }
        progress.history.push(record);
    }
    Ok(())
}

fn finish(
    model: Cvae,
    adam: &Adam,
    mut progress: Progress,
    model_config: ModelConfig,
    train_config: TrainConfig,
    set: &TrainingSet,
    vocabulary: Vec<u32>,
    dt: f64,
) -> Result<ModelArtifact> {
    let checkpoint = Checkpoint {
        weights: model.params().snapshot()?,
        optimizer: adam.state()?,
    };
    if let Some(best) = progress.best_weights.take() {
        model.params().restore(&best)?;
    }
    Ok(ModelArtifact {
        model,
        model_config,
        train_config,
        normalization: set.normalization,
        vocabulary,
        history: progress.history,
        best_epoch: progress.best_epoch,
        best_val_loss: progress.best_val_loss,
        dt,
        checkpoint: Some(checkpoint),
    })
}

/// Trains from scratch on the dataset's train split, selecting the weights
/// with the lowest validation loss.
pub fn train(dataset: &Dataset, model_config: &ModelConfig, train_config: &TrainConfig) -> Result<ModelArtifact> {
    let set = TrainingSet::from_dataset(dataset)?;
    let mut vocabulary: Vec<u32> = dataset.scenarios.iter().map(|s| s.condition.category_id).collect();
    vocabulary.sort_unstable();
    vocabulary.dedup();
    train_with_vocabulary(&set, model_config, train_config, vocabulary, dataset.manifest.dt)
}

/// Trains on an explicit set; the vocabulary covers its train and
/// validation categories.
pub fn train_on(set: &TrainingSet, model_config: &ModelConfig, train_config: &TrainConfig) -> Result<ModelArtifact> {
    let dt = set.train.first().map(|s| s.dt).ok_or(Error::EmptyTrainingSplit)?;
    train_with_vocabulary(set, model_config, train_config, set.vocabulary(), dt)
}

fn train_with_vocabulary(
    set: &TrainingSet,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    vocabulary: Vec<u32>,
    dt: f64,
) -> Result<ModelArtifact> {
    model_config.validate()?;
    train_config.validate()?;
    if set.train.is_empty() {
        return Err(Error::EmptyTrainingSplit);
    }
    let steps = model_config.sequence_length;
    let train = Tensorized::new(&set.train, &set.normalization, &vocabulary, steps)?;
    let validation = Tensorized::new(&set.validation, &set.normalization, &vocabulary, steps)?;
    let model = Cvae::new(model_config.clone(), vocabulary.len(), DType::F32, train_config.seed)?;
    log::info!(
        "training {} parameters on {} scenarios ({} validation, {} categories)",
        model.params().num_parameters(),
        train.len(),
        validation.len(),
        vocabulary.len()
    );
    let mut adam = Adam::new(train_config.learning_rate);
    let mut progress = Progress {
        history: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        best_weights: None,
    };
    run_epochs(&model, &mut adam, train_config, &train, &validation, &mut progress, train_config.epochs)?;
    finish(model, &adam, progress, model_config.clone(), train_config.clone(), set, vocabulary, dt)
}

/// Continues training from the artifact's last checkpoint for `epochs`
/// more epochs. Epoch numbering, the β schedule and best-checkpoint
/// tracking pick up where the previous run stopped.
pub fn resume_training(artifact: ModelArtifact, set: &TrainingSet, epochs: usize) -> Result<ModelArtifact> {
    let ModelArtifact {
        model,
        model_config,
        mut train_config,
        vocabulary,
        history,
        best_epoch,
        best_val_loss,
        dt,
        checkpoint,
        ..
    } = artifact;
    let best_weights = Some(model.params().snapshot()?);
    let mut adam = Adam::new(train_config.learning_rate);
    if let Some(cp) = &checkpoint {
        model.params().restore(&cp.weights)?;
        adam.load_state(&cp.optimizer, model.params())?;
    }
    let steps = model_config.sequence_length;
    let train = Tensorized::new(&set.train, &set.normalization, &vocabulary, steps)?;
    let validation = Tensorized::new(&set.validation, &set.normalization, &vocabulary, steps)?;
    let mut progress = Progress {
        history,
        best_epoch,
        best_val_loss,
        best_weights,
    };
    run_epochs(&model, &mut adam, &train_config, &train, &validation, &mut progress, epochs)?;
    train_config.epochs = progress.history.len();
    finish(model, &adam, progress, model_config, train_config, set, vocabulary, dt)
}
