use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roundgen::cvae::{
    beta_at, kl_loss, recon_loss, reparameterize, total_loss, Cvae, GaussianPosterior, ModelConfig, ReconstructMode,
    TrainConfig, TrainingSet,
};
use roundgen::extract::{extract_scenarios, fit_normalization, ExtractionParams, Scenario};
use roundgen::ingest::{generate_synthetic_recording, LoadedTracks, RoundaboutGeometry};

fn tiny(latent: usize, steps: usize) -> ModelConfig {
    ModelConfig {
        latent_dim: latent,
        attention_head_size: 4,
        feedforward_dim: 16,
        attention_heads: 2,
        condition_embedding_dim: 4,
        conv_channels: 8,
        recurrent_hidden: 8,
        transformer_blocks: 1,
        sequence_length: steps,
        ..Default::default()
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], dtype: DType) -> Tensor {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap().to_dtype(dtype).unwrap()
}

fn rows(ids: &[u32]) -> Tensor {
    Tensor::from_vec(ids.to_vec(), ids.len(), &Device::Cpu).unwrap()
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    let a: Vec<f64> = a.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap();
    let b: Vec<f64> = b.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap();
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn full_size_shapes_for_one_and_thirty_two() {
    let model = Cvae::new(ModelConfig::default(), 28, DType::F32, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for b in [1usize, 32] {
        let x = uniform(&mut rng, &[b, 234, 4], DType::F32);
        let ids: Vec<u32> = (0..b as u32).map(|i| i % 28).collect();
        let post = model.encode_detached(&x, &rows(&ids)).unwrap();
        assert_eq!(post.mu.dims(), &[b, 20]);
        assert_eq!(post.log_var.dims(), &[b, 20]);
        let y = model.decode_detached(&post.mu, &rows(&ids)).unwrap();
        assert_eq!(y.dims(), &[b, 234, 4]);
    }
}

#[test]
fn batch_items_do_not_interact() {
    let model = Cvae::new(tiny(3, 234), 4, DType::F64, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform(&mut rng, &[5, 234, 4], DType::F64);
    let ids = [0, 3, 1, 1, 2];
    let batch = model.encode_detached(&x, &rows(&ids)).unwrap();
    let z = uniform(&mut rng, &[5, 3], DType::F64);
    let decoded = model.decode_detached(&z, &rows(&ids)).unwrap();
    for i in 0..5 {
        let one = model.encode_detached(&x.narrow(0, i, 1).unwrap(), &rows(&ids[i..=i])).unwrap();
        assert!(max_abs_diff(&one.mu, &batch.mu.narrow(0, i, 1).unwrap()) < 1e-12);
        assert!(max_abs_diff(&one.log_var, &batch.log_var.narrow(0, i, 1).unwrap()) < 1e-12);
        let d = model.decode_detached(&z.narrow(0, i, 1).unwrap(), &rows(&ids[i..=i])).unwrap();
        assert!(max_abs_diff(&d, &decoded.narrow(0, i, 1).unwrap()) < 1e-12);
    }
}

#[test]
fn tracked_and_detached_paths_agree() {
    let model = Cvae::new(tiny(4, 16), 3, DType::F64, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = uniform(&mut rng, &[2, 16, 4], DType::F64);
    let r = rows(&[2, 0]);
    let a = model.encode(&x, &r).unwrap();
    let b = model.encode_detached(&x, &r).unwrap();
    assert_eq!(max_abs_diff(&a.mu, &b.mu), 0.0);
    assert_eq!(max_abs_diff(&model.decode(&a.mu, &r).unwrap(), &model.decode_detached(&b.mu, &r).unwrap()), 0.0);
}

/// Central differences against backprop on every parameter tensor, a few
/// coordinates each.
#[test]
fn loss_gradient_matches_finite_differences() {
    let model = Cvae::new(tiny(2, 8), 3, DType::F64, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = uniform(&mut rng, &[4, 8, 4], DType::F64);
    let eps = uniform(&mut rng, &[4, 2], DType::F64);
    let r = rows(&[0, 2, 1, 2]);
    let beta = 0.4;

    let loss_tracked = || {
        let post = model.encode(&x, &r).unwrap();
        let z = reparameterize(&post, &eps).unwrap();
        let y = model.decode(&z, &r).unwrap();
        total_loss(&recon_loss(&x, &y).unwrap(), &kl_loss(&post).unwrap(), beta).unwrap()
    };
    let loss_value = || {
        let post = model.encode_detached(&x, &r).unwrap();
        let z = reparameterize(&post, &eps).unwrap();
        let y = model.decode_detached(&z, &r).unwrap();
        let l = total_loss(&recon_loss(&x, &y).unwrap(), &kl_loss(&post).unwrap(), beta).unwrap();
        l.to_scalar::<f64>().unwrap()
    };

    let grads = loss_tracked().backward().unwrap();
    let h = 1e-5;
    let mut checked = 0;
    let mut worst = (0.0f64, String::new());
    for (name, var) in model.params().vars() {
        let Some(g) = grads.get(var.as_tensor()) else {
            continue;
        };
        let analytic: Vec<f64> = g.flatten_all().unwrap().to_vec1().unwrap();
        let shape = var.dims().to_vec();
        let base: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        let set = |v: &[f64]| var.set(&Tensor::from_vec(v.to_vec(), shape.as_slice(), &Device::Cpu).unwrap()).unwrap();
        for _ in 0..3 {
            let i = rng.random_range(0..base.len());
            let mut p = base.clone();
            p[i] += h;
            set(&p);
            let up = loss_value();
            p[i] -= 2.0 * h;
            set(&p);
            let down = loss_value();
            set(&base);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}]: analytic {a:e}, numeric {numeric:e}"));
            }
            checked += 1;
        }
    }
    assert!(checked > 60, "only {checked} coordinates checked");
    assert!(worst.0 < 1e-3, "worst relative error {:e} at {}", worst.0, worst.1);
}

#[test]
fn reparameterization_with_zero_noise_is_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let post = GaussianPosterior {
        mu: uniform(&mut rng, &[3, 20], DType::F64),
        log_var: uniform(&mut rng, &[3, 20], DType::F64),
    };
    let z = reparameterize(&post, &Tensor::zeros((3, 20), DType::F64, &Device::Cpu).unwrap()).unwrap();
    assert_eq!(max_abs_diff(&z, &post.mu), 0.0);
}

#[test]
fn warmup_reaches_published_weights() {
    let cfg = TrainConfig::default();
    assert_eq!(beta_at(0, &cfg), 0.4);
    assert_eq!(beta_at(100, &cfg), 0.6);
    assert_eq!(beta_at(200, &cfg), 0.8);
    assert_eq!(beta_at(399, &cfg), 0.8);
}

fn synthetic_set(vehicles: usize, seed: u64) -> (Vec<Scenario>, RoundaboutGeometry) {
    let geom = RoundaboutGeometry::default();
    let rec = generate_synthetic_recording(&geom, vehicles, seed);
    let loaded = LoadedTracks {
        tracks: rec.tracks,
        rejected: Vec::new(),
    };
    let params = ExtractionParams {
        min_category_count: 1,
        ..Default::default()
    };
    (extract_scenarios(&[loaded], &geom, &params).unwrap().0, geom)
}

#[test]
fn artifact_survives_save_and_load() {
    let (scenarios, geom) = synthetic_set(30, 4);
    let train: Vec<Scenario> = scenarios.iter().take(12).cloned().collect();
    let set = TrainingSet {
        normalization: fit_normalization(&train, geom.center).unwrap(),
        validation: scenarios.iter().skip(12).take(4).cloned().collect(),
        train,
    };
    let tc = TrainConfig {
        epochs: 2,
        batch_size: 4,
        learning_rate: 1e-3,
        beta_warmup_epochs: 1,
        seed: 9,
        ..Default::default()
    };
    let artifact = roundgen::cvae::train_on(&set, &tiny(5, 234), &tc).unwrap();
    assert_eq!(artifact.history.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    artifact.save(dir.path()).unwrap();
    let loaded = roundgen::cvae::ModelArtifact::load(dir.path()).unwrap();
    assert_eq!(loaded.vocabulary, artifact.vocabulary);
    assert_eq!(loaded.history, artifact.history);

    let category = artifact.vocabulary[0];
    let a = artifact.generate(category, 3, 77).unwrap();
    let b = loaded.generate(category, 3, 77).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|s| s.len() == 234 && s.condition.category_id == category && s.is_finite()));

    let rec = loaded.reconstruct(&set.train[..2], ReconstructMode::Mean).unwrap();
    assert_eq!(rec.len(), 2);
    assert_eq!(rec[0].condition, set.train[0].condition);

    let resumed = roundgen::cvae::resume_training(loaded, &set, 1).unwrap();
    assert_eq!(resumed.history.len(), 3);
    assert_eq!(resumed.history[2].epoch, 2);
}

#[test]
fn unknown_category_is_rejected() {
    let (scenarios, geom) = synthetic_set(20, 5);
    let train: Vec<Scenario> = scenarios.iter().take(8).cloned().collect();
    let set = TrainingSet {
        normalization: fit_normalization(&train, geom.center).unwrap(),
        validation: Vec::new(),
        train,
    };
    let tc = TrainConfig {
        epochs: 1,
        batch_size: 8,
        beta_warmup_epochs: 1,
        ..Default::default()
    };
    let artifact = roundgen::cvae::train_on(&set, &tiny(2, 234), &tc).unwrap();
    let missing = (1..=78).find(|c| !artifact.contains(*c)).unwrap();
    assert!(artifact.generate(missing, 1, 0).is_err());
}
