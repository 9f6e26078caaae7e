mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roundgen::analysis::{
    kpi_distribution_compare, latent_traversal, masked_speeds, rmse_report, PetHistogram, TRAVERSAL_VALUES,
};
use roundgen::cvae::{train_on, ModelConfig, TrainConfig, TrainingSet};
use roundgen::extract::{encode_condition, fit_normalization, Scenario};
use roundgen::ingest::RoundaboutGeometry;
use roundgen::kpi::KpiResult;
use roundgen::Error;

fn scenario(rows: Vec<[f64; 4]>) -> Scenario {
    Scenario {
        positions: rows,
        condition: encode_condition(1, 4).unwrap(),
        frame_origin: 0,
        dt: 0.12,
    }
}

#[test]
fn rmse_of_hand_computed_offsets() {
    // Vehicle 1 off by (3, 4) on every frame, vehicle 2 exact.
    let a = scenario(vec![[0.0; 4]; 10]);
    let b = scenario(vec![[3.0, 4.0, 0.0, 0.0]; 10]);
    let r = rmse_report(&[a.clone(), a], &[b.clone(), b]).unwrap();
    assert_eq!(r.longitudinal_v1, 3.0);
    assert_eq!(r.lateral_v1, 4.0);
    assert_eq!(r.longitudinal_v2, 0.0);
    assert!((r.longitudinal_total - (9.0f64 / 2.0).sqrt()).abs() < 1e-12);
    assert!((r.lateral_total - 8.0f64.sqrt()).abs() < 1e-12);
}

#[test]
fn rmse_needs_matched_pairs() {
    let a = scenario(vec![[0.0; 4]; 10]);
    assert!(matches!(rmse_report(std::slice::from_ref(&a), &[]), Err(Error::ShapeMismatch(_))));
    assert!(matches!(rmse_report(&[], &[]), Err(Error::NoScenarios)));
    let short = scenario(vec![[0.0; 4]; 9]);
    assert!(rmse_report(&[a], &[short]).is_err());
}

fn pets(values: &[Option<f64>]) -> Vec<KpiResult> {
    values
        .iter()
        .map(|&pet| KpiResult {
            pet,
            ..Default::default()
        })
        .collect()
}

#[test]
fn histogram_bins_are_half_open() {
    let cmp = kpi_distribution_compare(&pets(&[Some(0.0), Some(0.5), Some(0.99), None]), &pets(&[Some(2.0)]), 0.5).unwrap();
    assert_eq!(cmp.a.counts, vec![1, 2, 0, 0, 0]);
    assert_eq!(cmp.b.counts, vec![0, 0, 0, 0, 1]);
    assert_eq!(cmp.a.undefined, 1);
    assert_eq!(cmp.a.edges().len(), cmp.a.counts.len() + 1);
    assert_eq!(cmp.scatter.len(), 5);
}

#[test]
fn fraction_in_range_counts_defined_values_only() {
    let v = pets(&[Some(1.0), Some(2.0), Some(16.0), Some(20.0), None]);
    assert_eq!(PetHistogram::fraction_between(&v, 1.5, 16.0), Some(0.5));
    assert_eq!(PetHistogram::fraction_between(&pets(&[None]), 1.5, 16.0), None);
}

#[test]
fn speeds_are_masked_outside_the_ring() {
    let geom = RoundaboutGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = common::random_scripted(&geom, &mut rng);
    let speeds = masked_speeds(&s, &geom).unwrap();
    for v in 0..2 {
        for (f, sp) in speeds[v].iter().enumerate() {
            let p = s.vehicle(v)[f];
            let inside = geom.distance_to_center(p) <= geom.outer_radius;
            assert_eq!(sp.is_some(), inside);
            if let Some(sp) = sp {
                assert!(*sp >= 0.0 && *sp < 20.0);
            }
        }
    }
}

#[test]
fn traversal_center_rows_coincide_across_dimensions() {
    let geom = RoundaboutGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let train: Vec<Scenario> = (0..6).map(|_| common::random_scripted(&geom, &mut rng)).collect();
    let set = TrainingSet {
        normalization: fit_normalization(&train, geom.center).unwrap(),
        validation: Vec::new(),
        train,
    };
    let mc = ModelConfig {
        attention_head_size: 4,
        feedforward_dim: 16,
        attention_heads: 2,
        condition_embedding_dim: 4,
        conv_channels: 8,
        recurrent_hidden: 8,
        transformer_blocks: 1,
        ..Default::default()
    };
    let tc = TrainConfig {
        epochs: 1,
        batch_size: 6,
        beta_warmup_epochs: 1,
        ..Default::default()
    };
    let artifact = train_on(&set, &mc, &tc).unwrap();
    let condition = set.train[0].condition.category_id;
    let grids: Vec<_> = (0..20).map(|d| latent_traversal(&artifact, &geom, condition, d).unwrap()).collect();
    let center = TRAVERSAL_VALUES.iter().position(|&v| v == 0.0).unwrap();
    let zero = artifact.decode_latents(&[vec![0.0; 20]], condition).unwrap().remove(0);
    for g in &grids {
        assert_eq!(g.scenarios.len(), 5);
        assert_eq!(g.scenarios[center], zero, "dimension {}", g.dimension);
        assert_ne!(g.scenarios[0], g.scenarios[4]);
    }
    assert!(matches!(
        latent_traversal(&artifact, &geom, condition, 20),
        Err(Error::DimensionOutOfRange { dimension: 20, .. })
    ));
}

proptest! {
    #[test]
    fn histograms_conserve_counts(
        a in prop::collection::vec(prop::option::of(0.0..30.0f64), 1..60),
        b in prop::collection::vec(prop::option::of(0.0..30.0f64), 1..60),
        width in 0.1..3.0f64,
    ) {
        let cmp = kpi_distribution_compare(&pets(&a), &pets(&b), width).unwrap();
        prop_assert_eq!(cmp.a.total(), a.len());
        prop_assert_eq!(cmp.b.total(), b.len());
        prop_assert_eq!(cmp.a.counts.len(), cmp.b.counts.len());
        prop_assert_eq!(cmp.a.defined(), a.iter().flatten().count());
        let same = kpi_distribution_compare(&pets(&a), &pets(&a), width).unwrap();
        prop_assert_eq!(same.a, same.b);
    }

    #[test]
    fn rmse_of_a_constant_shift(dx in -5.0..5.0f64, dy in -5.0..5.0f64, seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 4]> = (0..20).map(|_| [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), 0.0, 0.0]).collect();
        let shifted: Vec<[f64; 4]> = rows.iter().map(|r| [r[0] + dx, r[1] + dy, r[2] + dx, r[3] + dy]).collect();
        let r = rmse_report(&[scenario(rows)], &[scenario(shifted)]).unwrap();
        prop_assert!((r.longitudinal_total - dx.abs()).abs() < 1e-9);
        prop_assert!((r.lateral_total - dy.abs()).abs() < 1e-9);
    }
}
