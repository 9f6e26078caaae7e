//! Reconstructs the training scenarios through the posterior mean and
//! reports per-axis RMSE, then compares PET distributions of originals and
//! reconstructions.
//!
//! ```text
//! cargo run --release --example train_toy
//! cargo run --release --example reconstruction_rmse -- [artifact-dir]
//! ```

use std::path::PathBuf;

use roundgen::analysis::{kpi_distribution_compare, rmse_report, DEFAULT_PET_BIN_WIDTH};
use roundgen::cvae::{ModelArtifact, ReconstructMode};
use roundgen::extract::{extract_scenarios, ExtractionParams, Scenario};
use roundgen::ingest::{generate_synthetic_recording, LoadedTracks, RoundaboutGeometry};
use roundgen::kpi::{evaluate_kpis, KpiParams, KpiResult};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("roundgen-toy-model"));
    let artifact = ModelArtifact::load(&dir).map_err(|e| format!("{e} (run the train_toy example first)"))?;

    // Same recording and selection as train_toy.
    let geom = RoundaboutGeometry::default();
    let rec = generate_synthetic_recording(&geom, 40, 1);
    let loaded = LoadedTracks {
        tracks: rec.tracks,
        rejected: Vec::new(),
    };
    let params = ExtractionParams {
        min_category_count: 1,
        ..Default::default()
    };
    let originals: Vec<Scenario> = extract_scenarios(&[loaded], &geom, &params)?
        .0
        .into_iter()
        .take(32)
        .collect();

    let recon = artifact.reconstruct(&originals, ReconstructMode::Mean)?;
    let r = rmse_report(&originals, &recon)?;
    println!("RMSE (m)      vehicle 1  vehicle 2  total");
    println!("longitudinal  {:>9.3}  {:>9.3}  {:>5.3}", r.longitudinal_v1, r.longitudinal_v2, r.longitudinal_total);
    println!("lateral       {:>9.3}  {:>9.3}  {:>5.3}", r.lateral_v1, r.lateral_v2, r.lateral_total);

    let kpis = |set: &[Scenario]| -> roundgen::Result<Vec<KpiResult>> {
        set.iter().map(|s| evaluate_kpis(s, &geom, &KpiParams::default())).collect()
    };
    let cmp = kpi_distribution_compare(&kpis(&originals)?, &kpis(&recon)?, DEFAULT_PET_BIN_WIDTH)?;
    println!("PET defined: originals {}, reconstructions {}", cmp.a.defined(), cmp.b.defined());
    for (k, (a, b)) in cmp.a.counts.iter().zip(&cmp.b.counts).enumerate() {
        if a + b > 0 {
            let lo = k as f64 * cmp.a.bin_width;
            println!("  [{lo:>5.1}, {:>5.1}) s  {a:>3} {b:>3}", lo + cmp.a.bin_width);
        }
    }
    Ok(())
}
