//! Builds a scenario dataset from synthetic recordings: pairs overlapping
//! vehicles, labels each pair with its condition category, downsamples,
//! splits and normalizes, then saves and reloads the container.
//!
//! ```text
//! cargo run --release --example extract_dataset -- [recordings] [vehicles]
//! ```

use roundgen::extract::{extract_scenarios, Dataset, ExtractionParams};
use roundgen::ingest::{generate_synthetic_recording_with, LoadedTracks, RoundaboutGeometry, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let recordings: u32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let vehicles: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(60);

    let geom = RoundaboutGeometry::default();
    let loaded: Vec<LoadedTracks> = (0..recordings)
        .map(|r| {
            let rec = generate_synthetic_recording_with(&geom, vehicles, 100 + r as u64, &SynthConfig::default(), r);
            LoadedTracks {
                tracks: rec.tracks,
                rejected: Vec::new(),
            }
        })
        .collect();

    // Synthetic recordings are small, keep every category.
    let params = ExtractionParams {
        min_category_count: 1,
        ..Default::default()
    };
    let (scenarios, report) = extract_scenarios(&loaded, &geom, &params)?;
    println!("tracks   loaded/well-formed/long/routed: {:?}", report.track_chain());
    println!("pairs    candidate/windowed/final:       {:?}", report.scenario_chain());
    println!("categories: {} -> {}", report.categories_before_filter, report.categories_final);

    let dataset = Dataset::build(scenarios, geom, params, (0..recordings).collect(), Some(report))?;
    println!(
        "split train/val/test: {}/{}/{}",
        dataset.split.train.len(),
        dataset.split.validation.len(),
        dataset.split.test.len()
    );
    let n = &dataset.normalization;
    println!("normalization center {:?}, scale {:.3} m", n.center_offset, n.scale);

    let path = std::env::temp_dir().join("roundgen-dataset.safetensors");
    dataset.save(&path)?;
    let back = Dataset::load(&path)?;
    assert_eq!(back, dataset);
    println!("saved {} scenarios of {} frames to {}", back.scenarios.len(), back.manifest.frames, path.display());
    Ok(())
}
