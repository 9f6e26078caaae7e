//! Samples new scenarios for one condition category from a trained model
//! and reports their safety indicators.
//!
//! ```text
//! cargo run --release --example train_toy
//! cargo run --release --example generate_scenarios -- [category] [count] [artifact-dir]
//! ```

use std::path::PathBuf;

use roundgen::cvae::ModelArtifact;
use roundgen::extract::decode_condition;
use roundgen::ingest::{RoundaboutGeometry, Route};
use roundgen::kpi::{evaluate_kpis, KpiParams};
use roundgen::scenario_io::write_scenario_csv;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let category: Option<u32> = args.next().and_then(|a| a.parse().ok());
    let count: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("roundgen-toy-model"));
    let artifact = ModelArtifact::load(&dir).map_err(|e| format!("{e} (run the train_toy example first)"))?;

    let category = category.unwrap_or(artifact.vocabulary[0]);
    let c = decode_condition(category)?;
    println!(
        "category {category}: routes {} and {}",
        Route::from_id(c.route_low)?,
        Route::from_id(c.route_high)?
    );

    let scenarios = artifact.generate(category, count, 42)?;
    let geom = RoundaboutGeometry::default();
    let out = std::env::temp_dir().join("roundgen-generated");
    std::fs::create_dir_all(&out)?;
    for (i, s) in scenarios.iter().enumerate() {
        let k = evaluate_kpis(s, &geom, &KpiParams::default())?;
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!("#{i:02}  min ttc {:>6}  pet {:>6}", fmt(k.min_ttc), fmt(k.pet));
        write_scenario_csv(&out.join(format!("scenario_{i:04}.csv")), s)?;
    }
    println!("scenario files in {}", out.display());
    Ok(())
}
