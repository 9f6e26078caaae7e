//! Sweeps each latent dimension over {-3, -1.5, 0, 1.5, 3} with the others
//! at zero and prints how far the decoded trajectories move and how the
//! mean in-roundabout speed changes.
//!
//! ```text
//! cargo run --release --example train_toy
//! cargo run --release --example latent_traversal -- [category] [artifact-dir]
//! ```

use std::path::PathBuf;

use roundgen::analysis::{latent_traversal, traversal_file_name, write_traversal_csv, MaskedSpeeds};
use roundgen::cvae::ModelArtifact;
use roundgen::extract::Scenario;
use roundgen::ingest::RoundaboutGeometry;

fn mean_speed(s: &MaskedSpeeds) -> f64 {
    let v: Vec<f64> = s.iter().flatten().flatten().copied().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn max_shift(a: &Scenario, b: &Scenario) -> f64 {
    a.positions
        .iter()
        .zip(&b.positions)
        .flat_map(|(p, q)| [(p[0] - q[0]).hypot(p[1] - q[1]), (p[2] - q[2]).hypot(p[3] - q[3])])
        .fold(0.0, f64::max)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let category: Option<u32> = args.next().and_then(|a| a.parse().ok());
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("roundgen-toy-model"));
    let artifact = ModelArtifact::load(&dir).map_err(|e| format!("{e} (run the train_toy example first)"))?;
    let category = category.unwrap_or(artifact.vocabulary[0]);
    let geom = RoundaboutGeometry::default();
    let out = std::env::temp_dir().join("roundgen-traversal");
    std::fs::create_dir_all(&out)?;

    println!("dim  max shift (m)  mean speed at -3 .. +3 (m/s)");
    for d in 0..artifact.latent_dim() {
        let grid = latent_traversal(&artifact, &geom, category, d)?;
        let shift = max_shift(&grid.scenarios[0], &grid.scenarios[4]);
        let speeds: Vec<String> = grid.speeds.iter().map(|s| format!("{:5.2}", mean_speed(s))).collect();
        println!("{d:>3}  {shift:>13.2}  {}", speeds.join(" "));
        write_traversal_csv(&out.join(traversal_file_name(d)), &grid)?;
    }
    println!("grids in {}", out.display());
    Ok(())
}
