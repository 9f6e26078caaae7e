//! Simulates a recording on the built-in roundabout, writes it as a
//! rounD-style track file, reads it back and checks that every vehicle's
//! route is recovered.
//!
//! ```text
//! cargo run --release --example synthetic_roundabout -- [vehicles] [seed]
//! ```

use roundgen::ingest::{
    classify_route, generate_synthetic_recording, load_tracks, write_tracks, RoundaboutGeometry,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let vehicles: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(40);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(7);

    let geom = RoundaboutGeometry::default();
    let rec = generate_synthetic_recording(&geom, vehicles, seed);

    let dir = std::env::temp_dir().join("roundgen-synthetic");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("00_tracks.csv");
    write_tracks(&path, &rec.tracks)?;
    let loaded = load_tracks(&path, None)?;
    println!("wrote {} tracks to {}", loaded.tracks.len(), path.display());

    let mut matched = 0;
    for (track, truth) in loaded.tracks.iter().zip(&rec.routes) {
        match classify_route(track, &geom) {
            Ok(route) if route == *truth => matched += 1,
            Ok(route) => println!("track {}: got {route}, expected {truth}", track.track_id),
            Err(why) => println!("track {}: rejected, {why}", track.track_id),
        }
    }
    println!("{matched}/{} routes recovered", rec.routes.len());
    Ok(())
}
