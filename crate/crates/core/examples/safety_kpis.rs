//! Safety indicators on scripted two-vehicle scenarios: vehicle 2 enters
//! from the next arm and crosses vehicle 1's path, once with a comfortable
//! gap and once nearly at the same time.
//!
//! ```text
//! cargo run --release --example safety_kpis
//! ```

use roundgen::extract::{encode_condition, Scenario, DOWNSAMPLED_DT, DOWNSAMPLED_FRAMES};
use roundgen::ingest::{Port, RoundaboutGeometry, Route, ScriptedPath};
use roundgen::kpi::{evaluate_kpis, ttc_at_frame, KpiParams, VehicleState};

/// Holds each sampled path at its ends so that vehicle 2 starts `delay`
/// rows later than vehicle 1.
fn scripted(geom: &RoundaboutGeometry, delay: usize) -> Scenario {
    let a = ScriptedPath::new(geom, Port::A, Port::C).speeds(8.0, 7.0, 8.0).sample(DOWNSAMPLED_DT).0;
    let b = ScriptedPath::new(geom, Port::B, Port::D).speeds(8.0, 7.0, 8.0).sample(DOWNSAMPLED_DT).0;
    let at = |path: &[[f64; 2]], f: usize| path[f.min(path.len() - 1)];
    let positions = (0..DOWNSAMPLED_FRAMES)
        .map(|f| {
            let p = at(&a, f);
            let q = at(&b, f.saturating_sub(delay));
            [p[0], p[1], q[0], q[1]]
        })
        .collect();
    let ra = Route::new(Port::A, Port::C).unwrap();
    let rb = Route::new(Port::B, Port::D).unwrap();
    Scenario {
        positions,
        condition: encode_condition(ra.id(), rb.id()).unwrap(),
        frame_origin: 0,
        dt: DOWNSAMPLED_DT,
    }
}

fn show(label: &str, v: Option<f64>) -> String {
    v.map_or(format!("{label} undefined"), |t| format!("{label} {t:.2} s"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let head_on = ttc_at_frame(
        &VehicleState {
            position: [0.0, 0.0],
            velocity: [5.0, 0.0],
        },
        &VehicleState {
            position: [20.0, 0.0],
            velocity: [-5.0, 0.0],
        },
        2.0,
    );
    println!("head-on, 20 m apart, closing at 10 m/s: {}", show("ttc", head_on));

    let geom = RoundaboutGeometry::default();
    let params = KpiParams::default();
    for delay in [0, 10, 25, 40] {
        let s = scripted(&geom, delay);
        let k = evaluate_kpis(&s, &geom, &params)?;
        let zone = k
            .conflict_zone
            .map_or("no conflict zone".to_string(), |z| format!("zone at ({:.1}, {:.1})", z.center()[0], z.center()[1]));
        println!(
            "delay {delay:>2} rows: {}, {}, {zone}{}",
            show("min ttc", k.min_ttc),
            show("pet", k.pet),
            if k.critical { ", critical" } else { "" }
        );
    }
    Ok(())
}
