//! Scripted scenarios and brute-force oracles shared by the integration
//! tests. The oracles follow the textbook definitions directly and share
//! no code with the library.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use roundgen::extract::{encode_condition, Scenario, DOWNSAMPLED_DT, DOWNSAMPLED_FRAMES};
use roundgen::ingest::{Port, RoundaboutGeometry, Route, ScriptedPath};

pub fn random_route(rng: &mut ChaCha8Rng) -> Route {
    let entry = Port::ALL[rng.random_range(0..4)];
    let mut exit = rng.random_range(0..3);
    if exit >= entry.index() {
        exit += 1;
    }
    Route::new(entry, Port::ALL[exit]).unwrap()
}

/// Two vehicles on scripted paths sampled at the downsampled rate; the
/// second starts `delay` rows later. Both hold their end positions.
pub fn scripted_pair(geom: &RoundaboutGeometry, routes: [Route; 2], speeds: [[f64; 3]; 2], delay: usize) -> Scenario {
    let paths: Vec<Vec<[f64; 2]>> = routes
        .iter()
        .zip(speeds)
        .map(|(r, [a, b, c])| ScriptedPath::new(geom, r.entry(), r.exit()).speeds(a, b, c).sample(DOWNSAMPLED_DT).0)
        .collect();
    let at = |p: &[[f64; 2]], f: usize| p[f.min(p.len() - 1)];
    let positions = (0..DOWNSAMPLED_FRAMES)
        .map(|f| {
            let a = at(&paths[0], f);
            let b = at(&paths[1], f.saturating_sub(delay));
            [a[0], a[1], b[0], b[1]]
        })
        .collect();
    Scenario {
        positions,
        condition: encode_condition(routes[0].id(), routes[1].id()).unwrap(),
        frame_origin: 0,
        dt: DOWNSAMPLED_DT,
    }
}

pub fn random_scripted(geom: &RoundaboutGeometry, rng: &mut ChaCha8Rng) -> Scenario {
    let routes = [random_route(rng), random_route(rng)];
    let mut speed = || [rng.random_range(5.0..12.0), rng.random_range(5.0..12.0), rng.random_range(5.0..12.0)];
    let speeds = [speed(), speed()];
    let delay = rng.random_range(0..60);
    scripted_pair(geom, routes, speeds, delay)
}

pub fn swapped(s: &Scenario) -> Scenario {
    Scenario {
        positions: s.positions.iter().map(|r| [r[2], r[3], r[0], r[1]]).collect(),
        ..s.clone()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// First time on a 1 ms grid over `[0, 60]` s at which the discs touch.
pub fn ttc_scan(pa: [f64; 2], va: [f64; 2], pb: [f64; 2], vb: [f64; 2], collision: f64) -> Option<f64> {
    (0..=60_000).map(|k| k as f64 * 1e-3).find(|&t| {
        let a = [pa[0] + va[0] * t, pa[1] + va[1] * t];
        let b = [pb[0] + vb[0] * t, pb[1] + vb[1] * t];
        dist(a, b) <= collision
    })
}

/// Every pair, strictly smaller distance wins, so the first pair in
/// `(i, j)` order is kept on ties.
pub fn brute_zone(a: &[[f64; 2]], b: &[[f64; 2]], threshold: f64) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, &p) in a.iter().enumerate() {
        for (j, &q) in b.iter().enumerate() {
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if best.is_none_or(|(_, _, bd)| d2 < bd) {
                best = Some((i, j, d2));
            }
        }
    }
    best.map(|(i, j, d2)| (i, j, d2.sqrt())).filter(|z| z.2 <= threshold)
}

/// PET by scanning frames: the conflict zone from [`brute_zone`] over the
/// in-roundabout samples, each vehicle's run of frames near the zone
/// center that contains its closest sample, and the gap between runs.
pub fn brute_pet(s: &Scenario, geom: &RoundaboutGeometry, threshold: f64) -> Option<(f64, bool)> {
    let tracks = [s.vehicle(0), s.vehicle(1)];
    let inside: Vec<Vec<usize>> = tracks
        .iter()
        .map(|t| (0..t.len()).filter(|&f| dist(t[f], geom.center) <= geom.outer_radius).collect())
        .collect();
    let pts: Vec<Vec<[f64; 2]>> = (0..2).map(|v| inside[v].iter().map(|&f| tracks[v][f]).collect()).collect();
    let (i, j, _) = brute_zone(&pts[0], &pts[1], threshold)?;
    let anchors = [inside[0][i], inside[1][j]];
    let a = tracks[0][anchors[0]];
    let b = tracks[1][anchors[1]];
    let center = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let runs: Vec<(usize, usize)> = (0..2)
        .map(|v| {
            let near: Vec<bool> = tracks[v].iter().map(|&p| dist(p, center) <= threshold).collect();
            let mut runs = Vec::new();
            let mut f = 0;
            while f < near.len() {
                if near[f] {
                    let start = f;
                    while f + 1 < near.len() && near[f + 1] {
                        f += 1;
                    }
                    runs.push((start, f));
                }
                f += 1;
            }
            *runs.iter().find(|r| r.0 <= anchors[v] && anchors[v] <= r.1).unwrap()
        })
        .collect();
    let (s1, e1) = runs[0];
    let (s2, e2) = runs[1];
    if s1 <= e2 && s2 <= e1 {
        Some((0.0, true))
    } else if e1 < s2 {
        Some(((s2 - e1) as f64 * s.dt, false))
    } else {
        Some(((s1 - e2) as f64 * s.dt, false))
    }
}
