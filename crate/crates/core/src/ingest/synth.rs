use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{Port, RoundaboutGeometry};
use super::route::Route;
use super::track::{Track, SOURCE_FRAME_RATE};
use crate::error::{Error, Result};

/// Circulating lane radius sits this far inside `outer_radius`.
pub const LANE_INSET: f64 = 0.1;
/// Lateral offset of entry and exit lanes from the arm axis (right-hand traffic).
pub const LANE_OFFSET: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub speed_min: f64,
    pub speed_max: f64,
    pub approach_length: f64,
    pub exit_length: f64,
    /// Mean spacing between vehicle arrivals, in source frames.
    pub mean_headway_frames: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            speed_min: 5.0,
            speed_max: 12.0,
            approach_length: 30.0,
            exit_length: 30.0,
            mean_headway_frames: 60,
        }
    }
}

fn unit(angle: f64) -> [f64; 2] {
    [angle.cos(), angle.sin()]
}

/// Straight approach, counter-clockwise arc on the circulating lane, straight
/// exit, parameterized by arc length.
#[derive(Clone, Debug)]
pub struct ScriptedPath {
    center: [f64; 2],
    lane_radius: f64,
    entry_angle: f64,
    exit_angle: f64,
    approach_length: f64,
    exit_length: f64,
    arc_start: f64,
    arc_sweep: f64,
    line_inner: f64,
    speeds: [f64; 3],
}

impl ScriptedPath {
    pub fn new(geom: &RoundaboutGeometry, entry: Port, exit: Port) -> Self {
        let lane_radius = geom.outer_radius - LANE_INSET;
        let line_inner = (lane_radius * lane_radius - LANE_OFFSET * LANE_OFFSET).sqrt();
        let delta = LANE_OFFSET.atan2(line_inner);
        let entry_angle = geom.sector(entry).mid();
        let exit_angle = geom.sector(exit).mid();
        let cfg = SynthConfig::default();
        ScriptedPath {
            center: geom.center,
            lane_radius,
            entry_angle,
            exit_angle,
            approach_length: cfg.approach_length,
            exit_length: cfg.exit_length,
            arc_start: entry_angle + delta,
            arc_sweep: (exit_angle - entry_angle - 2.0 * delta).rem_euclid(TAU),
            line_inner,
            speeds: [8.0; 3],
        }
    }

    /// Adds full extra revolutions on the circulating lane.
    pub fn extra_loops(mut self, loops: u32) -> Self {
        self.arc_sweep += TAU * loops as f64;
        self
    }

    /// Speeds at the start of the approach, on the ring, and at the end of
    /// the exit. Speed varies linearly along the straight segments.
    pub fn speeds(mut self, approach: f64, ring: f64, exit: f64) -> Self {
        self.speeds = [approach, ring, exit];
        self
    }

    pub fn leg_lengths(mut self, approach: f64, exit: f64) -> Self {
        self.approach_length = approach;
        self.exit_length = exit;
        self
    }

    pub fn arc_length(&self) -> f64 {
        self.lane_radius * self.arc_sweep
    }

    /// Path-length interval `[start, end]` covered by the ring arc.
    pub fn arc_range(&self) -> (f64, f64) {
        (self.approach_length, self.approach_length + self.arc_length())
    }

    pub fn length(&self) -> f64 {
        self.approach_length + self.arc_length() + self.exit_length
    }

    pub fn position_at(&self, s: f64) -> [f64; 2] {
        let c = self.center;
        let (arc_start, arc_end) = self.arc_range();
        if s < arc_start {
            let along = self.line_inner + (self.approach_length - s);
            let u = unit(self.entry_angle);
            let n = unit(self.entry_angle + FRAC_PI_2);
            [
                c[0] + along * u[0] + LANE_OFFSET * n[0],
                c[1] + along * u[1] + LANE_OFFSET * n[1],
            ]
        } else if s <= arc_end {
            let a = self.arc_start + (s - arc_start) / self.lane_radius;
            [
                c[0] + self.lane_radius * a.cos(),
                c[1] + self.lane_radius * a.sin(),
            ]
        } else {
            let along = self.line_inner + (s - arc_end);
            let u = unit(self.exit_angle);
            let n = unit(self.exit_angle + FRAC_PI_2);
            [
                c[0] + along * u[0] - LANE_OFFSET * n[0],
                c[1] + along * u[1] - LANE_OFFSET * n[1],
            ]
        }
    }

    pub fn speed_at(&self, s: f64) -> f64 {
        let [va, vr, ve] = self.speeds;
        let (arc_start, arc_end) = self.arc_range();
        if s < arc_start {
            va + (vr - va) * (s / self.approach_length)
        } else if s <= arc_end {
            vr
        } else {
            vr + (ve - vr) * ((s - arc_end) / self.exit_length).min(1.0)
        }
    }

    /// Samples the path every `dt` seconds, advancing by the local speed.
    /// Returns the positions and the path length at each sample.
    pub fn sample(&self, dt: f64) -> (Vec<[f64; 2]>, Vec<f64>) {
        let total = self.length();
        let mut s = 0.0;
        let mut positions = Vec::new();
        let mut lengths = Vec::new();
        while s <= total {
            positions.push(self.position_at(s));
            lengths.push(s);
            s += self.speed_at(s) * dt;
        }
        (positions, lengths)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticRecording {
    pub recording_id: u32,
    pub tracks: Vec<Track>,
    /// Ground-truth route of `tracks[i]`.
    pub routes: Vec<Route>,
}

/// [`generate_synthetic_recording_with`] using [`SynthConfig::default`] and
/// recording id 0.
pub fn generate_synthetic_recording(
    geom: &RoundaboutGeometry,
    n_vehicles: usize,
    seed: u64,
) -> SyntheticRecording {
    generate_synthetic_recording_with(geom, n_vehicles, seed, &SynthConfig::default(), 0)
}

/// Simulates `n_vehicles` independent vehicles with random routes, entry
/// times and speed profiles. Output is fully determined by `seed`.
pub fn generate_synthetic_recording_with(
    geom: &RoundaboutGeometry,
    n_vehicles: usize,
    seed: u64,
    cfg: &SynthConfig,
    recording_id: u32,
) -> SyntheticRecording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / SOURCE_FRAME_RATE;
    let horizon = (n_vehicles as u32 * cfg.mean_headway_frames).max(1) as i64;

    let mut vehicles: Vec<(i64, Route, Vec<[f64; 2]>)> = (0..n_vehicles)
        .map(|_| {
            let entry = Port::ALL[rng.random_range(0..4)];
            let mut exit_idx = rng.random_range(0..3);
            if exit_idx >= entry.index() {
                exit_idx += 1;
            }
            let route = Route::new(entry, Port::ALL[exit_idx]).unwrap();
            let mut speed = || rng.random_range(cfg.speed_min..=cfg.speed_max);
            let (va, vr, ve) = (speed(), speed(), speed());
            let path = ScriptedPath::new(geom, route.entry(), route.exit())
                .leg_lengths(cfg.approach_length, cfg.exit_length)
                .speeds(va, vr, ve);
            let start = rng.random_range(0..horizon);
            (start, route, path.sample(dt).0)
        })
        .collect();
    vehicles.sort_by_key(|v| v.0);

    let mut tracks = Vec::with_capacity(n_vehicles);
    let mut routes = Vec::with_capacity(n_vehicles);
    for (id, (start, route, positions)) in vehicles.into_iter().enumerate() {
        tracks.push(Track {
            recording_id,
            track_id: id as u32,
            first_frame: start,
            positions,
        });
        routes.push(route);
    }
    SyntheticRecording {
        recording_id,
        tracks,
        routes,
    }
}

/// Writes the ground-truth sidecar: `trackId,entry,exit,routeId`.
pub fn write_routes(path: &Path, rec: &SyntheticRecording) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["trackId", "entry", "exit", "routeId"])
        .map_err(|e| Error::csv(path, e))?;
    for (t, r) in rec.tracks.iter().zip(&rec.routes) {
        w.write_record(&[
            t.track_id.to_string(),
            r.entry().to_string(),
            r.exit().to_string(),
            r.id().to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a sidecar written by [`write_routes`] as `(track_id, route)` pairs.
pub fn read_routes(path: &Path) -> Result<Vec<(u32, Route)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let bad = || Error::Format(format!("{}: bad route row {:?}", path.display(), row));
        let track: u32 = row.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let id: usize = row.get(3).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        out.push((track, Route::from_id(id)?));
    }
    Ok(out)
}
