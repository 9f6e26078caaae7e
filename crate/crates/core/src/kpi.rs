//! Surrogate safety measures: time to collision (TTC) and post encroachment
//! time (PET), evaluated on the in-roundabout part of a scenario.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::Scenario;
use crate::ingest::RoundaboutGeometry;

/// Vehicles are discs; they collide when centers are this close.
pub const DEFAULT_COLLISION_DISTANCE: f64 = 2.0;
pub const DEFAULT_CONFLICT_THRESHOLD: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// Closest pair of samples between two paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictZone {
    pub point_a: [f64; 2],
    pub point_b: [f64; 2],
    pub separation: f64,
    /// Sample index of `point_a` in the first path.
    pub index_a: usize,
    /// Sample index of `point_b` in the second path.
    pub index_b: usize,
}

impl ConflictZone {
    /// Midpoint of the two closest samples; occupancy is measured around it.
    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.point_a[0] + self.point_b[0]),
            0.5 * (self.point_a[1] + self.point_b[1]),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KpiParams {
    pub collision_distance: f64,
    pub conflict_threshold: f64,
}

impl Default for KpiParams {
    fn default() -> Self {
        KpiParams {
            collision_distance: DEFAULT_COLLISION_DISTANCE,
            conflict_threshold: DEFAULT_CONFLICT_THRESHOLD,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PetResult {
    /// Seconds; 0 when the occupancies overlap.
    pub pet: f64,
    /// Both vehicles occupied the zone at the same time.
    pub critical: bool,
    pub zone: ConflictZone,
    /// Inclusive frame intervals each vehicle spends within the threshold
    /// of the zone center.
    pub occupancy: [(usize, usize); 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiResult {
    pub min_ttc: Option<f64>,
    pub min_ttc_frame: Option<usize>,
    pub pet: Option<f64>,
    pub conflict_zone: Option<ConflictZone>,
    pub critical: bool,
}

/// Forward-difference velocities; the last row repeats the one before it.
pub fn velocity_profile(trajectory: &[[f64; 2]], dt: f64) -> Result<Vec<[f64; 2]>> {
    if trajectory.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "velocity needs at least 2 samples, got {}",
            trajectory.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let mut v: Vec<[f64; 2]> = trajectory
        .windows(2)
        .map(|w| [(w[1][0] - w[0][0]) / dt, (w[1][1] - w[0][1]) / dt])
        .collect();
    v.push(*v.last().unwrap());
    Ok(v)
}

pub fn inside_roundabout_mask(trajectory: &[[f64; 2]], geom: &RoundaboutGeometry) -> Vec<bool> {
    trajectory
        .iter()
        .map(|&p| geom.distance_to_center(p) <= geom.outer_radius)
        .collect()
}

/// Time until two constant-velocity discs first touch, i.e. the smallest
/// `t >= 0` with `|dp + dv t| = collision_distance`.
///
/// `None` when they never touch, and also when they already overlap (no
/// approach is left to time).
pub fn ttc_at_frame(a: &VehicleState, b: &VehicleState, collision_distance: f64) -> Option<f64> {
    let dp = [b.position[0] - a.position[0], b.position[1] - a.position[1]];
    let dv = [b.velocity[0] - a.velocity[0], b.velocity[1] - a.velocity[1]];
    let qa = dv[0] * dv[0] + dv[1] * dv[1];
    let qb = 2.0 * (dp[0] * dv[0] + dp[1] * dv[1]);
    let qc = dp[0] * dp[0] + dp[1] * dp[1] - collision_distance * collision_distance;
    if qc <= 0.0 || qa == 0.0 || qb >= 0.0 {
        return None;
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    // qb < 0, so q > 0 and c/q is the smaller root without cancellation.
    let q = -0.5 * (qb - disc.sqrt());
    let t = qc / q;
    (t.is_finite() && t > 0.0).then_some(t)
}

/// Smallest defined TTC over frames where both vehicles are inside the
/// roundabout, with the earliest frame attaining it.
pub fn min_ttc(
    scenario: &Scenario,
    geom: &RoundaboutGeometry,
    collision_distance: f64,
) -> Result<Option<(f64, usize)>> {
    let p1 = scenario.vehicle(0);
    let p2 = scenario.vehicle(1);
    let v1 = velocity_profile(&p1, scenario.dt)?;
    let v2 = velocity_profile(&p2, scenario.dt)?;
    let m1 = inside_roundabout_mask(&p1, geom);
    let m2 = inside_roundabout_mask(&p2, geom);
    let mut best: Option<(f64, usize)> = None;
    for f in 0..p1.len() {
        if !(m1[f] && m2[f]) {
            continue;
        }
        let a = VehicleState {
            position: p1[f],
            velocity: v1[f],
        };
        let b = VehicleState {
            position: p2[f],
            velocity: v2[f],
        };
        if let Some(t) = ttc_at_frame(&a, &b, collision_distance) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, f));
            }
        }
    }
    Ok(best)
}

fn cell(p: [f64; 2], size: f64) -> (i64, i64) {
    ((p[0] / size).floor() as i64, (p[1] / size).floor() as i64)
}

/// Closest sample pair between two paths if it is within `threshold`.
///
/// Candidates come from a uniform grid with cell size `threshold`, so only
/// nearby pairs are compared. Ties go to the earliest index in `path_a`,
/// then in `path_b`.
pub fn find_conflict_zone(
    path_a: &[[f64; 2]],
    path_b: &[[f64; 2]],
    threshold: f64,
) -> Option<ConflictZone> {
    if path_a.is_empty() || path_b.is_empty() || !(threshold > 0.0) {
        return None;
    }
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, &p) in path_b.iter().enumerate() {
        grid.entry(cell(p, threshold)).or_default().push(j);
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, &p) in path_a.iter().enumerate() {
        let (cx, cy) = cell(p, threshold);
        for gx in cx - 1..=cx + 1 {
            for gy in cy - 1..=cy + 1 {
                let Some(bucket) = grid.get(&(gx, gy)) else {
                    continue;
                };
                for &j in bucket {
                    let q = path_b[j];
                    let dx = p[0] - q[0];
                    let dy = p[1] - q[1];
                    let d2 = dx * dx + dy * dy;
                    let better = match best {
                        None => true,
                        Some((bd, bi, bj)) => d2 < bd || (d2 == bd && (i, j) < (bi, bj)),
                    };
                    if better {
                        best = Some((d2, i, j));
                    }
                }
            }
        }
    }
    let (d2, i, j) = best?;
    let separation = d2.sqrt();
    (separation <= threshold).then(|| ConflictZone {
        point_a: path_a[i],
        point_b: path_b[j],
        separation,
        index_a: i,
        index_b: j,
    })
}

/// Maximal run of frames around `anchor` that stay within `threshold` of
/// `center`.
fn occupancy_run(path: &[[f64; 2]], center: [f64; 2], threshold: f64, anchor: usize) -> (usize, usize) {
    let within = |f: usize| {
        let p = path[f];
        (p[0] - center[0]).hypot(p[1] - center[1]) <= threshold
    };
    let mut lo = anchor;
    while lo > 0 && within(lo - 1) {
        lo -= 1;
    }
    let mut hi = anchor;
    while hi + 1 < path.len() && within(hi + 1) {
        hi += 1;
    }
    (lo, hi)
}

/// Post encroachment time around the conflict zone of the in-roundabout
/// paths. `None` when the paths never come within `threshold`.
pub fn pet(
    scenario: &Scenario,
    geom: &RoundaboutGeometry,
    threshold: f64,
) -> Option<PetResult> {
    let paths = [scenario.vehicle(0), scenario.vehicle(1)];
    let frames: Vec<Vec<usize>> = paths
        .iter()
        .map(|p| {
            inside_roundabout_mask(p, geom)
                .iter()
                .enumerate()
                .filter_map(|(f, &m)| m.then_some(f))
                .collect()
        })
        .collect();
    let inside: Vec<Vec<[f64; 2]>> = paths
        .iter()
        .zip(&frames)
        .map(|(p, fs)| fs.iter().map(|&f| p[f]).collect())
        .collect();
    let mut zone = find_conflict_zone(&inside[0], &inside[1], threshold)?;
    zone.index_a = frames[0][zone.index_a];
    zone.index_b = frames[1][zone.index_b];
    let c = zone.center();
    let (s1, e1) = occupancy_run(&paths[0], c, threshold, zone.index_a);
    let (s2, e2) = occupancy_run(&paths[1], c, threshold, zone.index_b);
    let (gap, critical) = if s2 <= e1 && s1 <= e2 {
        (0, true)
    } else if e1 < s2 {
        (s2 - e1, false)
    } else {
        (s1 - e2, false)
    };
    Some(PetResult {
        pet: gap as f64 * scenario.dt,
        critical,
        zone,
        occupancy: [(s1, e1), (s2, e2)],
    })
}

pub fn evaluate_kpis(
    scenario: &Scenario,
    geom: &RoundaboutGeometry,
    params: &KpiParams,
) -> Result<KpiResult> {
    let ttc = min_ttc(scenario, geom, params.collision_distance)?;
    let p = pet(scenario, geom, params.conflict_threshold);
    Ok(KpiResult {
        min_ttc: ttc.map(|t| t.0),
        min_ttc_frame: ttc.map(|t| t.1),
        pet: p.map(|p| p.pet),
        conflict_zone: p.map(|p| p.zone),
        critical: p.is_some_and(|p| p.critical),
    })
}

pub const KPI_CSV_HEADER: [&str; 8] = [
    "scenario_id",
    "condition",
    "min_ttc",
    "min_ttc_frame",
    "pet",
    "conflict_x",
    "conflict_y",
    "critical_flag",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Batch KPI table; undefined values are written as empty fields.
pub fn write_kpi_csv(path: &Path, rows: &[(String, u32, KpiResult)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(KPI_CSV_HEADER).map_err(|e| Error::csv(path, e))?;
    for (id, condition, k) in rows {
        let center = k.conflict_zone.map(|z| z.center());
        w.write_record(&[
            id.clone(),
            condition.to_string(),
            opt(k.min_ttc),
            opt(k.min_ttc_frame),
            opt(k.pet),
            opt(center.map(|c| c[0])),
            opt(center.map(|c| c[1])),
            (k.critical as u8).to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::encode_condition;

    fn state(p: [f64; 2], v: [f64; 2]) -> VehicleState {
        VehicleState {
            position: p,
            velocity: v,
        }
    }

    #[test]
    fn head_on_ttc() {
        let a = state([0.0, 0.0], [5.0, 0.0]);
        let b = state([20.0, 0.0], [-5.0, 0.0]);
        let t = ttc_at_frame(&a, &b, 2.0).unwrap();
        assert!((t - 1.8).abs() < 1e-9);
    }

    #[test]
    fn diverging_has_no_ttc() {
        let a = state([0.0, 0.0], [-5.0, 0.0]);
        let b = state([20.0, 0.0], [5.0, 0.0]);
        assert_eq!(ttc_at_frame(&a, &b, 2.0), None);
        let same = state([20.0, 0.0], [-5.0, 0.0]);
        assert_eq!(ttc_at_frame(&same, &same.clone(), 2.0), None);
    }

    #[test]
    fn overlapping_discs_have_no_ttc() {
        let a = state([0.0, 0.0], [5.0, 0.0]);
        let b = state([1.0, 0.0], [-5.0, 0.0]);
        assert_eq!(ttc_at_frame(&a, &b, 2.0), None);
    }

    #[test]
    fn velocity_of_straight_line() {
        let traj: Vec<[f64; 2]> = (0..20).map(|k| [10.0 * 0.12 * k as f64, 3.0]).collect();
        for v in velocity_profile(&traj, 0.12).unwrap() {
            assert!((v[0].hypot(v[1]) - 10.0).abs() < 1e-9);
        }
        let still = vec![[1.0, 2.0]; 5];
        assert!(velocity_profile(&still, 0.12).unwrap().iter().all(|v| *v == [0.0, 0.0]));
        assert!(velocity_profile(&still[..1], 0.12).is_err());
    }

    #[test]
    fn velocity_on_a_circle() {
        let (r, w, dt) = (20.0, 0.4, 0.12);
        let traj: Vec<[f64; 2]> = (0..100)
            .map(|k| {
                let a = w * dt * k as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        for v in velocity_profile(&traj, dt).unwrap() {
            let speed = v[0].hypot(v[1]);
            assert!((speed - r * w).abs() / (r * w) < 0.01);
        }
    }

    #[test]
    fn mask_points() {
        let g = RoundaboutGeometry::default();
        let m = inside_roundabout_mask(&[[0.0, 0.0], [2.0 * g.outer_radius, 0.0]], &g);
        assert_eq!(m, vec![true, false]);
    }

    #[test]
    fn crossing_paths_meet_at_intersection() {
        let a: Vec<[f64; 2]> = (-10..=10).map(|k| [k as f64, 0.0]).collect();
        let b: Vec<[f64; 2]> = (-10..=10).map(|k| [0.0, k as f64]).collect();
        let z = find_conflict_zone(&a, &b, 5.0).unwrap();
        assert_eq!(z.separation, 0.0);
        assert_eq!((z.index_a, z.index_b), (10, 10));
    }

    #[test]
    fn parallel_paths_have_no_zone() {
        let a: Vec<[f64; 2]> = (0..30).map(|k| [k as f64, 0.0]).collect();
        let b: Vec<[f64; 2]> = (0..30).map(|k| [k as f64, 10.0]).collect();
        assert!(find_conflict_zone(&a, &b, 5.0).is_none());
    }

    /// Two vehicles crossing the origin on perpendicular lines at 1 sample
    /// per frame, with chosen arrival frames.
    fn crossing_scenario(arrive_a: i64, arrive_b: i64, frames: usize) -> Scenario {
        let positions = (0..frames as i64)
            .map(|f| [(f - arrive_a) as f64, 0.0, 0.0, (f - arrive_b) as f64])
            .collect();
        Scenario {
            positions,
            condition: encode_condition(0, 1).unwrap(),
            frame_origin: 0,
            dt: 0.12,
        }
    }

    #[test]
    fn pet_of_separated_passes() {
        let g = RoundaboutGeometry {
            outer_radius: 1000.0,
            ..Default::default()
        };
        // A within 5 m of the origin on frames 50..=60, B on 100..=110.
        let s = crossing_scenario(55, 105, 200);
        let p = pet(&s, &g, 5.0).unwrap();
        assert_eq!(p.occupancy, [(50, 60), (100, 110)]);
        assert!((p.pet - 4.8).abs() < 1e-12);
        assert!(!p.critical);
    }

    #[test]
    fn simultaneous_occupancy_is_critical() {
        let g = RoundaboutGeometry {
            outer_radius: 1000.0,
            ..Default::default()
        };
        let p = pet(&crossing_scenario(55, 57, 200), &g, 5.0).unwrap();
        assert_eq!(p.pet, 0.0);
        assert!(p.critical);
    }
}
