//! Evaluation summaries: reconstruction RMSE, PET/TTC distribution
//! comparison and latent traversals, plus their CSV report files.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::cvae::ModelArtifact;
use crate::error::{Error, Result};
use crate::extract::Scenario;
use crate::ingest::RoundaboutGeometry;
use crate::kpi::{inside_roundabout_mask, velocity_profile, KpiResult};

pub const DEFAULT_PET_BIN_WIDTH: f64 = 0.5;
pub const TRAVERSAL_VALUES: [f64; 5] = [-3.0, -1.5, 0.0, 1.5, 3.0];

/// Per-axis RMSE in meters. Longitudinal is the global x axis, lateral the
/// global y axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RmseReport {
    pub longitudinal_v1: f64,
    pub longitudinal_v2: f64,
    pub longitudinal_total: f64,
    pub lateral_v1: f64,
    pub lateral_v2: f64,
    pub lateral_total: f64,
}

/// RMSE over all frames of all matched pairs. Totals pool the squared
/// errors of both vehicles.
pub fn rmse_report(originals: &[Scenario], reconstructions: &[Scenario]) -> Result<RmseReport> {
    if originals.len() != reconstructions.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} originals vs {} reconstructions",
            originals.len(),
            reconstructions.len()
        )));
    }
    if originals.is_empty() {
        return Err(Error::NoScenarios);
    }
    // column order x1, y1, x2, y2
    let mut sse = [0.0; 4];
    let mut frames = 0usize;
    for (i, (a, b)) in originals.iter().zip(reconstructions).enumerate() {
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "pair {i}: {} vs {} frames",
                a.len(),
                b.len()
            )));
        }
        for (p, q) in a.positions.iter().zip(&b.positions) {
            for k in 0..4 {
                sse[k] += (p[k] - q[k]).powi(2);
            }
        }
        frames += a.len();
    }
    let n = frames as f64;
    Ok(RmseReport {
        longitudinal_v1: (sse[0] / n).sqrt(),
        longitudinal_v2: (sse[2] / n).sqrt(),
        longitudinal_total: ((sse[0] + sse[2]) / (2.0 * n)).sqrt(),
        lateral_v1: (sse[1] / n).sqrt(),
        lateral_v2: (sse[3] / n).sqrt(),
        lateral_total: ((sse[1] + sse[3]) / (2.0 * n)).sqrt(),
    })
}

pub fn write_rmse_csv(path: &Path, report: &RmseReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["axis", "vehicle_1", "vehicle_2", "total"])
        .map_err(|e| Error::csv(path, e))?;
    for (axis, v1, v2, total) in [
        ("longitudinal", report.longitudinal_v1, report.longitudinal_v2, report.longitudinal_total),
        ("lateral", report.lateral_v1, report.lateral_v2, report.lateral_total),
    ] {
        w.write_record([axis.to_string(), v1.to_string(), v2.to_string(), total.to_string()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// PET counts in bins `[k w, (k + 1) w)`. Scenarios without a defined PET
/// are counted in `undefined`.
#[derive(Clone, Debug, PartialEq)]
pub struct PetHistogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
    pub undefined: usize,
}

impl PetHistogram {
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.counts.len()).map(|k| k as f64 * self.bin_width).collect()
    }

    pub fn defined(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn total(&self) -> usize {
        self.defined() + self.undefined
    }

    /// Share of defined values inside `[low, high]`, judged per value.
    pub fn fraction_between(values: &[KpiResult], low: f64, high: f64) -> Option<f64> {
        let defined: Vec<f64> = values.iter().filter_map(|k| k.pet).collect();
        if defined.is_empty() {
            return None;
        }
        let inside = defined.iter().filter(|&&p| (low..=high).contains(&p)).count();
        Some(inside as f64 / defined.len() as f64)
    }
}

fn bin_of(value: f64, width: f64) -> usize {
    (value / width).floor() as usize
}

fn histogram(values: &[KpiResult], width: f64, bins: usize) -> PetHistogram {
    let mut h = PetHistogram {
        bin_width: width,
        counts: vec![0; bins],
        undefined: 0,
    };
    for k in values {
        match k.pet {
            Some(p) => h.counts[bin_of(p, width)] += 1,
            None => h.undefined += 1,
        }
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterRow {
    /// 0 for set A, 1 for set B.
    pub set: usize,
    pub index: usize,
    pub pet: Option<f64>,
    pub min_ttc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KpiComparison {
    pub a: PetHistogram,
    pub b: PetHistogram,
    pub scatter: Vec<ScatterRow>,
}

/// Histograms both sets over shared bins covering `[0, max PET]` and lists
/// every scenario's (PET, min TTC) pair.
pub fn kpi_distribution_compare(
    set_a: &[KpiResult],
    set_b: &[KpiResult],
    pet_bin_width: f64,
) -> Result<KpiComparison> {
    if !(pet_bin_width > 0.0 && pet_bin_width.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "PET bin width must be positive, got {pet_bin_width}"
        )));
    }
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::NoScenarios);
    }
    let max = set_a
        .iter()
        .chain(set_b)
        .filter_map(|k| k.pet)
        .fold(0.0, f64::max);
    let bins = bin_of(max, pet_bin_width) + 1;
    let scatter = [set_a, set_b]
        .iter()
        .enumerate()
        .flat_map(|(set, values)| {
            values.iter().enumerate().map(move |(index, k)| ScatterRow {
                set,
                index,
                pet: k.pet,
                min_ttc: k.min_ttc,
            })
        })
        .collect();
    Ok(KpiComparison {
        a: histogram(set_a, pet_bin_width, bins),
        b: histogram(set_b, pet_bin_width, bins),
        scatter,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per bin plus a final `undefined` row.
pub fn write_pet_histogram_csv(path: &Path, hist: &PetHistogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["bin_start", "bin_end", "count"])
        .map_err(|e| Error::csv(path, e))?;
    let edges = hist.edges();
    for (k, c) in hist.counts.iter().enumerate() {
        w.write_record([edges[k].to_string(), edges[k + 1].to_string(), c.to_string()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.write_record(["undefined".to_string(), String::new(), hist.undefined.to_string()])
        .map_err(|e| Error::csv(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pet_vs_ttc_csv(path: &Path, cmp: &KpiComparison) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["set", "index", "pet", "min_ttc"])
        .map_err(|e| Error::csv(path, e))?;
    for r in &cmp.scatter {
        let set = if r.set == 0 { "a" } else { "b" };
        w.write_record([set.to_string(), r.index.to_string(), opt(r.pet), opt(r.min_ttc)])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Speeds of both vehicles per frame, `None` outside the roundabout.
pub type MaskedSpeeds = [Vec<Option<f64>>; 2];

pub fn masked_speeds(scenario: &Scenario, geom: &RoundaboutGeometry) -> Result<MaskedSpeeds> {
    let profile = |which: usize| -> Result<Vec<Option<f64>>> {
        let path = scenario.vehicle(which);
        let v = velocity_profile(&path, scenario.dt)?;
        let inside = inside_roundabout_mask(&path, geom);
        Ok(v.iter()
            .zip(inside)
            .map(|(v, m)| m.then(|| v[0].hypot(v[1])))
            .collect())
    };
    Ok([profile(0)?, profile(1)?])
}

/// Five scenarios decoded from `z = v e_k` for each traversal value `v`.
#[derive(Clone, Debug)]
pub struct TraversalGrid {
    pub dimension: usize,
    pub condition: u32,
    pub values: [f64; 5],
    pub scenarios: Vec<Scenario>,
    pub speeds: Vec<MaskedSpeeds>,
}

/// Sweeps latent dimension `dimension` with all other entries at zero.
/// Each latent is decoded on its own, so the value-0 scenario is the same
/// for every dimension.
pub fn latent_traversal(
    artifact: &ModelArtifact,
    geom: &RoundaboutGeometry,
    condition: u32,
    dimension: usize,
) -> Result<TraversalGrid> {
    let latent_dim = artifact.latent_dim();
    if dimension >= latent_dim {
        return Err(Error::DimensionOutOfRange {
            dimension,
            latent_dim,
        });
    }
    if !artifact.contains(condition) {
        return Err(Error::UnknownCategory(condition));
    }
    let mut scenarios = Vec::with_capacity(TRAVERSAL_VALUES.len());
    let mut speeds = Vec::with_capacity(TRAVERSAL_VALUES.len());
    for value in TRAVERSAL_VALUES {
        let mut z = vec![0.0; latent_dim];
        z[dimension] = value;
        let s = artifact.decode_latents(&[z], condition)?.remove(0);
        speeds.push(masked_speeds(&s, geom)?);
        scenarios.push(s);
    }
    Ok(TraversalGrid {
        dimension,
        condition,
        values: TRAVERSAL_VALUES,
        scenarios,
        speeds,
    })
}

pub fn traversal_file_name(dimension: usize) -> String {
    format!("traversal_dim{dimension}.csv")
}

/// Long format: one row per (value, frame).
pub fn write_traversal_csv(path: &Path, grid: &TraversalGrid) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["value", "frame", "x1", "y1", "x2", "y2", "speed1", "speed2"])
        .map_err(|e| Error::csv(path, e))?;
    for ((value, s), sp) in grid.values.iter().zip(&grid.scenarios).zip(&grid.speeds) {
        for (f, r) in s.positions.iter().enumerate() {
            w.write_record([
                value.to_string(),
                f.to_string(),
                r[0].to_string(),
                r[1].to_string(),
                r[2].to_string(),
                r[3].to_string(),
                opt(sp[0][f]),
                opt(sp[1][f]),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
