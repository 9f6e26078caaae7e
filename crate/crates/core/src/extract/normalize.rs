use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::error::{Error, Result};

/// Isotropic affine map from meters to model space:
/// `(p - center_offset) / scale` on every coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub center_offset: [f64; 2],
    pub scale: f64,
}

impl NormalizationStats {
    pub fn identity() -> Self {
        NormalizationStats {
            center_offset: [0.0, 0.0],
            scale: 1.0,
        }
    }

    pub fn apply_row(&self, row: [f64; 4]) -> [f64; 4] {
        let [cx, cy] = self.center_offset;
        let s = self.scale;
        [(row[0] - cx) / s, (row[1] - cy) / s, (row[2] - cx) / s, (row[3] - cy) / s]
    }

    pub fn invert_row(&self, row: [f64; 4]) -> [f64; 4] {
        let [cx, cy] = self.center_offset;
        let s = self.scale;
        [row[0] * s + cx, row[1] * s + cy, row[2] * s + cx, row[3] * s + cy]
    }

    pub fn apply(&self, s: &Scenario) -> Scenario {
        Scenario {
            positions: s.positions.iter().map(|&r| self.apply_row(r)).collect(),
            ..s.clone()
        }
    }

    pub fn invert(&self, s: &Scenario) -> Scenario {
        Scenario {
            positions: s.positions.iter().map(|&r| self.invert_row(r)).collect(),
            ..s.clone()
        }
    }
}

/// Centers on the roundabout and scales by the population standard deviation
/// of all centered coordinates, x and y pooled together.
pub fn fit_normalization(train: &[Scenario], center: [f64; 2]) -> Result<NormalizationStats> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for s in train {
        for r in &s.positions {
            sum += (r[0] - center[0]) + (r[1] - center[1]) + (r[2] - center[0]) + (r[3] - center[1]);
            n += 4;
        }
    }
    if n == 0 {
        return Err(Error::TooFewScenarios {
            required: 1,
            actual: 0,
        });
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    for s in train {
        for r in &s.positions {
            for (k, v) in r.iter().enumerate() {
                let d = v - center[k % 2] - mean;
                ss += d * d;
            }
        }
    }
    let scale = (ss / n as f64).sqrt();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::ZeroVariance);
    }
    Ok(NormalizationStats {
        center_offset: center,
        scale,
    })
}
