use serde::{Deserialize, Serialize};

use super::condition::ConditionCategory;
use crate::error::{Error, Result};
use crate::ingest::track::SOURCE_FRAME_RATE;
use crate::ingest::{Route, Track};

pub const WINDOW_FRAMES: usize = 700;
pub const DOWNSAMPLE_FACTOR: usize = 3;
/// `ceil(700 / 3)`: rows 0, 3, …, 699.
pub const DOWNSAMPLED_FRAMES: usize = 234;
pub const SOURCE_DT: f64 = 1.0 / SOURCE_FRAME_RATE;
pub const DOWNSAMPLED_DT: f64 = DOWNSAMPLE_FACTOR as f64 / SOURCE_FRAME_RATE;

/// Joint positions of two vehicles over a fixed window.
///
/// Each row is `(x1, y1, x2, y2)` in meters. Vehicle 1 is the vehicle with
/// the lower track id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub positions: Vec<[f64; 4]>,
    pub condition: ConditionCategory,
    /// First source frame of the window.
    pub frame_origin: i64,
    /// Seconds between rows.
    pub dt: f64,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Trajectory of vehicle `0` or `1`.
    pub fn vehicle(&self, which: usize) -> Vec<[f64; 2]> {
        assert!(which < 2, "a scenario holds two vehicles");
        let o = 2 * which;
        self.positions.iter().map(|r| [r[o], r[o + 1]]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().flatten().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite("scenario positions"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Format(format!("invalid scenario dt {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpanTooLong {
    pub span: usize,
    pub window: usize,
}

/// Number of frames during which both tracks exist.
pub fn overlap_frames(a: &Track, b: &Track) -> i64 {
    (a.last_frame().min(b.last_frame()) - a.first_frame.max(b.first_frame) + 1).max(0)
}

/// Places two tracks into one window starting at the earlier first frame.
///
/// A vehicle that has not appeared yet, or has already left, is held at its
/// first or last observed position. Pairs whose union of lifespans exceeds
/// `window_length` are rejected.
pub fn build_scenario(
    a: (&Track, Route),
    b: (&Track, Route),
    window_length: usize,
) -> std::result::Result<Scenario, SpanTooLong> {
    let (first, second) = if a.0.track_id <= b.0.track_id { (a, b) } else { (b, a) };
    let (t1, t2) = (first.0, second.0);
    let start = t1.first_frame.min(t2.first_frame);
    let end = t1.last_frame().max(t2.last_frame());
    let span = (end - start + 1) as usize;
    if span > window_length {
        return Err(SpanTooLong {
            span,
            window: window_length,
        });
    }
    let held = |t: &Track, f: i64| {
        let k = (f - t.first_frame).clamp(0, t.len() as i64 - 1) as usize;
        t.positions[k]
    };
    let positions = (0..window_length as i64)
        .map(|k| {
            let f = start + k;
            let p = held(t1, f);
            let q = held(t2, f);
            [p[0], p[1], q[0], q[1]]
        })
        .collect();
    let condition = super::condition::encode_condition(first.1.id(), second.1.id())
        .expect("route ids are always in range");
    Ok(Scenario {
        positions,
        condition,
        frame_origin: start,
        dt: SOURCE_DT,
    })
}

/// Keeps every `factor`-th row of a full-length window. `dt` is recomputed
/// from whole source frames so 3 frames give exactly `3.0 / 25.0`.
pub fn downsample(scenario: &Scenario, factor: usize) -> Result<Scenario> {
    if scenario.len() != WINDOW_FRAMES {
        return Err(Error::ScenarioLength {
            expected: WINDOW_FRAMES,
            actual: scenario.len(),
        });
    }
    if factor == 0 {
        return Err(Error::InvalidConfig("downsample factor must be positive".into()));
    }
    Ok(Scenario {
        positions: scenario.positions.iter().step_by(factor).copied().collect(),
        condition: scenario.condition,
        frame_origin: scenario.frame_origin,
        dt: (scenario.dt * SOURCE_FRAME_RATE).round() * factor as f64 / SOURCE_FRAME_RATE,
    })
}
