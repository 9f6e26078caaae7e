use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::filter::{category_counts, filter_rare_categories, filter_short_tracks, pair_tracks};
use super::scenario::{build_scenario, downsample, Scenario, DOWNSAMPLE_FACTOR, WINDOW_FRAMES};
use crate::error::{Error, Result};
use crate::ingest::{classify_route, LoadedTracks, RoundaboutGeometry, RouteRejection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionParams {
    pub min_track_frames: usize,
    pub min_overlap_frames: usize,
    pub window_frames: usize,
    pub min_category_count: usize,
    pub downsample_factor: usize,
    pub split_seed: u64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        ExtractionParams {
            min_track_frames: 250,
            min_overlap_frames: 100,
            window_frames: WINDOW_FRAMES,
            min_category_count: 300,
            downsample_factor: DOWNSAMPLE_FACTOR,
            split_seed: 0,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("min_track_frames", self.min_track_frames),
            ("min_overlap_frames", self.min_overlap_frames),
            ("min_category_count", self.min_category_count),
            ("downsample_factor", self.downsample_factor),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.window_frames != WINDOW_FRAMES {
            return Err(Error::InvalidConfig(format!(
                "window_frames must be {WINDOW_FRAMES}"
            )));
        }
        Ok(())
    }
}

/// Counts at each filter stage.
///
/// Two chains are monotone nonincreasing: tracks
/// (`tracks_loaded ≥ tracks_well_formed ≥ tracks_long_enough ≥ tracks_routed`)
/// and scenarios
/// (`candidate_pairs ≥ scenarios_windowed ≥ scenarios_final`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub recordings: usize,
    pub tracks_loaded: usize,
    pub tracks_well_formed: usize,
    pub tracks_long_enough: usize,
    pub tracks_routed: usize,
    pub route_rejections: BTreeMap<String, usize>,
    pub candidate_pairs: usize,
    pub scenarios_windowed: usize,
    pub scenarios_final: usize,
    pub categories_before_filter: usize,
    pub categories_final: usize,
    pub category_counts: BTreeMap<u32, usize>,
}

impl ExtractionReport {
    pub fn track_chain(&self) -> [usize; 4] {
        [
            self.tracks_loaded,
            self.tracks_well_formed,
            self.tracks_long_enough,
            self.tracks_routed,
        ]
    }

    pub fn scenario_chain(&self) -> [usize; 3] {
        [self.candidate_pairs, self.scenarios_windowed, self.scenarios_final]
    }
}

fn rejection_label(r: &RouteRejection) -> &'static str {
    match r {
        RouteRejection::TooShort => "too_short",
        RouteRejection::NeverEntered => "never_entered",
        RouteRejection::NoEntryCrossing => "no_entry_crossing",
        RouteRejection::NoExitCrossing => "no_exit_crossing",
        RouteRejection::OutsidePorts { .. } => "outside_ports",
        RouteRejection::SamePort(_) => "same_port",
        RouteRejection::MultipleCircles { .. } => "multiple_circles",
    }
}

/// Runs the full per-recording pipeline: length filter, route
/// classification, pairing, windowing and downsampling, then drops rare
/// categories across all recordings. Output order follows the input
/// recordings and, within one, the pair order of [`pair_tracks`].
pub fn extract_scenarios(
    recordings: &[LoadedTracks],
    geom: &RoundaboutGeometry,
    params: &ExtractionParams,
) -> Result<(Vec<Scenario>, ExtractionReport)> {
    params.validate()?;
    let mut report = ExtractionReport {
        recordings: recordings.len(),
        ..Default::default()
    };
    let mut scenarios = Vec::new();
    for rec in recordings {
        report.tracks_loaded += rec.tracks.len() + rec.rejected.len();
        report.tracks_well_formed += rec.tracks.len();
        let tracks = filter_short_tracks(rec.tracks.clone(), params.min_track_frames);
        report.tracks_long_enough += tracks.len();

        let mut routed = Vec::with_capacity(tracks.len());
        let mut routes = Vec::with_capacity(tracks.len());
        for t in tracks {
            match classify_route(&t, geom) {
                Ok(r) => {
                    routed.push(t);
                    routes.push(r);
                }
                Err(why) => {
                    log::debug!("track {}/{}: {why}", t.recording_id, t.track_id);
                    *report
                        .route_rejections
                        .entry(rejection_label(&why).to_string())
                        .or_insert(0) += 1;
                }
            }
        }
        report.tracks_routed += routed.len();

        let pairs = pair_tracks(&routed, params.min_overlap_frames);
        report.candidate_pairs += pairs.len();
        for (i, j) in pairs {
            match build_scenario(
                (&routed[i], routes[i]),
                (&routed[j], routes[j]),
                params.window_frames,
            ) {
                Ok(s) => scenarios.push(downsample(&s, params.downsample_factor)?),
                Err(e) => log::debug!(
                    "pair {}/{}-{}: span {} > window {}",
                    routed[i].recording_id,
                    routed[i].track_id,
                    routed[j].track_id,
                    e.span,
                    e.window
                ),
            }
        }
    }
    report.scenarios_windowed = scenarios.len();
    report.categories_before_filter = category_counts(&scenarios).len();
    let scenarios = filter_rare_categories(scenarios, params.min_category_count);
    report.scenarios_final = scenarios.len();
    report.category_counts = category_counts(&scenarios);
    report.categories_final = report.category_counts.len();
    Ok((scenarios, report))
}
