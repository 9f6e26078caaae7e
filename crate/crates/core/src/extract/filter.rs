use std::collections::BTreeMap;

use super::scenario::{overlap_frames, Scenario};
use crate::ingest::Track;

/// Drops tracks shorter than `min_frames`; a track of exactly `min_frames`
/// is kept.
pub fn filter_short_tracks(tracks: Vec<Track>, min_frames: usize) -> Vec<Track> {
    tracks.into_iter().filter(|t| t.len() >= min_frames).collect()
}

/// All unordered pairs `(i, j)` of indices into `tracks` whose lifespans
/// share at least `min_overlap` frames. Each pair is ordered so that
/// `tracks[i].track_id < tracks[j].track_id`; pairs are listed by `i`
/// then `j` in that order.
pub fn pair_tracks(tracks: &[Track], min_overlap: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by_key(|&i| tracks[i].track_id);
    let mut pairs = Vec::new();
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if tracks[i].track_id == tracks[j].track_id {
                continue;
            }
            if overlap_frames(&tracks[i], &tracks[j]) >= min_overlap as i64 {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Number of scenarios per category id.
pub fn category_counts(scenarios: &[Scenario]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for s in scenarios {
        *counts.entry(s.condition.category_id).or_insert(0) += 1;
    }
    counts
}

/// Removes every scenario whose category has fewer than `min_count` members.
pub fn filter_rare_categories(scenarios: Vec<Scenario>, min_count: usize) -> Vec<Scenario> {
    let counts = category_counts(&scenarios);
    scenarios
        .into_iter()
        .filter(|s| counts[&s.condition.category_id] >= min_count)
        .collect()
}
