//! From tracks to labeled, fixed-length two-vehicle scenarios.

pub mod condition;
pub mod dataset;
pub mod filter;
pub mod normalize;
pub mod pipeline;
pub mod scenario;
pub mod split;

pub use condition::{decode_condition, encode_condition, ConditionCategory, CATEGORY_COUNT};
pub use dataset::{Dataset, Manifest};
pub use filter::{category_counts, filter_rare_categories, filter_short_tracks, pair_tracks};
pub use normalize::{fit_normalization, NormalizationStats};
pub use pipeline::{extract_scenarios, ExtractionParams, ExtractionReport};
pub use scenario::{
    build_scenario, downsample, overlap_frames, Scenario, DOWNSAMPLED_DT, DOWNSAMPLED_FRAMES,
    DOWNSAMPLE_FACTOR, SOURCE_DT, WINDOW_FRAMES,
};
pub use split::{split_dataset, DatasetSplit};
