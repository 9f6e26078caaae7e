//! Reading recordings and recovering each vehicle's route.

pub mod geometry;
pub mod route;
pub mod synth;
pub mod track;

pub use geometry::{Port, RoundaboutGeometry, Sector};
pub use route::{classify_route, Route, RouteRejection, FULL_CIRCLE_LIMIT, ROUTE_COUNT};
pub use synth::{
    generate_synthetic_recording, generate_synthetic_recording_with, read_routes, write_routes,
    ScriptedPath, SynthConfig, SyntheticRecording, LANE_INSET, LANE_OFFSET,
};
pub use track::{load_tracks, write_tracks, LoadedTracks, MalformedTrack, Track, TrackRecord};
