//! Two-vehicle roundabout scenario generation.
//!
//! The pipeline runs in four stages, each in its own module:
//!
//! * [`ingest`] reads rounD-style track recordings, classifies each vehicle's
//!   entry and exit port, and can synthesize recordings with known routes.
//! * [`extract`] pairs overlapping vehicles into fixed 700-frame scenario
//!   matrices, labels them with one of 78 condition categories, filters,
//!   downsamples, normalizes and splits them.
//! * [`cvae`] is the Transformer-enhanced conditional VAE: encoder,
//!   decoder, losses, the β warm-up schedule, training and sampling.
//! * [`kpi`] and [`analysis`] compute TTC/PET safety indicators, RMSE
//!   tables, PET histograms and latent traversals.
//!
//! [`cli`] wires everything behind the `roundgen` binary.

pub mod analysis;
pub mod cli;
pub mod cvae;
pub mod error;
pub mod extract;
pub mod ingest;
pub mod kpi;
pub mod scenario_io;

pub use error::{Error, Result};
