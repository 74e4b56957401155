//! Healthcare cost prediction from claims data.
//!
//! The pipeline turns raw claim lines into monthly per-member series
//! ([`ingest`], [`abstraction`]), segments each series with PELT
//! ([`changepoint`]), summarises the segment states as spike features
//! ([`spikes`]), trains gradient-boosted regression trees ([`model`]) and
//! scores them with cross-validated MAPE, cost buckets and paired t-tests
//! ([`eval`]). [`synth`] generates seeded synthetic claims for desk-scale
//! runs and [`experiment`] wires everything into the feature-set grid.

pub mod abstraction;
pub mod changepoint;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod ingest;
pub mod model;
pub mod spikes;
pub mod synth;

pub use error::{Error, Result};
