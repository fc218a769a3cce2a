//! Rhythm-consistent stay-event simulation.
//!
//! Fits start priors, a stop hazard, time-blocked transition kernels, dwell
//! mixtures and weak POI priors from stay-event corpora, generates synthetic
//! person-day chains with probabilistic POI assignment, runs paired-seed
//! inventory scenarios and computes the validation metric suite.

// `!(x > 0.0)` rejects NaN on purpose; 24 x 10 matrices read best indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assignment;
pub mod config;
pub mod error;
pub mod estimation;
pub mod event;
pub mod geo;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod scenario;
pub mod simulator;
pub mod synth;
pub mod taxonomy;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use estimation::RhythmArtifacts;
pub use event::{Poi, PoiInventory, StayEvent};
pub use geo::{haversine_m, CategoryIndex, GeoPoint, GridSpec};
pub use matrix::{HourCategoryMatrix, MatrixKind};
pub use taxonomy::{Mid10, SoftLabel, N_CATEGORIES, N_HOURS};
