//! Block-level quasi-experimental analysis of polling place assignment.
//!
//! The crate ingests voter-registration and polling-place files, validates
//! polling-place geocodes, matches registrants to polling places, constructs
//! residential blocks with two assignment faces, selects treatment and
//! control groups under two designs (relative distance and assignment shock),
//! and estimates effects on voting outcomes with within-block fixed effects
//! and household-clustered standard errors.
//!
//! Data flows through the modules in pipeline order:
//!
//! ```text
//! ingest -> geocode -> assignment -> blocks -> designs -> estimator
//!                                                      -> diagnostics
//! ```
//!
//! [`synth`] generates populations with known ground truth that survive the
//! whole pipeline, for recovery testing.

pub mod assignment;
pub mod blocks;
pub mod designs;
pub mod diagnostics;
pub mod estimator;
pub mod geocode;
pub mod ingest;
pub(crate) mod numeric;
pub mod spatial;
pub mod synth;

pub use ingest::{Address, PollingPlace, VoterRecord};
pub use spatial::GeoPoint;
