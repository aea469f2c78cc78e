//! Managerial-expectation scores from earnings-call transcripts, and the
//! forecasting econometrics that use them.
//!
//! The pipeline runs ingest → optional masking → scoring → aggregation →
//! regression frames → regressions, VAR impulse responses, the composite
//! weighted score and n-gram validation. Every stage is usable on its own.

pub mod anonymizer;
pub mod composite;
pub mod corpus;
pub mod econometrics;
pub mod error;
pub mod panel;
pub mod period;
pub mod pipeline;
pub mod scoring;
pub mod textval;
pub mod var_engine;

pub use error::{Error, Result};
