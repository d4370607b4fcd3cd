//! Boosted online linear regression.
//!
//! A bank of online linear learners (SGD or recursive least squares) is
//! trained on one stream. Each learner weights every sample by how badly the
//! learners before it did on that sample, and a normalized-SGD combiner
//! mixes their outputs. The crate provides the learners, the ensemble
//! engine with weighted, data-reuse, Poisson and random update schedules,
//! synthetic stream generators, CSV ingestion, run metrics with the
//! associated theory diagnostics, and the experiment drivers behind the
//! `boostreg` command-line tool.

// Negated comparisons are deliberate: they reject NaN along with the
// out-of-range values. Index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boosting;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod format;
pub mod learners;
pub mod metrics;
pub mod rng;
pub mod sample;

pub use boosting::{run_stream, EnsembleState, RoundLog, RunOptions};
pub use config::{BoostConfig, LearnerKind, UpdateMode, WeightRule};
pub use error::{Error, ErrorKind, Result};
pub use metrics::RunReport;
pub use sample::Sample;
