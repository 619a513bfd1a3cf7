//! Run-until-threshold processes modelled as Las Vegas algorithms.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`] loads the UCI Thyroid ("ann") patterns, scales them and
//!   produces deterministic k-fold splits.
//! - [`mlp`] is a single-hidden-layer sigmoid perceptron trained by
//!   full-batch backpropagation until a target error is reached. The
//!   number of epochs this takes is the random runtime under study.
//! - [`synth`] provides closed-form runtime laws used as oracles.
//! - [`runner`] defines the [`runner::LasVegasProcess`] contract, collects
//!   seeded run samples and persists them as JSON lines.
//! - [`tailstats`] holds the empirical distribution machinery: ECDF,
//!   survival, log-log tail slope, Hill estimator and conditional
//!   remaining time.
//! - [`strategies`] defines restart schedules, evaluates fixed cutoffs in
//!   closed form and executes schedules by Monte Carlo.

pub mod dataset;
pub mod mlp;
pub mod runner;
pub mod strategies;
pub mod synth;
pub mod tailstats;

pub use dataset::{Dataset, DatasetError, FoldSplit};
pub use mlp::{MlpConfig, MlpError, MlpProcess, MlpState, RunRecord};
pub use runner::{derive_seed, LasVegasProcess, RunLogError, RunSample, SummaryStats};
pub use strategies::{McEstimate, RestartSchedule, StrategyError, StrategyOutcome};
pub use synth::{SyntheticLaw, SyntheticProcess};
pub use tailstats::{Ecdf, TailError};
