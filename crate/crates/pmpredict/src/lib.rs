//! Analysis toolkit for leaked underground-forum databases.
//!
//! A forum leak contains users, public threads/posts and — for the leak
//! period only — private messages. This crate models the delay between a
//! public post and the private messages its creator receives as a mixture
//! of two exponentials, uses the fitted curve to auto-label posts by how
//! likely they were to have triggered private replies, extracts bag-of-words
//! and context features, and trains a random-forest classifier that predicts
//! which future public posts will generate private interactions.
//!
//! Modules follow the pipeline order:
//!
//! * [`data`] — leak data model, JSONL ingestion, time-window slicing
//! * [`graph`] — public/private interaction graphs, overlap statistics,
//!   centrality measures
//! * [`delay`] — post-to-message delay samples, histograms and the
//!   two-exponential-plus-constant fit
//! * [`label`] — pre-processing filters and the aggregated-likelihood
//!   labeler
//! * [`features`] — vocabulary building and feature-vector extraction
//! * [`forest`] — from-scratch random-forest classifier
//! * [`metrics`] — ROC/AUC, accuracy and information-gain feature ranking
//! * [`synth`] — synthetic forum generator with planted ground truth
//! * [`experiment`] — leak/target experiment protocol, parameter grids and
//!   cross-forum runs

pub mod data;
pub mod delay;
pub mod experiment;
pub mod features;
pub mod forest;
pub mod graph;
pub mod label;
pub mod matrix;
pub mod metrics;
pub mod seed;
pub mod synth;
pub mod text;

pub const SECS_PER_HOUR: i64 = 3_600;
pub const SECS_PER_DAY: i64 = 86_400;
pub const SECS_PER_WEEK: i64 = 604_800;
