//! Temporal action localization on pose-keypoint time series.
//!
//! The crate turns per-frame pose keypoints into fixed-rate feature series,
//! builds k-MST similarity graphs over each analysis window, and locates the
//! single most anomalous interval per window with edge-count scan statistics
//! and permutation p-values. Proposals from overlapping windows and from the
//! three camera views are merged, handed to a classifier port, and scored with
//! an overlap-based temporal metric.
//!
//! Module map:
//!
//! - [`keypoints`]: parsing, confidence filtering, normalization, resampling, windowing
//! - [`graph`]: pairwise distances, k-MST construction, degree statistics
//! - [`scan`]: edge counts, permutation-null moments, scan statistics, p-values
//! - [`detect`]: single-window detection from a feature series
//! - [`pipeline`]: window sweeps, proposal merging, multi-view fusion
//! - [`classify`]: activity taxonomy, prompts, answer parsing, classifier port
//! - [`eval`]: overlap score and accuracy reports
//! - [`synth`]: synthetic sequences and scenarios with planted intervals
//! - [`config`] / [`run`]: resolved run configuration and the end-to-end flow

#![forbid(unsafe_code)]

pub mod classify;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod graph;
pub mod keypoints;
pub mod pipeline;
pub mod rng;
pub mod run;
pub mod scan;
pub mod synth;

pub use error::{Error, Result};
