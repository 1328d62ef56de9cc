//! Transition-based capability estimation for ordered LLM families.
//!
//! The pipeline: per-sample inference outcomes over an ordered reference
//! family become ternary result vectors ([`ingestion`]), vectors are
//! classified and bucketed by transition index into a reusable pool
//! ([`transition`]), small difficulty-balanced subsets are drawn from the
//! pool ([`sampling`]), and an unknown model's per-index accuracy profile
//! places it between two adjacent reference models ([`estimator`]).
//! [`stats`] carries the benchmark-level apparatus (discriminability,
//! weighted reference ranking, scaling-law residual diagnostics),
//! [`baselines`] the random-sampling comparison, [`synth`] a ground-truth
//! generator for end-to-end validation, and [`client`] live outcome
//! collection against OpenAI-compatible endpoints.

pub mod baselines;
pub mod client;
pub mod error;
pub mod estimator;
pub mod ingestion;
pub mod report;
pub mod sampling;
pub mod stats;
pub mod synth;
pub mod transition;

pub use error::{Error, Result};
