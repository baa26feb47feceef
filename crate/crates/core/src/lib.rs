//! Data-driven portability tuning for multi-versioned GPU kernels.
//!
//! Autotuning picks the single best variant for one execution environment;
//! this crate instead selects a small *set* of semi-specialized variants
//! that together stay fast across a whole space of devices and inputs,
//! using nothing but benchmark datasets. The pieces:
//!
//! * [`dataset`] — ingestion (CSV, CLBlast crowdsourced JSON, canonical
//!   JSON), a synthetic generator with planted optima, and slowdown-over-
//!   oracle matrices.
//! * [`objectives`] — the library (geomean slowdown) and fleet (task rate)
//!   cost functions.
//! * [`selectors`] — exhaustive, stochastic, k-means and decision-tree
//!   selection of a variant set under a budget, plus an exact-match
//!   dispatcher for seen environments.
//! * [`evaluation`] — slowdown reports and CDFs, divergence sweeps,
//!   fleet experiments and held-out-device generalization.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod objectives;
pub mod selectors;

pub use error::{Error, Result};
