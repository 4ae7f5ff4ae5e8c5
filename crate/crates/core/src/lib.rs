//! Modular end-to-end motion forecasting: detection ensembling, 3D
//! multi-object tracking, supervision matching for forecaster finetuning,
//! forecast post-processing and end-to-end forecasting/tracking metrics,
//! all driven by a seeded synthetic perception simulator.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod ensemble;
pub mod error;
pub mod forecaster;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod render;
pub mod sim;
pub mod supervision;
pub mod tracker;

pub use error::{Error, Result};
