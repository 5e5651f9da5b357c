//! Shelf-visit detection for tracked shopper trajectories.
//!
//! - [`layout`]: the 2D store model (shelf faces, obstacles, portals).
//! - [`kinematics`]: trajectory ingest, smoothing, heading normals, speeds.
//! - [`detector`]: ray-cast candidate shelves and stop extraction.
//! - [`labeling`]: reviewer labels to majority-vote visit flags.
//! - [`calibration`]: F1 scoring, grid calibration, evaluation protocols.
//! - [`analytics`]: visit vectors, per-shelf averages, conversion rates.
//! - [`synth`] / [`oracle`]: synthetic scenarios and the brute-force reference.
//! - [`cli`]: the `shelfscan` command line.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod calibration;
pub mod cli;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kinematics;
pub mod labeling;
pub mod layout;
pub mod mask;
pub mod oracle;
pub mod synth;

pub use error::{Error, Result};
