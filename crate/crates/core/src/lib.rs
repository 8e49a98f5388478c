// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multiple change-point detection for sequences of one-dimensional
//! distributions under the 2-Wasserstein metric.

pub mod distrib;
pub mod error;
pub mod mosum;
pub mod multiscale;
pub mod refine;
pub mod simgen;

pub use distrib::{DistSeq, ProbGrid, QuantileFunction};
pub use error::{Error, Result};
pub use mosum::{detect, ChangePoint, ChangePointSet, DetectConfig, ScanProfile};
