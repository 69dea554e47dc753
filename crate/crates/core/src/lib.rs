//! Multiscale DeepONets for the seismic-response operator of a building.
//!
//! The crate covers the whole workbench: a linear shear-building model with
//! Newmark and modal-superposition solvers ([`structural`]), DFT and
//! Butterworth anti-aliasing ([`dsp`]), synthetic ground motion
//! ([`excitation`]), operator-learning datasets with superposition
//! augmentation ([`dataset`]), a small dense-network engine ([`neural`]),
//! DeepONet variants including the amplitude-separated form ([`deeponet`]),
//! training and metrics ([`training`]) and the comparison studies
//! ([`experiments`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod config;
pub mod dataset;
pub mod deeponet;
pub mod dsp;
pub mod error;
pub mod excitation;
pub mod experiments;
pub mod neural;
pub mod series;
pub mod structural;
pub mod training;

pub use error::{Error, Result};
pub use series::TimeSeries;
