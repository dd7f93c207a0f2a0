//! Monte Carlo simulation and analysis of correlated double-drive dynamical
//! decoupling on a driven two-level system.
//!
//! The crate is layered bottom-up: [`smallmat`] and [`noise`] are kernels,
//! [`protocol`] holds closed-form relations, [`dynamics`] and [`lindblad`]
//! integrate the equations of motion, [`analysis`] turns curves into
//! coherence times, and [`scenarios`]/[`cli`] wire everything to files.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod lindblad;
pub mod noise;
pub mod protocol;
pub mod scenarios;
pub mod smallmat;

pub use error::{Error, Result};
