//! Compiler and numerical simulator for trapped-ion qudit processors.
//!
//! The crate models registers of qudits encoded in the Zeeman structure of
//! a single ion (up to eight levels), compiles arbitrary unitaries into the
//! native pulse set of the hardware (two-level rotations, light-shift
//! phases, and Molmer-Sorensen couplings), and simulates the result with
//! configurable noise, readout cascades, tomography, and randomized
//! benchmarking.

pub mod error;
pub mod linalg;
pub mod state;
pub mod gates;
pub mod library;
pub mod circuit;
pub mod compiler;
pub mod physics;
pub mod sim;
pub mod fit;
pub mod tomo;
pub mod rb;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
pub use state::{ChoiOperator, DensityState, QuditDim, QuditState, UnitaryOp};
