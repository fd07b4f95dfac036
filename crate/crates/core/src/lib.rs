// SPDX-License-Identifier: Apache-2.0

//! Analytical latency and resource lower bounds for HLS pragma
//! configurations on affine loop kernels, an exact solver for the
//! pragma-selection problem, and a bound-pruned design-space exploration
//! driver.

pub mod analysis;
pub mod calibration;
pub mod config;
pub mod dse;
pub mod ir;
pub mod latency;
pub mod nlp;
pub mod oracle;
pub mod opgraph;
pub mod parse;
pub mod resources;

pub use calibration::{Calibration, Resources};
pub use ir::KernelIr;
pub use parse::parse_kernel;
