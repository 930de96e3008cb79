//! Sparse phase retrieval from magnitude-only Gaussian measurements.
//!
//! The crate recovers a (block-)sparse vector `x` from `psi_i = |<a_i, x>|`
//! with compressive reweighted amplitude flow (CRAF): a weighted spectral
//! initializer restricted to an estimated block support, followed by
//! reweighted gradient steps projected onto the k-block-sparse set. The
//! truncated-gradient SPARTA iteration is included as a baseline, along with
//! a Monte Carlo harness for success-rate, initialization and noise sweeps.
//!
//! ```
//! use craf::model::{generate_instance, BlockStructure};
//! use craf::numerics::RngStream;
//! use craf::refine::{craf_solve, CrafParams};
//!
//! let blocks = BlockStructure::new(1, 200).unwrap();
//! let mut rng = RngStream::new(3);
//! let inst = generate_instance(200, 600, 4, blocks, 0.0, &mut rng).unwrap();
//! let trace = craf_solve(&inst, 4, &CrafParams::default(), Some(inst.signal())).unwrap();
//! assert!(trace.final_rel_error().unwrap() < 1e-5);
//! ```

// `!(a >= b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod harness;
pub mod init;
pub mod model;
pub mod numerics;
pub mod refine;
pub mod verify;

pub use error::{Error, Result};
