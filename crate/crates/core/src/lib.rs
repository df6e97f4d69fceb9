//! Distribution-preserving quantization.

// `!(x > 0.0)` is used deliberately so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod coder;
pub mod ecdq;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod prob;
pub mod quad;
pub mod rng;
pub mod schemes;
pub mod transform;

pub use error::{Error, Result};
