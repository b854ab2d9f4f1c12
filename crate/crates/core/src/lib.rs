//! Goal-based neural physics trajectory prediction.
//!
//! A two-stage predictor for highway vehicles: a transformer-style goal
//! network proposes endpoints conditioned on clustered intention modes, and a
//! social-force model with learned relaxation time and interaction strengths
//! rolls the trajectory out toward each goal.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! plotting live in the `gnp` companion crate.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod geom;
pub mod goalnet;
pub mod modes;
pub mod nn;
pub mod nsf;
pub mod synthgen;
pub mod trajdata;

pub use error::{Error, Result};
