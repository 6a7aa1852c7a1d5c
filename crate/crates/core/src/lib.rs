//! Randomized numerical linear algebra.
//!
//! The crate is layered: [`rng`] and [`sketching`] produce reproducible
//! sketching operators, [`detkernels`] holds the deterministic dense and
//! iterative building blocks, and the driver modules ([`leastsq`],
//! [`lowrank`], [`fullrank`], [`trace`], [`leverage`], [`errorest`]) combine
//! the two. [`synth`] and [`io`] support experiments and file interchange.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detkernels;
pub mod errorest;
pub mod fullrank;
pub mod io;
pub mod leastsq;
pub mod leverage;
pub mod lowrank;
pub mod rng;
pub mod sketching;
pub mod synth;
pub mod trace;

pub use nalgebra::{DMatrix, DVector};
pub use rng::RngKey;
