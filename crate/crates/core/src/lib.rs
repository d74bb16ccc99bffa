//! Verification lab for adaptive feedback scaling in the lattice Anderson model.
//!
//! The crate has two halves. [`afs`] certifies the deterministic parameter
//! recursions in outward-rounded interval arithmetic ([`interval`]). The
//! remaining modules form a Monte-Carlo lab that samples finite-volume
//! Hamiltonians and checks the lemmas that admit desk-scale instances.

// negated comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afs;
pub mod disorder;
pub mod geometry;
pub mod interval;
pub mod mc;
pub mod operator;
pub mod spectral;

/// Version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
