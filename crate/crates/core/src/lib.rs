//! N-fold pole-ansatz Bäcklund transformations for the Davey-Stewartson
//! system, together with a numerical verification harness.

// Negated comparisons are how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod backlund;
pub mod cli;
pub mod config;
pub mod fields;
pub mod laxpair;
pub mod verify;
