//! Lipschitz-function witnesses for (non-)absolute continuity of sampled
//! curves in metric spaces.

// `!(x > y)` rejects NaN along with the failing case.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod curve;
pub mod lipschitz;
pub mod metric;
pub mod par;
pub mod modification;
pub mod zigzag;
pub mod analysis;
pub mod certificate;
pub mod generate;
