//! Revenue formulas, revenue-gap numerics and extremal instances for k-unit
//! anonymous pricing (AP), anonymous reserve (AR) and the ex-ante relaxation (EAR).
// `!(x > t)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bernoulli_sum;
pub mod distributions;
pub mod error;
pub mod gap;
pub mod instances;
pub mod order_stats;
pub mod quadrature;
pub mod revenue;
pub mod roots;
pub mod sim;
pub mod special;
pub mod verify;

pub use distributions::{Cdf, TriangleParams};
pub use error::{Error, Result};
pub use gap::GapReport;
pub use order_stats::Pmf;
pub use revenue::{Allocation, Instance};
