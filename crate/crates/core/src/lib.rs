// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod backward;
pub mod datasets;
pub mod error;
pub mod exec;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod particles;
pub mod pipeline;
pub mod potential;
pub mod rng;
