//! Co-design of deadbeat controllers and multi-hop wireless network weights.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod network;
pub mod optimize;
pub mod poly;
pub mod qp;
pub mod report;
pub mod scheduler;
pub mod synthesis;
