#![no_std]
// NaN must fail the positivity checks, hence `!(x > 0.0)`
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
extern crate alloc;

pub mod baselines;
pub mod capacity;
pub mod distributed;
pub mod error;
pub mod flexcommit;
pub mod ingest;
pub mod linpolicy;
pub mod model;
pub mod numerics;
pub mod realtime;

pub use error::{Error, Result};
