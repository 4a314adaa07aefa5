// Parameter checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod assess;
pub mod batch;
pub mod belief;
pub mod domain;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod human;
pub mod optimizer;
pub mod seed;
pub mod session;

pub use error::{Error, Result};
