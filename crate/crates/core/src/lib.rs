#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod markov;
pub mod measure;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod scalar;
pub mod schemes;

pub use error::{Error, Result};
pub use scalar::Scalar;
