// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aero;
pub mod cosim;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod integrators;
pub mod kinematics;
pub mod series;

pub use error::{Error, Result};
