//! Steady-state periodic and quasi-periodic responses of nonlinear mechanical systems,
//! computed from integral equations built on periodic Green's functions.

pub mod bench;
pub mod continuation;
pub mod discretization;
pub mod error;
pub mod forcing;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod newton;
pub mod nonlinear;
pub mod picard;
pub mod problem;

pub use error::{Result, SsrError};
