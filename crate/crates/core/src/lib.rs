//! Adaptive-depth residual networks trained as optimal control of a neural ODE.

pub mod artifacts;
pub mod checkpoint;
pub mod compare;
pub mod datasets;
pub mod dwr;
pub mod error;
pub mod field;
pub mod gradcheck;
pub mod grid;
pub mod h1;
pub mod linalg;
pub mod loss;
pub mod optimizer;
pub mod oracles;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
