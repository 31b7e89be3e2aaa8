//! Numerical homogenization of scaled non-Newtonian flow in periodically perforated tori.

pub mod constitutive;
pub mod darcy;
pub mod error;
pub mod flow;
pub mod forcing;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod micro;
pub mod mesh;
pub mod probes;
pub mod ops;
pub mod stokes;

pub use error::{Error, Result};
