//! Multiscale finite element methods for `−∇·(a∇u) = f` on 2D domains with
//! rapidly oscillating `a`.
//!
//! Coarse elements carry shape functions computed from local fine-scale
//! solves, optionally on an enlarged (oversampled) patch. On top of those the
//! crate builds conforming Petrov-Galerkin methods and interior-penalty
//! discontinuous methods, a fine-grid reference solver, a periodic
//! homogenization oracle and the error norms used to compare them.
//! [`experiment`] ties it together behind a TOML-configured runner.

pub mod analysis;
pub mod broken;
pub mod coefficient;
pub mod conforming;
pub mod dg;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod func;
pub mod homogenization;
pub mod linalg;
pub mod mesh;
pub mod msbasis;
pub mod render;

pub use error::{Error, Result};
