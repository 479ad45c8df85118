//! Incompressible 2D smoke on a MAC grid, stream-function extraction by
//! Helmholtz-Hodge decomposition, streamline sketches, and flow
//! reconstruction from directed strokes.

pub mod dataset;
pub mod error;
pub mod fields;
pub mod hhd;
pub mod poisson;
pub mod reconstruct;
pub mod render;
pub mod sim;
pub mod streamline;

pub use error::{Error, Result};
pub use fields::{Field, FieldKind, Grid, MacVelocity, ScalarField, Siting, Vec2};
