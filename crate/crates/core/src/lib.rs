//! Grid-free incompressible flow on a Gaussian spatial representation.
//!
//! The velocity field is a weighted sum of clamped anisotropic Gaussian
//! kernels ([`gsr::GsrField`]). Each frame is advanced by advecting kernel
//! centers along the previous field and then minimizing vorticity-transport,
//! divergence and boundary losses with Adam.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod fitting;
pub mod geometry;
pub mod gsr;
pub mod hash;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scenes;
pub mod sim;

pub use error::{GsrError, Result};
pub use field::VelocityField;
pub use gsr::{GaussianParticle, GsrField};
pub use scenes::Scene;
