//! Nehari-manifold analysis and solver for a one-dimensional p-Kirchhoff
//! problem with sign-changing weights and Dirichlet boundary conditions.

pub mod config;
pub mod error;
pub mod fiber;
pub mod grid;
pub mod kirchhoff;
pub mod solver;
pub mod thresholds;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use fiber::{Branch, FiberProfile, NehariClass};
pub use grid::{Field, Grid};
pub use kirchhoff::{KirchhoffModel, ModelVariant, ProblemParams};
