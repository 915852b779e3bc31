//! Numerical laboratory for decoherence-driven quantum-classical
//! correspondence on one-dimensional model systems.

pub mod classical;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod histories;
pub mod partition;
pub mod semiclassical;
pub mod scalar;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::{Complex, Real};

/// Double-precision forms of the generic types.
pub type Grid = grid::Grid<f64>;
pub type WaveFunction = grid::WaveFunction<f64>;
pub type DensityMatrix = grid::DensityMatrix<f64>;
pub type CompositeState = grid::CompositeState<f64>;
pub type HamiltonianSpec = dynamics::HamiltonianSpec<f64>;
pub type EnvironmentSpec = dynamics::EnvironmentSpec<f64>;
pub type MasterEquationSpec = dynamics::MasterEquationSpec<f64>;
pub type MasterHistory = dynamics::MasterHistory<f64>;
pub type ClassicalState = classical::ClassicalState<f64>;
pub type ClassicalTrajectory = classical::ClassicalTrajectory<f64>;
