//! Hamiltonians, the discrete value function and its residual checks.

mod grid;
mod hamiltonian;
mod residual;
mod solver;

pub use grid::{Grid, GridAdjustment, Node};
pub use hamiltonian::{hamiltonian_edge, hamiltonian_edge_down, hamiltonian_vertex};
pub use residual::{viscosity_residual, ResidualField};
pub use solver::{backward_solve, backward_solve_exhaustive, dpp_residual, Arrival, ValueField};

pub(crate) use solver::best_arrival;
