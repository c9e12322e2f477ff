//! Numerical optimal control and mean field games on a star network.
//!
//! * [`network`]: junction geometry and the geodesic distance.
//! * [`costs`]: running and terminal costs, trajectory costs and the
//!   measure-dependent cost functors.
//! * [`hj`]: Hamiltonians, the backward arrival-node solver for the value
//!   function and residual checks.
//! * [`trajectory`]: admissible trajectories, optimal synthesis and a
//!   brute-force optimal control oracle.
//! * [`mfg`]: trajectory measures, their time marginals, W1 on the junction,
//!   exploitability and fictitious play.
//! * [`export`]: deterministic CSV writers.

pub mod costs;
pub mod error;
pub mod export;
pub mod hj;
pub mod mfg;
pub mod network;
pub mod oracle;
pub mod trajectory;

pub use error::{Error, Result};
