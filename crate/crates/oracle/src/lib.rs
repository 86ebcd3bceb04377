//! Reference computations for cross-checking `esta-core`: a Crank–Nicolson
//! propagator, a stochastic Monte-Carlo noise estimator, Sturm-sequence
//! bisection for ground energies and brute-force dense quadrature.
//!
//! Everything here favours transparency over speed.

pub mod crank_nicolson;
pub mod dense;
pub mod monte_carlo;
pub mod sturm;

pub use crank_nicolson::{crank_nicolson_fidelity, CrankNicolson};
pub use dense::dense_gn;
pub use monte_carlo::{noise_slope, MonteCarloConfig, SlopeEstimate};
pub use sturm::{count_below, ground_energy_fd, lowest_eigenvalue};
