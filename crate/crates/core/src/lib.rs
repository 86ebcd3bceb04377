//! Enhanced shortcuts to adiabaticity for moving a single atom one site
//! along an optical lattice.
//!
//! The pipeline runs from physical parameters ([`units`]) through STA
//! trap trajectories ([`control`]) and the perturbative eSTA correction
//! ([`esta`]) to split-operator simulation ([`dynamics`]). The remaining
//! modules score trajectories: sensitivity to systematic lattice errors
//! ([`robustness`]), to white noise ([`noise`]), and the change of the
//! eSTA control itself with the error ([`deviation`]).
//!
//! All quantities are in scaled units ħ = σ = τ = 1 unless a type says
//! otherwise.

pub mod control;
pub mod deviation;
pub mod dynamics;
pub mod error;
pub mod esta;
pub mod modes;
pub mod noise;
pub mod poly;
pub mod potential;
pub mod quadrature;
pub mod robustness;
pub mod units;

pub use control::{build_basis, esta_control, ControlFunction, ControlKind, CorrectionBasis, Family, SmoothingSpec};
pub use deviation::{control_deviation, DerivativeMethod, DeviationReport};
pub use dynamics::{Grid, Integrator, Numerics, Simulator, TargetConvention, TransportResult, Wavefunction};
pub use error::{Error, Result};
pub use esta::{compute_epsilon, esta_trajectory, EpsilonVector, EstaInputs};
pub use noise::{NoiseKind, NoiseReport};
pub use potential::TrapShape;
pub use robustness::{ErrorKind, RobustnessReport, SystematicError};
pub use units::{DimensionlessParams, NaturalUnits, PhysicalParams};
