//! Lab-frame lattice parameters and the natural units derived from them.
//!
//! Everything downstream of this module works in scaled units: ħ = 1, lengths
//! in σ and times in τ = 2π/ω0. With those three fixed the mass comes out as
//! m = 1/(2π), so that ω0 = 2π and σ = sqrt(ħ/(m ω0)) = 1.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// CODATA 2018 reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// CODATA 2018 atomic mass constant, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Lab-frame inputs of the transport problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Atomic mass in atomic mass units.
    pub mass: f64,
    /// Lattice laser wavelength in nanometres.
    pub wavelength: f64,
    /// Lattice depth in units of the recoil energy.
    pub alpha: f64,
    /// Transport distance in lattice sites (λ/2 each).
    pub distance_sites: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { mass: 133.0, wavelength: 866.0, alpha: 150.0, distance_sites: 1.0 }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass_amu", self.mass),
            ("wavelength_nm", self.wavelength),
            ("alpha", self.alpha),
            ("distance_sites", self.distance_sites),
        ];
        for (key, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name: key, value });
            }
        }
        Ok(())
    }
}

/// SI values of the natural scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaturalUnits {
    /// Harmonic trap frequency at the bottom of a well, rad/s.
    pub omega0: f64,
    /// Time unit 2π/ω0, s.
    pub tau: f64,
    /// Length unit sqrt(ħ/(m ω0)), m.
    pub sigma: f64,
    pub recoil_energy: f64,
    pub lattice_depth_u0: f64,
    /// 2π/λ, 1/m.
    pub wavenumber_k0: f64,
    /// U0/(ħ ω0), equal to sqrt(α)/2.
    pub u_tilde: f64,
    /// Transport distance, m.
    pub distance: f64,
}

pub fn derive_units(params: &PhysicalParams) -> Result<NaturalUnits> {
    params.validate()?;
    let mass = params.mass * ATOMIC_MASS_UNIT;
    let wavelength = params.wavelength * 1e-9;
    let k0 = TAU / wavelength;
    let recoil_energy = 2.0 * (PI * HBAR).powi(2) / (mass * wavelength * wavelength);
    let u0 = params.alpha * recoil_energy;
    let omega0 = (2.0 * u0 / mass).sqrt() * k0;
    let sigma = (HBAR / (mass * omega0)).sqrt();
    Ok(NaturalUnits {
        omega0,
        tau: TAU / omega0,
        sigma,
        recoil_energy,
        lattice_depth_u0: u0,
        wavenumber_k0: k0,
        u_tilde: u0 / (HBAR * omega0),
        distance: params.distance_sites * wavelength / 2.0,
    })
}

/// The transport problem in scaled units (ħ = 1, length σ, time τ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessParams {
    pub hbar: f64,
    pub mass: f64,
    pub omega0: f64,
    /// Lattice depth U0.
    pub depth: f64,
    /// Lattice wavenumber k0.
    pub wavenumber: f64,
    /// Transport distance d.
    pub distance: f64,
}

impl DimensionlessParams {
    /// Length scale sqrt(ħ/(m ω0)) of the harmonic reference; 1 for the
    /// unperturbed problem.
    pub fn oscillator_length(&self) -> f64 {
        (self.hbar / (self.mass * self.omega0)).sqrt()
    }

    pub fn u_tilde(&self) -> f64 {
        self.depth / (self.hbar * self.omega0)
    }

    /// Same problem with a different lattice depth and wavenumber. The
    /// harmonic frequency follows from ω = sqrt(2U/m) k.
    pub fn with_lattice(&self, depth: f64, wavenumber: f64) -> Self {
        Self {
            depth,
            wavenumber,
            omega0: (2.0 * depth / self.mass).sqrt() * wavenumber,
            ..*self
        }
    }
}

pub fn nondimensionalize(units: &NaturalUnits) -> DimensionlessParams {
    let hbar = 1.0;
    let omega0 = TAU;
    DimensionlessParams {
        hbar,
        mass: hbar / omega0,
        omega0,
        depth: units.u_tilde * hbar * omega0,
        wavenumber: units.wavenumber_k0 * units.sigma,
        distance: units.distance / units.sigma,
    }
}

/// Shorthand for `nondimensionalize(derive_units(params)?)`.
pub fn scaled(params: &PhysicalParams) -> Result<DimensionlessParams> {
    Ok(nondimensionalize(&derive_units(params)?))
}
