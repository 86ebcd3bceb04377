//! Static trap shapes V(u), with u the displacement from the trap centre.

use crate::units::DimensionlessParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrapShape {
    /// depth · sin²(wavenumber · u)
    Lattice { depth: f64, wavenumber: f64 },
    /// ½ · curvature · u²
    Harmonic { curvature: f64 },
}

impl TrapShape {
    /// The unperturbed lattice V_S.
    pub fn lattice(p: &DimensionlessParams) -> Self {
        TrapShape::Lattice { depth: p.depth, wavenumber: p.wavenumber }
    }

    /// The harmonic reference V_0 = ½ m ω0² u².
    pub fn harmonic(p: &DimensionlessParams) -> Self {
        TrapShape::Harmonic { curvature: p.mass * p.omega0 * p.omega0 }
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            TrapShape::Lattice { depth, wavenumber } => depth * (wavenumber * u).sin().powi(2),
            TrapShape::Harmonic { curvature } => 0.5 * curvature * u * u,
        }
    }

    /// dV/du.
    pub fn slope(&self, u: f64) -> f64 {
        match *self {
            TrapShape::Lattice { depth, wavenumber } => depth * wavenumber * (2.0 * wavenumber * u).sin(),
            TrapShape::Harmonic { curvature } => curvature * u,
        }
    }

    /// V''(0), i.e. m ω² of the well bottom.
    pub fn curvature(&self) -> f64 {
        match *self {
            TrapShape::Lattice { depth, wavenumber } => 2.0 * depth * wavenumber * wavenumber,
            TrapShape::Harmonic { curvature } => curvature,
        }
    }

    /// Trap frequency for a particle of mass `mass`.
    pub fn omega(&self, mass: f64) -> f64 {
        (self.curvature() / mass).sqrt()
    }
}
