//! Systematic lattice errors, the sensitivity S and the error bound B.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::control::ControlFunction;
use crate::dynamics::{LatticeTable, Simulator};
use crate::error::{Error, Result};
use crate::potential::TrapShape;
use crate::quadrature::trapezoid;
use crate::units::DimensionlessParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorKind {
    /// Depth U0(1+δ) and wavenumber k0/√(1+δ); ω stays ω0.
    Correlated,
    /// Depth U0(1+δ).
    Amplitude,
    /// Wavenumber k0√(1+δ).
    Wavenumber,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 3] = [ErrorKind::Correlated, ErrorKind::Amplitude, ErrorKind::Wavenumber];

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Correlated => "correlated",
            ErrorKind::Amplitude => "amplitude",
            ErrorKind::Wavenumber => "wavenumber",
        }
    }

    /// Relative rates (a, b) = (D'(0)/U0, κ'(0)/k0).
    pub fn rates(self) -> (f64, f64) {
        match self {
            ErrorKind::Correlated => (1.0, -0.5),
            ErrorKind::Amplitude => (1.0, 0.0),
            ErrorKind::Wavenumber => (0.0, 0.5),
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ErrorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown error kind `{s}` (expected correlated, amplitude or wavenumber)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystematicError {
    pub kind: ErrorKind,
    pub delta: f64,
}

impl SystematicError {
    pub fn new(kind: ErrorKind, delta: f64) -> Result<Self> {
        if !delta.is_finite() || 1.0 + delta <= 0.0 {
            return Err(Error::InvalidParameter { name: "delta", value: delta });
        }
        Ok(Self { kind, delta })
    }

    /// Perturbed lattice depth and wavenumber.
    pub fn lattice(&self, p: &DimensionlessParams) -> (f64, f64) {
        let s = 1.0 + self.delta;
        match self.kind {
            ErrorKind::Correlated => (p.depth * s, p.wavenumber / s.sqrt()),
            ErrorKind::Amplitude => (p.depth * s, p.wavenumber),
            ErrorKind::Wavenumber => (p.depth, p.wavenumber * s.sqrt()),
        }
    }

    /// The error potential as a trap shape.
    pub fn shape(&self, p: &DimensionlessParams) -> TrapShape {
        let (depth, wavenumber) = self.lattice(p);
        TrapShape::Lattice { depth, wavenumber }
    }

    /// The problem as seen by a designer who knows δ, with ω following the
    /// perturbed lattice.
    pub fn params(&self, p: &DimensionlessParams) -> DimensionlessParams {
        let (depth, wavenumber) = self.lattice(p);
        p.with_lattice(depth, wavenumber)
    }
}

/// ∂V/∂δ and ∂V'/∂δ at δ = 0 of an error kind, V' = dV/du.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorDerivative {
    depth: f64,
    wavenumber: f64,
    a: f64,
    b: f64,
}

impl ErrorDerivative {
    pub fn new(kind: ErrorKind, p: &DimensionlessParams) -> Self {
        let (a, b) = kind.rates();
        Self { depth: p.depth, wavenumber: p.wavenumber, a, b }
    }

    /// Same derivative multiplied by a constant.
    pub fn scaled(self, c: f64) -> Self {
        Self { a: c * self.a, b: c * self.b, ..self }
    }

    /// U0 a sin²(k0 u) + U0 k0 b u sin(2 k0 u).
    pub fn potential(&self, u: f64) -> f64 {
        let (d, k) = (self.depth, self.wavenumber);
        d * self.a * (k * u).sin().powi(2) + d * k * self.b * u * (2.0 * k * u).sin()
    }

    /// U0 k0 (a + b) sin(2 k0 u) + 2 U0 k0² b u cos(2 k0 u).
    pub fn slope(&self, u: f64) -> f64 {
        let (d, k) = (self.depth, self.wavenumber);
        d * k * (self.a + self.b) * (2.0 * k * u).sin() + 2.0 * d * k * k * self.b * u * (2.0 * k * u).cos()
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    /// `potential` on a grid at trap position q; `table` must use the same
    /// wavenumber.
    pub fn fill(&self, table: &LatticeTable, q: f64, out: &mut [f64]) {
        let (d, k, a, b) = (self.depth, self.wavenumber, self.a, self.b);
        table.fill(q, out, |u, s2, c2| d * a * 0.5 * (1.0 - c2) + d * k * b * u * s2);
    }

    /// ∂(1/ω²)/∂δ · ω0², i.e. −(a + 2b). Multiplies q̈_c/ω0² in ∂q_0/∂δ.
    pub fn inverse_omega_sq_rate(&self) -> f64 {
        -(self.a + 2.0 * self.b)
    }
}

/// Default central-difference step in δ.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// |F(+h) − F(−h)| / 2h from two full transports.
pub fn sensitivity_fd(sim: &Simulator, trajectory: &ControlFunction, kind: ErrorKind, h: f64) -> Result<f64> {
    let plus = sim.simulate_transport(trajectory, Some(&SystematicError::new(kind, h)?))?;
    let minus = sim.simulate_transport(trajectory, Some(&SystematicError::new(kind, -h)?))?;
    Ok((plus - minus).abs() / (2.0 * h))
}

/// First-order perturbative sensitivity with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdptSensitivity {
    /// (2/ħ)|Im(A* I)|
    pub sensitivity: f64,
    /// A = ⟨Ψ_T|Ψ_0(t_f)⟩, so F(0) = |A|².
    pub overlap: Complex64,
    /// I = ∫ ⟨Ψ_T(t)| ∂H/∂δ |Ψ_0(t)⟩ dt
    pub integral: Complex64,
}

impl TdptSensitivity {
    pub fn fidelity(&self) -> f64 {
        self.overlap.norm_sqr()
    }
}

/// Sensitivity from time-dependent perturbation theory for each kind in
/// `kinds`, sharing one forward/backward propagation.
///
/// With F(δ) = |A − (i/ħ) δ I|², dF/dδ = (2/ħ) Im(A* I).
pub fn sensitivity_tdpt(sim: &Simulator, trajectory: &ControlFunction, kinds: &[ErrorKind]) -> Result<Vec<TdptSensitivity>> {
    let p = *sim.params();
    let TrapShape::Lattice { wavenumber, .. } = sim.shape() else {
        return Err(Error::InvalidParameter { name: "shape", value: f64::NAN });
    };
    let table = LatticeTable::new(sim.grid(), wavenumber);
    let derivs: Vec<ErrorDerivative> = kinds.iter().map(|&k| ErrorDerivative::new(k, &p)).collect();
    let mut buf = vec![0.0; sim.grid().len()];
    let mut times = Vec::new();
    let mut integrands: Vec<Vec<Complex64>> = vec![Vec::new(); kinds.len()];
    let mut overlap = Complex64::new(0.0, 0.0);
    sim.overlap_stream(trajectory, |t, psi, target| {
        times.push(t);
        let q = trajectory.value(t);
        for (d, out) in derivs.iter().zip(integrands.iter_mut()) {
            d.fill(&table, q, &mut buf);
            out.push(target.matrix_element(&buf, psi).expect("same grid"));
        }
        overlap = target.inner(psi).expect("same grid");
    })?;
    Ok(integrands
        .iter()
        .map(|y| {
            let integral = trapezoid(&times, y);
            TdptSensitivity { sensitivity: (2.0 / p.hbar) * (overlap.conj() * integral).im.abs(), overlap, integral }
        })
        .collect())
}

/// B = (F(0) − F_R)/S when F(0) > F_R, else 0. A vanishing S with F(0) > F_R
/// gives +∞.
pub fn error_bound(fidelity_at_zero: f64, sensitivity: f64, f_reference: f64) -> f64 {
    if fidelity_at_zero <= f_reference {
        return 0.0;
    }
    if sensitivity == 0.0 {
        return f64::INFINITY;
    }
    (fidelity_at_zero - f_reference) / sensitivity.abs()
}

/// Fidelity, sensitivity and bound for one (trajectory, error kind, t_f).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessReport {
    pub fidelity_at_zero: f64,
    pub sensitivity: f64,
    pub bound: f64,
    pub f_reference: f64,
}

impl RobustnessReport {
    pub fn new(fidelity_at_zero: f64, sensitivity: f64, f_reference: f64) -> Self {
        Self { fidelity_at_zero, sensitivity, bound: error_bound(fidelity_at_zero, sensitivity, f_reference), f_reference }
    }
}
