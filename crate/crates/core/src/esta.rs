//! The eSTA correction: transition amplitudes G_n, gradients K_{n,l}, the
//! perturbative fidelity estimate and the single parabola step ε.

use num_complex::Complex64;

use crate::control::{auxiliary, build_basis, esta_control, invert_q0, ControlFunction, CorrectionBasis, Family, SmoothingSpec};
use crate::error::{Error, Result};
use crate::modes::{TransportModeSet, DEFAULT_QUADRATURE_ORDER};
use crate::potential::TrapShape;
use crate::quadrature::CompositeRule;
use crate::units::DimensionlessParams;

/// Number of basis polynomials used throughout.
pub const DEFAULT_BASIS_SIZE: usize = 8;
/// Mode cutoff N of the truncated sums.
pub const DEFAULT_MODE_CUTOFF: usize = 4;
/// Below this value of |Σ Re(G* K)|² the gradient is treated as zero.
pub const DEGENERATE_THRESHOLD: f64 = 1e-24;

/// Composite Gauss–Legendre in time with panels between the breakpoints of
/// the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeQuadrature {
    pub points_per_panel: usize,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        Self { points_per_panel: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct EstaInputs {
    /// STA trap trajectory q_0; must be the inversion of an auxiliary q_c.
    pub q0: ControlFunction,
    pub basis: CorrectionBasis,
    pub params: DimensionlessParams,
    /// The actual trap potential. The harmonic reference always uses
    /// `params.omega0`.
    pub shape: TrapShape,
    pub n_modes: usize,
    pub time_quadrature: TimeQuadrature,
}

impl EstaInputs {
    pub fn new(q0: ControlFunction, basis: CorrectionBasis, params: DimensionlessParams) -> Result<Self> {
        let inputs = Self {
            q0,
            basis,
            params,
            shape: TrapShape::lattice(&params),
            n_modes: DEFAULT_MODE_CUTOFF,
            time_quadrature: TimeQuadrature::default(),
        };
        inputs.validate()?;
        Ok(inputs)
    }

    /// STA design of `family` for the lattice in `params`, with the standard
    /// smoothing and an 8-polynomial basis.
    pub fn for_family(family: Family, params: DimensionlessParams, tf: f64) -> Result<Self> {
        Self::for_family_with_basis(family, params, tf, DEFAULT_BASIS_SIZE)
    }

    pub fn for_family_with_basis(family: Family, params: DimensionlessParams, tf: f64, basis_size: usize) -> Result<Self> {
        let qc = auxiliary(family, params.distance, tf, &SmoothingSpec::standard())?;
        let q0 = invert_q0(&qc, params.omega0);
        Self::new(q0, build_basis(basis_size, tf)?, params)
    }

    pub fn with_modes(mut self, n: usize) -> Result<Self> {
        self.n_modes = n;
        self.validate()?;
        Ok(self)
    }

    pub fn with_shape(mut self, shape: TrapShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::InvalidParameter { name: "N", value: 0.0 });
        }
        if self.time_quadrature.points_per_panel == 0 {
            return Err(Error::InvalidParameter { name: "points_per_panel", value: 0.0 });
        }
        if (self.q0.t_f() - self.basis.t_f()).abs() > 1e-12 * self.q0.t_f() {
            return Err(Error::InvalidParameter { name: "t_f", value: self.basis.t_f() });
        }
        if self.q0.auxiliary().is_none() {
            return Err(Error::InvalidParameter { name: "q0", value: f64::NAN });
        }
        Ok(())
    }

    pub fn auxiliary(&self) -> &ControlFunction {
        self.q0.auxiliary().expect("validated")
    }

    pub fn modes(&self) -> TransportModeSet {
        let p = &self.params;
        TransportModeSet::new(self.auxiliary().clone(), p.omega0, p.hbar, p.mass, self.n_modes, DEFAULT_QUADRATURE_ORDER)
    }

    pub fn time_rule(&self, points_per_panel: usize) -> CompositeRule {
        CompositeRule::new(&self.q0.breakpoints(), points_per_panel)
    }

    /// ΔV(y) = V_S(y) − ½ m ω0² y² with y = x − q_0(t).
    pub fn delta_v(&self, y: f64) -> f64 {
        self.shape.value(y) - 0.5 * self.params.mass * self.params.omega0.powi(2) * y * y
    }
}

/// G_n for n = 1..=N (index n-1) and K_{n,l} (row n-1, column l).
#[derive(Debug, Clone, PartialEq)]
pub struct Amplitudes {
    pub gn: Vec<Complex64>,
    pub kn: Vec<Vec<Complex64>>,
}

impl Amplitudes {
    pub fn basis_len(&self) -> usize {
        self.kn.first().map_or(0, Vec::len)
    }

    /// v_l = Σ_n Re(G_n* K_{n,l}).
    pub fn projected_gradient(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.basis_len()];
        for (g, row) in self.gn.iter().zip(&self.kn) {
            for (vl, k) in v.iter_mut().zip(row) {
                *vl += (g.conj() * k).re;
            }
        }
        v
    }

    pub fn g_norm_sqr(&self) -> f64 {
        self.gn.iter().map(|g| g.norm_sqr()).sum()
    }
}

/// Integrates mode projections over [0, t_f].
///
/// `g(t, y)` enters ∫ ⟨χ_n| g |χ_0⟩ dt and `k(t, y)` enters
/// −∫ P_l(t) ⟨χ_n| k |χ_0⟩ dt, with y = x − q_0(t).
pub(crate) fn project(
    inputs: &EstaInputs,
    points_per_panel: usize,
    g: impl Fn(f64, f64) -> f64,
    k: impl Fn(f64, f64) -> f64,
) -> Amplitudes {
    let modes = inputs.modes();
    let rule = inputs.time_rule(points_per_panel);
    let n_modes = inputs.n_modes;
    let n_basis = inputs.basis.len();
    let omega = inputs.params.omega0;
    let mut gn = vec![Complex64::new(0.0, 0.0); n_modes];
    let mut kn = vec![vec![Complex64::new(0.0, 0.0); n_basis]; n_modes];
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let trap = inputs.q0.value(t);
        let og = modes.overlaps(|x| g(t, x - trap), t);
        let ok = modes.overlaps(|x| k(t, x - trap), t);
        let p: Vec<f64> = (0..n_basis).map(|l| inputs.basis.value(l, t)).collect();
        for n in 0..n_modes {
            let phase = Complex64::from_polar(w, (n + 1) as f64 * omega * t);
            gn[n] += phase * og[n];
            for l in 0..n_basis {
                kn[n][l] -= phase * (p[l] * ok[n]);
            }
        }
    }
    Amplitudes { gn, kn }
}

pub fn compute_amplitudes(inputs: &EstaInputs) -> Amplitudes {
    amplitudes_with(inputs, inputs.time_quadrature.points_per_panel)
}

fn amplitudes_with(inputs: &EstaInputs, points: usize) -> Amplitudes {
    let shape = inputs.shape;
    project(inputs, points, |_, y| inputs.delta_v(y), |_, y| shape.slope(y))
}

/// G_n for 1 ≤ n ≤ N.
pub fn compute_gn(n: usize, inputs: &EstaInputs) -> Complex64 {
    assert!((1..=inputs.n_modes).contains(&n), "mode index {n} outside 1..={}", inputs.n_modes);
    compute_amplitudes(inputs).gn[n - 1]
}

/// K_{n,l} for 1 ≤ n ≤ N and basis index 0 ≤ l < L.
pub fn compute_kn(n: usize, l: usize, inputs: &EstaInputs) -> Complex64 {
    assert!((1..=inputs.n_modes).contains(&n), "mode index {n} outside 1..={}", inputs.n_modes);
    assert!(l < inputs.basis.len());
    compute_amplitudes(inputs).kn[n - 1][l]
}

/// 1 − Σ|G_n|²/ħ².
pub fn fidelity_estimate(amps: &Amplitudes, hbar: f64) -> f64 {
    1.0 - amps.g_norm_sqr() / (hbar * hbar)
}

/// −(2/ħ²) Σ_n Re(G_n* K_{n,l}).
pub fn gradient_estimate(amps: &Amplitudes, hbar: f64) -> Vec<f64> {
    amps.projected_gradient().into_iter().map(|v| -2.0 * v / (hbar * hbar)).collect()
}

pub fn estimate_fidelity_tdpt(inputs: &EstaInputs) -> f64 {
    fidelity_estimate(&compute_amplitudes(inputs), inputs.params.hbar)
}

pub fn estimate_gradient_tdpt(inputs: &EstaInputs) -> Vec<f64> {
    gradient_estimate(&compute_amplitudes(inputs), inputs.params.hbar)
}

/// TDPT fidelity estimate when the trap actually follows `applied` while the
/// harmonic reference and modes stay those of `inputs.q0`.
pub fn estimate_fidelity_for(inputs: &EstaInputs, applied: &ControlFunction) -> f64 {
    let shape = inputs.shape;
    let half_mw2 = 0.5 * inputs.params.mass * inputs.params.omega0.powi(2);
    let amps = project(
        inputs,
        inputs.time_quadrature.points_per_panel,
        |t, y| shape.value(y + inputs.q0.value(t) - applied.value(t)) - half_mw2 * y * y,
        |_, _| 0.0,
    );
    fidelity_estimate(&amps, inputs.params.hbar)
}

/// ε = −(Σ|G_n|²) v / |v|² with v = Σ_n Re(G_n* K_n). Returns the zero
/// vector and `true` when |v|² falls below [`DEGENERATE_THRESHOLD`].
pub fn epsilon_from_amplitudes(amps: &Amplitudes) -> (Vec<f64>, bool) {
    let v = amps.projected_gradient();
    let v2: f64 = v.iter().map(|x| x * x).sum();
    if !(v2 >= DEGENERATE_THRESHOLD) {
        return (vec![0.0; v.len()], true);
    }
    let scale = -amps.g_norm_sqr() / v2;
    (v.into_iter().map(|x| scale * x).collect(), false)
}

/// Result of the eSTA step.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonVector {
    /// ε_l in units of σ.
    pub values: Vec<f64>,
    pub gn: Vec<Complex64>,
    pub kn: Vec<Vec<Complex64>>,
    pub fidelity_estimate: f64,
    /// The gradient vanished and ε was set to zero.
    pub degenerate: bool,
    /// Doubling the time nodes changed no |G_n| by more than 1e-8.
    pub time_converged: bool,
}

pub fn compute_epsilon(inputs: &EstaInputs) -> Result<EpsilonVector> {
    inputs.validate()?;
    let amps = compute_amplitudes(inputs);
    let finer = amplitudes_with(inputs, 2 * inputs.time_quadrature.points_per_panel);
    let time_converged = amps.gn.iter().zip(&finer.gn).all(|(a, b)| (a.norm() - b.norm()).abs() <= 1e-8);
    let (values, degenerate) = epsilon_from_amplitudes(&amps);
    Ok(EpsilonVector {
        values,
        fidelity_estimate: fidelity_estimate(&amps, inputs.params.hbar),
        gn: amps.gn,
        kn: amps.kn,
        degenerate,
        time_converged,
    })
}

/// The eSTA trajectory Q = q_0 + Σ ε_l P_l together with ε.
pub fn esta_trajectory(inputs: &EstaInputs) -> Result<(ControlFunction, EpsilonVector)> {
    let eps = compute_epsilon(inputs)?;
    Ok((esta_control(&inputs.q0, &inputs.basis, &eps.values), eps))
}
