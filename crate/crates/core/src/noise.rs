//! White-noise sensitivity S_N, the adiabatic constants C and the noise
//! error bound B_N.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::control::ControlFunction;
use crate::dynamics::{LatticeTable, Simulator, Wavefunction};
use crate::error::{Error, Result};
use crate::potential::TrapShape;
use crate::quadrature::trapezoid;
use crate::robustness::error_bound;
use crate::units::DimensionlessParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseKind {
    /// Fluctuating lattice position: H_1 = −σ U0 k0 sin(2 k0 u).
    Position,
    /// Fluctuating lattice depth: H_1 = U0 sin²(k0 u).
    Amplitude,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 2] = [NoiseKind::Position, NoiseKind::Amplitude];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Position => "position",
            NoiseKind::Amplitude => "amplitude",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown noise kind `{s}` (expected position or amplitude)"))
    }
}

/// The multiplication operator H_1 as a function of u = x − Q(t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCoupling {
    pub kind: NoiseKind,
    depth: f64,
    wavenumber: f64,
    sigma: f64,
}

impl NoiseCoupling {
    pub fn new(kind: NoiseKind, p: &DimensionlessParams) -> Self {
        Self { kind, depth: p.depth, wavenumber: p.wavenumber, sigma: p.oscillator_length() }
    }

    pub fn value(&self, u: f64) -> f64 {
        let (d, k) = (self.depth, self.wavenumber);
        match self.kind {
            NoiseKind::Position => -self.sigma * d * k * (2.0 * k * u).sin(),
            NoiseKind::Amplitude => d * (k * u).sin().powi(2),
        }
    }

    /// H_1 on the grid at trap position q.
    pub fn fill(&self, table: &LatticeTable, q: f64, out: &mut [f64]) {
        let (d, k, s) = (self.depth, self.wavenumber, self.sigma);
        match self.kind {
            NoiseKind::Position => table.fill(q, out, |_, s2, _| -s * d * k * s2),
            NoiseKind::Amplitude => table.fill(q, out, |_, _, c2| 0.5 * d * (1.0 - c2)),
        }
    }
}

/// The integrand Re{⟨Ψ_T|H_1²|Ψ_0⟩⟨Ψ_0|Ψ_T⟩} − |⟨Ψ_T|H_1|Ψ_0⟩|² at one time.
pub fn noise_integrand(h1: &[f64], psi: &Wavefunction, target: &Wavefunction) -> Result<f64> {
    let h1sq: Vec<f64> = h1.iter().map(|h| h * h).collect();
    let a: Complex64 = target.matrix_element(&h1sq, psi)?;
    let b = psi.inner(target)?;
    let c = target.matrix_element(h1, psi)?;
    Ok((a * b).re - c.norm_sqr())
}

/// S_N for each kind in `kinds` from one forward/backward propagation,
/// trapezoid in time on the propagation grid.
pub fn noise_sensitivities(sim: &Simulator, trajectory: &ControlFunction, kinds: &[NoiseKind]) -> Result<Vec<f64>> {
    let p = *sim.params();
    let table = lattice_table(sim)?;
    let couplings: Vec<NoiseCoupling> = kinds.iter().map(|&k| NoiseCoupling::new(k, &p)).collect();
    let mut buf = vec![0.0; sim.grid().len()];
    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); kinds.len()];
    let mut failure = None;
    sim.overlap_stream(trajectory, |t, psi, target| {
        times.push(t);
        let q = trajectory.value(t);
        for (c, out) in couplings.iter().zip(values.iter_mut()) {
            c.fill(&table, q, &mut buf);
            match noise_integrand(&buf, psi, target) {
                Ok(v) => out.push(v),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(values.iter().map(|y| trapezoid(&times, y).abs() / (p.hbar * p.hbar)).collect())
}

pub fn noise_sensitivity(sim: &Simulator, trajectory: &ControlFunction, kind: NoiseKind) -> Result<f64> {
    Ok(noise_sensitivities(sim, trajectory, &[kind])?[0])
}

fn lattice_table(sim: &Simulator) -> Result<LatticeTable> {
    match sim.shape() {
        TrapShape::Lattice { wavenumber, .. } => Ok(LatticeTable::new(sim.grid(), wavenumber)),
        TrapShape::Harmonic { .. } => Err(Error::InvalidParameter { name: "shape", value: f64::NAN }),
    }
}

/// Variance of H_1 in `state` (trap at `center`), divided by ħ².
pub fn coupling_variance(sim: &Simulator, kind: NoiseKind, state: &Wavefunction, center: f64) -> Result<f64> {
    let p = sim.params();
    let mut h1 = vec![0.0; sim.grid().len()];
    NoiseCoupling::new(kind, p).fill(&lattice_table(sim)?, center, &mut h1);
    let h1sq: Vec<f64> = h1.iter().map(|h| h * h).collect();
    let m2 = state.matrix_element(&h1sq, state)?.re;
    let m1 = state.matrix_element(&h1, state)?.re;
    Ok((m2 - m1 * m1).abs() / (p.hbar * p.hbar))
}

/// C = Var(H_1)/ħ² in the numerically prepared lattice ground state.
pub fn adiabatic_constant_exact(sim: &Simulator, kind: NoiseKind) -> Result<f64> {
    coupling_variance(sim, kind, sim.initial_state(), sim.origin())
}

/// Closed forms from the harmonic ground state:
/// position (ω0² Ũ0/4)[1 − e^{−2/Ũ0}], amplitude (ω0² Ũ0²/8) e^{−2/Ũ0}(e^{1/Ũ0} − 1)².
pub fn adiabatic_constant_approx(kind: NoiseKind, p: &DimensionlessParams) -> f64 {
    let u = p.u_tilde();
    let w2 = p.omega0 * p.omega0;
    match kind {
        NoiseKind::Position => w2 * u / 4.0 * (1.0 - (-2.0 / u).exp()),
        NoiseKind::Amplitude => w2 * u * u / 8.0 * (-2.0 / u).exp() * ((1.0 / u).exp() - 1.0).powi(2),
    }
}

/// B_N = (F(0) − F_R)/S_N with the same conventions as the systematic bound.
pub fn noise_error_bound(fidelity_at_zero: f64, s_n: f64, f_reference: f64) -> f64 {
    error_bound(fidelity_at_zero, s_n, f_reference)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseReport {
    pub s_n: f64,
    pub c_exact: f64,
    pub c_approx: f64,
    pub b_n: f64,
}

/// Fidelity, S_N, both constants and B_N for one trajectory and kind.
pub fn noise_report(
    sim: &Simulator,
    trajectory: &ControlFunction,
    kind: NoiseKind,
    f_reference: f64,
) -> Result<(f64, NoiseReport)> {
    let f0 = sim.simulate_transport(trajectory, None)?;
    let s_n = noise_sensitivity(sim, trajectory, kind)?;
    let report = NoiseReport {
        s_n,
        c_exact: adiabatic_constant_exact(sim, kind)?,
        c_approx: adiabatic_constant_approx(kind, sim.params()),
        b_n: noise_error_bound(f0, s_n, f_reference),
    };
    Ok((f0, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Grid, Numerics};
    use crate::units::{scaled, PhysicalParams};
    use approx::assert_relative_eq;

    fn params() -> DimensionlessParams {
        scaled(&PhysicalParams::default()).unwrap()
    }

    #[test]
    fn couplings_vanish_at_the_trap_centre() {
        let p = params();
        for kind in NoiseKind::ALL {
            assert_eq!(NoiseCoupling::new(kind, &p).value(0.0), 0.0);
        }
        assert_eq!("position".parse::<NoiseKind>().unwrap(), NoiseKind::Position);
        assert!("phase".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn position_coupling_is_minus_sigma_times_force() {
        let p = params();
        let g = Grid::for_transport(0.0, p.distance, 12.0, 2048).unwrap();
        let table = LatticeTable::new(&g, p.wavenumber);
        let q = 0.37;
        let mut h = vec![0.0; g.len()];
        NoiseCoupling::new(NoiseKind::Position, &p).fill(&table, q, &mut h);
        let shape = TrapShape::lattice(&p);
        let dx = g.dx();
        for i in (100..1900).step_by(97) {
            let x = g.x(i);
            let grad = (shape.value(x + dx - q) - shape.value(x - dx - q)) / (2.0 * dx);
            // central-difference error is at most |V'''| dx²/6 = (2/3) U0 k0³ dx²
            assert!((h[i] + grad).abs() <= 0.67 * p.depth * p.wavenumber.powi(3) * dx * dx);
        }
        let mut a = vec![0.0; g.len()];
        NoiseCoupling::new(NoiseKind::Amplitude, &p).fill(&table, q, &mut a);
        for i in (0..2048).step_by(113) {
            assert_relative_eq!(a[i], shape.value(g.x(i) - q), epsilon = 1e-10);
        }
    }

    #[test]
    fn approximations_match_the_harmonic_state() {
        let p = params();
        let sim = Simulator::with_shape(p, Numerics::default(), TrapShape::lattice(&p), 0.0).unwrap();
        // harmonic ground state substituted into the exact variance
        let gauss = Wavefunction::from_fn(*sim.grid(), |x| {
            Complex64::new(crate::modes::hermite_eigenfunction(0, x, 1.0), 0.0)
        });
        for kind in NoiseKind::ALL {
            let c = coupling_variance(&sim, kind, &gauss, 0.0).unwrap();
            assert_relative_eq!(c, adiabatic_constant_approx(kind, &p), max_relative = 1e-10);
        }
        let ratio = adiabatic_constant_approx(NoiseKind::Position, &p) / adiabatic_constant_approx(NoiseKind::Amplitude, &p);
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn constant_coupling_cancels_for_identical_states() {
        let p = params();
        let g = Grid::for_transport(0.0, p.distance, 12.0, 1024).unwrap();
        let mut psi = Wavefunction::from_fn(g, |x| Complex64::from_polar((-(x - 1.0).powi(2)).exp(), 0.3 * x));
        psi.normalize();
        let h = vec![2.5; g.len()];
        assert!(noise_integrand(&h, &psi, &psi).unwrap().abs() < 1e-12);
        let h: Vec<f64> = (0..g.len()).map(|i| g.x(i).sin()).collect();
        let v = noise_integrand(&h, &psi, &psi).unwrap();
        assert!(v > 0.0);
        let mut rotated = psi.clone();
        rotated.amplitudes_mut().iter_mut().for_each(|a| *a *= Complex64::from_polar(1.0, 1.1));
        assert_relative_eq!(noise_integrand(&h, &rotated, &psi).unwrap(), v, max_relative = 1e-12);
        assert!(noise_error_bound(0.85, 0.3, 0.9) == 0.0);
    }
}
