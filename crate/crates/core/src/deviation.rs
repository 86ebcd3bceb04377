//! How far the eSTA trajectory moves per unit systematic error: the
//! derivative ∂ε/∂δ, the L1 deviation C_Q and its upper bound.

use crate::control::invert_q0;
use crate::error::Result;
use crate::esta::{compute_amplitudes, compute_epsilon, project, Amplitudes, EstaInputs, DEGENERATE_THRESHOLD};
use crate::quadrature::adaptive_simpson;
use crate::robustness::{ErrorDerivative, ErrorKind, SystematicError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMethod {
    /// Central differences of the full eSTA design at δ = ±h.
    #[default]
    FiniteDifference,
    /// Closed form from G, K and their δ-derivatives on the same nodes.
    Analytic,
}

/// Default step of the finite-difference route.
pub const DEFAULT_DELTA_STEP: f64 = 1e-3;
/// Relative tolerance of the L1 integrals.
pub const L1_TOLERANCE: f64 = 1e-6;

/// ∂ε_j/∂δ from the amplitudes and their derivatives.
///
/// With g = Σ|G_n|², v_j = Σ Re(G_n* K_{n,j}) and ε = −g v/|v|²:
/// ∂ε_j = −(ġ v_j + g v̇_j)/|v|² + 2 g v_j (v·v̇)/|v|⁴,
/// ġ = 2 Σ Re(G_n* Ġ_n), v̇_j = Σ Re(Ġ_n* K_{n,j} + G_n* K̇_{n,j}).
/// Returns `None` for a degenerate gradient.
pub fn epsilon_derivative_from(amps: &Amplitudes, rates: &Amplitudes) -> Option<Vec<f64>> {
    let v = amps.projected_gradient();
    let v2: f64 = v.iter().map(|x| x * x).sum();
    if !(v2 >= DEGENERATE_THRESHOLD) {
        return None;
    }
    let g = amps.g_norm_sqr();
    let g_dot: f64 = amps.gn.iter().zip(&rates.gn).map(|(a, b)| 2.0 * (a.conj() * b).re).sum();
    let mut v_dot = vec![0.0; v.len()];
    for n in 0..amps.gn.len() {
        for (j, vd) in v_dot.iter_mut().enumerate() {
            *vd += (rates.gn[n].conj() * amps.kn[n][j]).re + (amps.gn[n].conj() * rates.kn[n][j]).re;
        }
    }
    let v_vdot: f64 = v.iter().zip(&v_dot).map(|(a, b)| a * b).sum();
    Some(
        v.iter()
            .zip(&v_dot)
            .map(|(&vj, &vdj)| -(g_dot * vj + g * vdj) / v2 + 2.0 * g * vj * v_vdot / (v2 * v2))
            .collect(),
    )
}

/// ∂Ġ_n and ∂K̇_{n,l} for a δ-derivative of the lattice potential.
pub fn amplitude_rates(inputs: &EstaInputs, derivative: &ErrorDerivative) -> Amplitudes {
    project(
        inputs,
        inputs.time_quadrature.points_per_panel,
        |_, y| derivative.potential(y),
        |_, y| derivative.slope(y),
    )
}

/// The design of `inputs` redone for a lattice carrying `error`: q_0 is
/// re-inverted with the perturbed trap frequency and the harmonic
/// reference follows it.
pub fn perturbed_inputs(inputs: &EstaInputs, error: &SystematicError) -> Result<EstaInputs> {
    let params = error.params(&inputs.params);
    let q0 = invert_q0(inputs.auxiliary(), params.omega0).with_kind(inputs.q0.kind());
    let mut out = EstaInputs::new(q0, inputs.basis.clone(), params)?.with_modes(inputs.n_modes)?;
    out.time_quadrature = inputs.time_quadrature;
    Ok(out)
}

/// ∂ε/∂δ at δ = 0. The analytic route varies only the lattice term inside
/// G and K; for the correlated error, whose trap frequency is fixed, this
/// is the whole δ dependence.
pub fn epsilon_delta_derivative(inputs: &EstaInputs, kind: ErrorKind, method: DerivativeMethod) -> Result<Vec<f64>> {
    match method {
        DerivativeMethod::Analytic => {
            let amps = compute_amplitudes(inputs);
            let rates = amplitude_rates(inputs, &ErrorDerivative::new(kind, &inputs.params));
            Ok(epsilon_derivative_from(&amps, &rates).unwrap_or_else(|| vec![0.0; inputs.basis.len()]))
        }
        DerivativeMethod::FiniteDifference => {
            let h = DEFAULT_DELTA_STEP;
            let plus = compute_epsilon(&perturbed_inputs(inputs, &SystematicError::new(kind, h)?)?)?;
            let minus = compute_epsilon(&perturbed_inputs(inputs, &SystematicError::new(kind, -h)?)?)?;
            if plus.degenerate || minus.degenerate {
                return Ok(vec![0.0; inputs.basis.len()]);
            }
            Ok(plus.values.iter().zip(&minus.values).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    /// ∫ |∂Q/∂δ| dt
    pub c_q: f64,
    /// ‖∂q_0/∂δ‖₁ + max_j ‖P_j‖₁ Σ_j |∂ε_j/∂δ|
    pub upper_bound: f64,
    pub d_epsilon_d_delta: Vec<f64>,
    /// ‖∂q_0/∂δ‖₁
    pub sta_term_norm: f64,
}

/// C_Q and its bound from a given ∂ε/∂δ.
pub fn deviation_from(inputs: &EstaInputs, kind: ErrorKind, d_eps: Vec<f64>) -> DeviationReport {
    let omega2 = inputs.params.omega0.powi(2);
    let rate = ErrorDerivative::new(kind, &inputs.params).inverse_omega_sq_rate();
    let qc = inputs.auxiliary();
    let tf = inputs.q0.t_f();
    let sta = |t: f64| rate * qc.derivative2(t) / omega2;
    let correction = inputs.basis.combine(&d_eps);
    let c_q = l1(|t| sta(t) + correction.value(t), tf);
    let sta_term_norm = if rate == 0.0 { 0.0 } else { l1(sta, tf) };
    let max_p = inputs.basis.l1_norms(L1_TOLERANCE).into_iter().fold(0.0, f64::max);
    let upper_bound = sta_term_norm + max_p * d_eps.iter().map(|e| e.abs()).sum::<f64>();
    DeviationReport { c_q, upper_bound, d_epsilon_d_delta: d_eps, sta_term_norm }
}

fn l1(f: impl Fn(f64) -> f64, tf: f64) -> f64 {
    adaptive_simpson(&|t| f(t).abs(), 0.0, tf, L1_TOLERANCE)
}

pub fn control_deviation(inputs: &EstaInputs, kind: ErrorKind, method: DerivativeMethod) -> Result<DeviationReport> {
    let d_eps = epsilon_delta_derivative(inputs, kind, method)?;
    Ok(deviation_from(inputs, kind, d_eps))
}

pub fn deviation_upper_bound(inputs: &EstaInputs, kind: ErrorKind, method: DerivativeMethod) -> Result<f64> {
    Ok(control_deviation(inputs, kind, method)?.upper_bound)
}
