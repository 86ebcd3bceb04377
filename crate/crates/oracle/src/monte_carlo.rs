//! Stochastic estimate of ∂F/∂(η²) for H = H_0 + η ξ(t) H_1 with white
//! noise ξ. Each step multiplies by exp(−iηΔW H_1/ħ), ΔW ~ N(0, dt),
//! merged into the Strang potential kicks. Paths come in antithetic pairs
//! (W, −W), which cancels the odd orders in η exactly, and all η values
//! share the same path. Pair p draws from ChaCha stream p of `seed`.

use esta_core::control::ControlFunction;
use esta_core::dynamics::{fidelity, SampledShape, Simulator};
use esta_core::noise::{NoiseCoupling, NoiseKind};
use esta_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    /// Number of noise paths; rounded up to an even count.
    pub realizations: usize,
    /// Noise strengths η² > 0 at which the mean fidelity is sampled.
    pub eta_sq: Vec<f64>,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { realizations: 200, eta_sq: vec![1e-4, 2e-4], seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeEstimate {
    /// Least-squares slope of F̄ − F(0) against η², through the origin.
    pub slope: f64,
    pub standard_error: f64,
    pub fidelity_at_zero: f64,
    /// Mean fidelity at each configured η².
    pub mean_fidelity: Vec<f64>,
    pub realizations: usize,
}

/// Mean-fidelity slope for `trajectory` under noise of `kind`, on the
/// simulator's grid and time step.
pub fn noise_slope(sim: &Simulator, trajectory: &ControlFunction, kind: NoiseKind, config: &MonteCarloConfig) -> Result<SlopeEstimate> {
    if config.eta_sq.is_empty() || config.eta_sq.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter { name: "eta_sq", value: config.eta_sq.first().copied().unwrap_or(f64::NAN) });
    }
    let pairs = config.realizations.div_ceil(2).max(2);
    let p = *sim.params();
    let tf = trajectory.t_f();
    let n = sim.numerics().steps(tf);
    let dt = tf / n as f64;
    let grid = *sim.grid();
    let x = grid.positions();
    let shape = SampledShape::new(&grid, sim.shape());
    let coupling = NoiseCoupling::new(kind, &p);
    let etas: Vec<f64> = config.eta_sq.iter().map(|e| e.sqrt()).collect();
    let mut stepper = sim.operator().stepper(dt);

    let f0 = {
        let mut psi = sim.initial_state().clone();
        let mut v = vec![0.0; x.len()];
        for k in 0..n {
            shape.fill(trajectory.value((k as f64 + 0.5) * dt), &mut v);
            stepper.set_potential(&v);
            stepper.apply(psi.amplitudes_mut());
        }
        fidelity(&psi, sim.target_state())?
    };

    let xx: f64 = config.eta_sq.iter().map(|e| e * e).sum();
    let mut sums = vec![0.0; etas.len()];
    let mut slopes = Vec::with_capacity(pairs);
    let mut v = vec![0.0; x.len()];
    let mut h1 = vec![0.0; x.len()];
    let mut kicked = vec![0.0; x.len()];
    for pair in 0..pairs {
        // one ChaCha stream per pair: reproducible and order-independent
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(pair as u64);
        let noise: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                dt.sqrt() * z
            })
            .collect();
        // states ordered (η_i, +W), (η_i, −W)
        let mut states: Vec<_> = (0..2 * etas.len()).map(|_| sim.initial_state().clone()).collect();
        for (k, dw) in noise.iter().enumerate() {
            let q = trajectory.value((k as f64 + 0.5) * dt);
            shape.fill(q, &mut v);
            for (h, xi) in h1.iter_mut().zip(&x) {
                *h = coupling.value(xi - q);
            }
            for (s, psi) in states.iter_mut().enumerate() {
                let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
                // the kick integrates V dt + η ΔW H_1 over the step
                let c = sign * etas[s / 2] * dw / dt;
                for ((o, vi), hi) in kicked.iter_mut().zip(&v).zip(&h1) {
                    *o = vi + c * hi;
                }
                stepper.set_potential(&kicked);
                stepper.apply(psi.amplitudes_mut());
            }
        }
        let mut xy = 0.0;
        for (i, &e) in config.eta_sq.iter().enumerate() {
            let f = 0.5 * (fidelity(&states[2 * i], sim.target_state())? + fidelity(&states[2 * i + 1], sim.target_state())?);
            sums[i] += f;
            xy += e * (f - f0);
        }
        slopes.push(xy / xx);
    }
    let m = slopes.len() as f64;
    let slope = slopes.iter().sum::<f64>() / m;
    let var = slopes.iter().map(|s| (s - slope).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(SlopeEstimate {
        slope,
        standard_error: (var / m).sqrt(),
        fidelity_at_zero: f0,
        mean_fidelity: sums.iter().map(|s| s / m).collect(),
        realizations: 2 * pairs,
    })
}
