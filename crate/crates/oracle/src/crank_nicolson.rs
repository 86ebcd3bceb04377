//! Crank–Nicolson stepping (1 + iaH)ψ' = (1 − iaH)ψ, a = dt/2ħ, with a
//! spectral kinetic term. The implicit system is solved by fixed-point
//! iteration preconditioned with (1 + iaT)⁻¹, which is diagonal in k.

use std::sync::Arc;

use esta_core::control::ControlFunction;
use esta_core::dynamics::{fidelity, Grid, Simulator, Wavefunction};
use esta_core::potential::TrapShape;
use esta_core::{Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const MAX_ITERATIONS: usize = 200;

pub struct CrankNicolson {
    grid: Grid,
    hbar: f64,
    kinetic: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Stop when the max-norm update falls below this fraction of max |ψ|.
    pub tolerance: f64,
}

impl CrankNicolson {
    pub fn new(grid: Grid, hbar: f64, mass: f64) -> Self {
        let mut planner = FftPlanner::new();
        let kinetic = grid.wavenumbers().iter().map(|k| hbar * hbar * k * k / (2.0 * mass)).collect();
        Self {
            forward: planner.plan_fft_forward(grid.len()),
            inverse: planner.plan_fft_inverse(grid.len()),
            grid,
            hbar,
            kinetic,
            tolerance: 1e-13,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Applies f(T) in Fourier space.
    fn kinetic_map(&self, data: &mut [Complex64], f: impl Fn(f64) -> Complex64) {
        let n = data.len() as f64;
        self.forward.process(data);
        for (a, &t) in data.iter_mut().zip(&self.kinetic) {
            *a *= f(t) / n;
        }
        self.inverse.process(data);
    }

    /// One step with the potential `v` held fixed; returns the number of
    /// fixed-point iterations used.
    pub fn step(&self, psi: &mut [Complex64], v: &[f64], dt: f64) -> Result<usize> {
        let i_a = Complex64::new(0.0, 0.5 * dt / self.hbar);
        let mut rhs = psi.to_vec();
        self.kinetic_map(&mut rhs, |t| 1.0 - i_a * t);
        for ((r, p), &vi) in rhs.iter_mut().zip(psi.iter()).zip(v) {
            *r -= i_a * vi * p;
        }
        let scale = psi.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let mut next = psi.to_vec();
        let mut work = vec![Complex64::new(0.0, 0.0); psi.len()];
        for iter in 1..=MAX_ITERATIONS {
            for ((w, r), (x, &vi)) in work.iter_mut().zip(&rhs).zip(next.iter().zip(v)) {
                *w = r - i_a * vi * x;
            }
            self.kinetic_map(&mut work, |t| 1.0 / (1.0 + i_a * t));
            let change = work.iter().zip(&next).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            next.copy_from_slice(&work);
            if change <= self.tolerance * scale {
                psi.copy_from_slice(&next);
                return Ok(iter);
            }
        }
        Err(Error::NonConvergence { iterations: MAX_ITERATIONS })
    }

    /// Propagates over [0, t_f] in `n_steps` steps with V(x − Q(t)) sampled
    /// at each step midpoint.
    pub fn propagate(&self, psi: &mut Wavefunction, shape: TrapShape, trajectory: &ControlFunction, n_steps: usize) -> Result<()> {
        let dt = trajectory.t_f() / n_steps as f64;
        let x = self.grid.positions();
        let mut v = vec![0.0; x.len()];
        for k in 0..n_steps {
            let q = trajectory.value((k as f64 + 0.5) * dt);
            for (vi, xi) in v.iter_mut().zip(&x) {
                *vi = shape.value(xi - q);
            }
            self.step(psi.amplitudes_mut(), &v, dt)?;
        }
        psi.time = trajectory.t_f();
        Ok(())
    }
}

/// Transport fidelity by Crank–Nicolson from the simulator's reference
/// states, Richardson-extrapolated from `n_steps` and `2 n_steps`. The
/// scheme is time-symmetric, so its error is even in dt.
pub fn crank_nicolson_fidelity(sim: &Simulator, trajectory: &ControlFunction, n_steps: usize) -> Result<f64> {
    let p = sim.params();
    let cn = CrankNicolson::new(*sim.grid(), p.hbar, p.mass);
    let run = |n: usize| -> Result<f64> {
        let mut psi = sim.initial_state().clone();
        cn.propagate(&mut psi, sim.shape(), trajectory, n)?;
        fidelity(&psi, sim.target_state())
    };
    let coarse = run(n_steps)?;
    let fine = run(2 * n_steps)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_gaussian_matches_closed_form() {
        let (hbar, mass) = (1.0, 0.5);
        let g = Grid::new(-40.0, 40.0, 1024).unwrap();
        let cn = CrankNicolson::new(g, hbar, mass);
        let packet = |x: f64, t: f64| {
            let a = Complex64::new(1.0, hbar * t / mass);
            1.0 / a.sqrt() * (-(x * x) / (2.0 * a)).exp() * std::f64::consts::PI.powf(-0.25)
        };
        let mut psi = Wavefunction::from_fn(g, |x| packet(x, 0.0));
        let traj = ControlFunction::constant(2.0, 0.0);
        cn.propagate(&mut psi, TrapShape::Harmonic { curvature: 0.0 }, &traj, 400).unwrap();
        let exact = Wavefunction::from_fn(g, |x| packet(x, 2.0));
        assert!(1.0 - fidelity(&psi, &exact).unwrap() < 1e-6);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
