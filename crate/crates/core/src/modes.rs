//! Harmonic transport modes χ_n(x,t) = e^{iθ_n} e^{i m q̇_c x/ħ} φ_n(x - q_c)
//! and their matrix elements.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::control::ControlFunction;
use crate::quadrature::{adaptive_simpson, gauss_hermite};

pub const DEFAULT_QUADRATURE_ORDER: usize = 80;

/// Normalized harmonic eigenfunction φ_n(x) with oscillator length `length`.
///
/// The recurrence runs on the Gaussian-weighted functions directly, so the
/// polynomial growth and the Gaussian decay never meet as separate factors.
pub fn hermite_eigenfunction(n: usize, x: f64, length: f64) -> f64 {
    let xi = x / length;
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    for j in 1..=n {
        let jf = j as f64;
        let next = xi * (2.0 / jf).sqrt() * cur - ((jf - 1.0) / jf).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur / length.sqrt()
}

/// Orthonormal Hermite polynomials h_0..=h_max at x, with h_0 = π^{-1/4}.
fn hermite_polys(max_n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_n + 1);
    out.push(PI.powf(-0.25));
    if max_n >= 1 {
        out.push(x * 2f64.sqrt() * out[0]);
    }
    for j in 2..=max_n {
        let jf = j as f64;
        out.push(x * (2.0 / jf).sqrt() * out[j - 1] - ((jf - 1.0) / jf).sqrt() * out[j - 2]);
    }
    out
}

#[derive(Debug)]
struct HermiteTable {
    nodes: Vec<f64>,
    /// weights[n][i] = w_i h_n(ξ_i) h_0(ξ_i)
    weights: Vec<Vec<f64>>,
}

impl HermiteTable {
    fn new(max_n: usize, order: usize) -> Self {
        let rule = gauss_hermite(order);
        let mut weights = vec![Vec::with_capacity(order); max_n + 1];
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let h = hermite_polys(max_n, x);
            for n in 0..=max_n {
                weights[n].push(w * h[n] * h[0]);
            }
        }
        Self { nodes: rule.nodes, weights }
    }
}

/// The harmonic transport modes following an auxiliary trajectory q_c.
#[derive(Debug, Clone)]
pub struct TransportModeSet {
    omega0: f64,
    hbar: f64,
    mass: f64,
    qc: ControlFunction,
    max_n: usize,
    quadrature_order: usize,
    table: Arc<HermiteTable>,
}

impl TransportModeSet {
    pub fn new(qc: ControlFunction, omega0: f64, hbar: f64, mass: f64, max_n: usize, quadrature_order: usize) -> Self {
        let table = Arc::new(HermiteTable::new(max_n, quadrature_order));
        Self { omega0, hbar, mass, qc, max_n, quadrature_order, table }
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn auxiliary(&self) -> &ControlFunction {
        &self.qc
    }

    pub fn oscillator_length(&self) -> f64 {
        (self.hbar / (self.mass * self.omega0)).sqrt()
    }

    /// Gauss–Hermite abscissae relative to the trap centre, in length units.
    pub fn offsets(&self) -> impl Iterator<Item = f64> + '_ {
        let len = self.oscillator_length();
        self.table.nodes.iter().map(move |x| x * len)
    }

    /// ∫ φ_n(u) f(u + q_c(t)) φ_0(u) du, without the phase factor.
    pub fn real_overlap(&self, n: usize, f: impl Fn(f64) -> f64, t: f64) -> f64 {
        assert!(n <= self.max_n);
        let center = self.qc.value(t);
        let len = self.oscillator_length();
        self.table.nodes.iter().zip(&self.table.weights[n]).map(|(&x, &w)| w * f(len * x + center)).sum()
    }

    /// ⟨χ_n(t)| f(x) |χ_0(t)⟩. The momentum boosts cancel and the
    /// Lewis–Riesenfeld phases leave e^{i n ω0 t}.
    pub fn matrix_element(&self, n: usize, f: impl Fn(f64) -> f64, t: f64) -> Complex64 {
        Complex64::from_polar(1.0, n as f64 * self.omega0 * t) * self.real_overlap(n, f, t)
    }

    /// Overlaps for all n in 1..=max_n from a single pass over the
    /// quadrature nodes.
    pub fn overlaps(&self, f: impl Fn(f64) -> f64, t: f64) -> Vec<f64> {
        let center = self.qc.value(t);
        let len = self.oscillator_length();
        let values: Vec<f64> = self.table.nodes.iter().map(|&x| f(len * x + center)).collect();
        (1..=self.max_n)
            .map(|n| self.table.weights[n].iter().zip(&values).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// Recomputes `real_overlap` with a 50% larger rule and reports whether
    /// the two agree to `tol`.
    pub fn is_converged(&self, n: usize, f: impl Fn(f64) -> f64, t: f64, tol: f64) -> bool {
        let finer = Self::new(self.qc.clone(), self.omega0, self.hbar, self.mass, n, self.quadrature_order * 3 / 2);
        (self.real_overlap(n, &f, t) - finer.real_overlap(n, &f, t)).abs() <= tol
    }

    /// Lewis–Riesenfeld phase θ_n(t) = -(n+½)ω0 t + (1/ħ)∫_0^t m q̇_c²/2.
    pub fn lr_phase(&self, n: usize, t: f64) -> f64 {
        let dynamic = -(n as f64 + 0.5) * self.omega0 * t;
        if t <= 0.0 {
            return dynamic;
        }
        let kinetic = adaptive_simpson(&|s| 0.5 * self.mass * self.qc.derivative1(s).powi(2), 0.0, t, 1e-12);
        dynamic + kinetic / self.hbar
    }

    /// χ_n(x, t) evaluated pointwise, phases included.
    pub fn mode(&self, n: usize, x: f64, t: f64) -> Complex64 {
        self.mode_with_phase(n, x, t, self.lr_phase(n, t))
    }

    /// χ_n(x, t) with a precomputed `lr_phase(n, t)`, for sampling many x.
    pub fn mode_with_phase(&self, n: usize, x: f64, t: f64, phase: f64) -> Complex64 {
        let boost = self.mass * self.qc.derivative1(t) * x / self.hbar;
        let amp = hermite_eigenfunction(n, x - self.qc.value(t), self.oscillator_length());
        Complex64::from_polar(amp, phase + boost)
    }
}
