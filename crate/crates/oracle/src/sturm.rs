//! Lowest eigenvalue of a symmetric tridiagonal matrix by Sturm-sequence
//! bisection, applied to the second-order finite-difference Hamiltonian.

use esta_core::potential::TrapShape;

/// Number of eigenvalues below `lambda` of the matrix with diagonal `d`
/// and off-diagonal `e` (length n − 1).
pub fn count_below(d: &[f64], e: &[f64], lambda: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] / q };
        q = d[i] - lambda - off;
        if q == 0.0 {
            q = -f64::EPSILON * (d[i].abs() + lambda.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue by bisection on the Gershgorin interval.
pub fn lowest_eigenvalue(d: &[f64], e: &[f64], rel_tol: f64) -> f64 {
    let radius = |i: usize| {
        let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
        let right = if i < e.len() { e[i].abs() } else { 0.0 };
        left + right
    };
    let mut lo = (0..d.len()).map(|i| d[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..d.len()).map(|i| d[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    while hi - lo > rel_tol * (lo.abs() + hi.abs()).max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (lo + hi);
        if count_below(d, e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ground energy of −ħ²/2m ∂² + V on (a, b) with Dirichlet walls,
/// `n` interior points, Richardson-combined with 2n + 1 points (which
/// halves the spacing).
pub fn ground_energy_fd(shape: TrapShape, hbar: f64, mass: f64, a: f64, b: f64, n: usize) -> f64 {
    let solve = |n: usize| {
        let h = (b - a) / (n + 1) as f64;
        let c = hbar * hbar / (2.0 * mass * h * h);
        let d: Vec<f64> = (1..=n).map(|i| 2.0 * c + shape.value(a + i as f64 * h)).collect();
        let e = vec![-c; n - 1];
        lowest_eigenvalue(&d, &e, 1e-15)
    };
    let coarse = solve(n);
    let fine = solve(2 * n + 1);
    (4.0 * fine - coarse) / 3.0
}
