use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Polynomial in the local variable s = (t - origin) / scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
    origin: f64,
    scale: f64,
}

/// One interpolation constraint: the `order`-th derivative (with respect to
/// t) at `t` equals `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint {
    pub t: f64,
    pub order: usize,
    pub value: f64,
}

impl Constraint {
    pub fn new(t: f64, order: usize, value: f64) -> Self {
        Self { t, order, value }
    }
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>, origin: f64, scale: f64) -> Self {
        assert!(scale != 0.0);
        Self { coeffs, origin, scale }
    }

    pub fn zero(origin: f64, scale: f64) -> Self {
        Self::new(vec![0.0], origin, scale)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }

    /// `order`-th derivative with respect to t, Horner form.
    pub fn derivative(&self, order: usize, t: f64) -> f64 {
        let n = self.coeffs.len();
        if order >= n {
            return 0.0;
        }
        let s = (t - self.origin) / self.scale;
        let mut acc = 0.0;
        for j in (order..n).rev() {
            acc = acc * s + self.coeffs[j] * falling(j, order);
        }
        acc / self.scale.powi(order as i32)
    }

    /// `self + factor * other`; both must share origin and scale.
    pub fn add_scaled(&mut self, other: &Polynomial, factor: f64) {
        assert!(self.origin == other.origin && self.scale == other.scale);
        if other.coeffs.len() > self.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), 0.0);
        }
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += factor * o;
        }
    }

    /// Solves for the unique polynomial of degree `constraints.len() - 1`
    /// satisfying the constraints. Returns the polynomial and the 2-norm
    /// condition number of the collocation matrix.
    pub fn interpolate(constraints: &[Constraint], origin: f64, scale: f64) -> Result<(Self, f64)> {
        let m = collocation_matrix(constraints, origin, scale);
        let rhs = DVector::from_iterator(
            constraints.len(),
            constraints.iter().map(|c| c.value * scale.powi(c.order as i32)),
        );
        let condition = condition_number(&m);
        if !condition.is_finite() || condition > 1e14 {
            return Err(Error::IllConditioned { condition });
        }
        let sol = m.lu().solve(&rhs).ok_or(Error::IllConditioned { condition })?;
        Ok((Self::new(sol.iter().copied().collect(), origin, scale), condition))
    }
}

/// j (j-1) ... (j-k+1)
fn falling(j: usize, k: usize) -> f64 {
    ((j + 1 - k)..=j).fold(1.0, |acc, x| acc * x as f64)
}

/// Rows are constraints expressed in the local variable (derivatives scaled
/// by scale^order).
pub(crate) fn collocation_matrix(constraints: &[Constraint], origin: f64, scale: f64) -> DMatrix<f64> {
    let n = constraints.len();
    DMatrix::from_fn(n, n, |row, j| {
        let c = constraints[row];
        if j < c.order {
            return 0.0;
        }
        let s = (c.t - origin) / scale;
        falling(j, c.order) * s.powi((j - c.order) as i32)
    })
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
