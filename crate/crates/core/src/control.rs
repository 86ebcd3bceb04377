//! STA auxiliary functions, their inversion to trap trajectories, smoothing,
//! and the cardinal-polynomial correction basis of the eSTA trajectories.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::poly::{Constraint, Polynomial};
use crate::quadrature::adaptive_simpson;

/// Highest derivative order held fixed at the transport endpoints.
const ENDPOINT_ORDER: usize = 4;
/// Highest derivative matched at interior window edges.
const EDGE_ORDER: usize = 2;

/// The three auxiliary-function families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// Degree-9 polynomial fixed by ten boundary conditions.
    Polynomial,
    /// Quasi-optimal solution suppressing the quartic anharmonicity.
    QuasiOptimal,
    /// Bang-bang classical acceleration profile.
    QuasiOptimalClassical,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Polynomial, Family::QuasiOptimal, Family::QuasiOptimalClassical];

    /// 1-based index used in trajectory labels.
    pub fn index(self) -> usize {
        match self {
            Family::Polynomial => 1,
            Family::QuasiOptimal => 2,
            Family::QuasiOptimalClassical => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.index() == index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlKind {
    /// Auxiliary (classical particle) trajectory q_c.
    Auxiliary(Family),
    /// STA trap trajectory q_0.
    Trap(Family),
    /// eSTA-corrected trap trajectory Q.
    Esta(Family),
    Custom,
}

impl fmt::Display for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlKind::Auxiliary(fam) => write!(f, "qc{}", fam.index()),
            ControlKind::Trap(fam) => write!(f, "q0{}", fam.index()),
            ControlKind::Esta(fam) => write!(f, "Q{}", fam.index()),
            ControlKind::Custom => write!(f, "custom"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Poly(Polynomial),
    /// f_c(t) = (3d/8)(1 - 2t/t_f)^{7/3} + (7d/4) t/t_f - 3d/8
    Rising { d: f64, tf: f64 },
    /// -f_c(t_f - t) + d
    Falling { d: f64, tf: f64 },
}

impl Shape {
    fn derivative(&self, order: usize, t: f64) -> f64 {
        match self {
            Shape::Poly(p) => p.derivative(order, t),
            Shape::Rising { d, tf } => quasi_optimal_fc(*d, *tf, order, t),
            Shape::Falling { d, tf } => {
                let sign = if order % 2 == 0 { -1.0 } else { 1.0 };
                let offset = if order == 0 { *d } else { 0.0 };
                sign * quasi_optimal_fc(*d, *tf, order, tf - t) + offset
            }
        }
    }
}

/// Derivatives of f_c. The fractional power uses the real cube root so the
/// expression stays defined for a negative base.
fn quasi_optimal_fc(d: f64, tf: f64, order: usize, t: f64) -> f64 {
    let base = 1.0 - 2.0 * t / tf;
    let root = base.cbrt();
    // d^k/dt^k of (3d/8) base^{7/3}
    let mut coef = 3.0 * d / 8.0;
    for i in 0..order {
        coef *= (7.0 / 3.0 - i as f64) * (-2.0 / tf);
    }
    let power = root.powi(7 - 3 * order as i32);
    let lead = if coef == 0.0 { 0.0 } else { coef * power };
    match order {
        0 => lead + 7.0 * d / 4.0 * t / tf - 3.0 * d / 8.0,
        1 => lead + 7.0 * d / (4.0 * tf),
        _ => lead,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    start: f64,
    end: f64,
    shape: Shape,
}

#[derive(Debug, Clone)]
enum Repr {
    Piecewise { segments: Vec<Segment>, before: f64, after: f64 },
    Inverted { aux: ControlFunction, omega0: f64 },
    Corrected { base: ControlFunction, correction: Polynomial },
}

/// A trajectory on [0, t_f], constant outside it.
#[derive(Debug, Clone)]
pub struct ControlFunction {
    tf: f64,
    kind: ControlKind,
    repr: Arc<Repr>,
}

impl ControlFunction {
    fn piecewise(tf: f64, kind: ControlKind, segments: Vec<Segment>, before: f64, after: f64) -> Self {
        Self { tf, kind, repr: Arc::new(Repr::Piecewise { segments, before, after }) }
    }

    /// A single polynomial on [0, t_f].
    pub fn from_polynomial(tf: f64, kind: ControlKind, poly: Polynomial) -> Self {
        let before = poly.value(0.0);
        let after = poly.value(tf);
        Self::piecewise(tf, kind, vec![Segment { start: 0.0, end: tf, shape: Shape::Poly(poly) }], before, after)
    }

    pub fn constant(tf: f64, value: f64) -> Self {
        Self::from_polynomial(tf, ControlKind::Custom, Polynomial::new(vec![value], 0.0, tf))
    }

    pub fn t_f(&self) -> f64 {
        self.tf
    }

    pub fn kind(&self) -> ControlKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: ControlKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }

    pub fn derivative1(&self, t: f64) -> f64 {
        self.derivative(1, t)
    }

    pub fn derivative2(&self, t: f64) -> f64 {
        self.derivative(2, t)
    }

    /// `order`-th time derivative. At a breakpoint the segment to the right
    /// is used (the left one at t_f).
    pub fn derivative(&self, order: usize, t: f64) -> f64 {
        match &*self.repr {
            Repr::Piecewise { segments, before, after } => {
                if t < 0.0 {
                    return if order == 0 { *before } else { 0.0 };
                }
                if t > self.tf {
                    return if order == 0 { *after } else { 0.0 };
                }
                let idx = segments.partition_point(|s| s.end <= t).min(segments.len() - 1);
                segments[idx].shape.derivative(order, t)
            }
            Repr::Inverted { aux, omega0 } => {
                aux.derivative(order, t) + aux.derivative(order + 2, t) / (omega0 * omega0)
            }
            Repr::Corrected { base, correction } => {
                let b = base.derivative(order, t);
                if (0.0..=self.tf).contains(&t) {
                    b + correction.derivative(order, t)
                } else {
                    b
                }
            }
        }
    }

    /// One-sided limit of a derivative from the left of `t`.
    pub fn derivative_from_left(&self, order: usize, t: f64) -> f64 {
        match &*self.repr {
            Repr::Piecewise { segments, .. } if t > 0.0 && t <= self.tf => {
                let idx = segments.partition_point(|s| s.end < t).min(segments.len() - 1);
                segments[idx].shape.derivative(order, t)
            }
            Repr::Piecewise { .. } => self.derivative(order, t),
            Repr::Inverted { aux, omega0 } => {
                aux.derivative_from_left(order, t) + aux.derivative_from_left(order + 2, t) / (omega0 * omega0)
            }
            Repr::Corrected { base, correction } => {
                base.derivative_from_left(order, t) + correction.derivative(order, t)
            }
        }
    }

    /// Segment boundaries in [0, t_f]; integrands built from this function
    /// are smooth between consecutive entries.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &*self.repr {
            Repr::Piecewise { segments, .. } => {
                let mut out = vec![0.0];
                out.extend(segments.iter().map(|s| s.end));
                out
            }
            Repr::Inverted { aux, .. } => aux.breakpoints(),
            Repr::Corrected { base, .. } => base.breakpoints(),
        }
    }

    /// The auxiliary function a trap trajectory was inverted from, looking
    /// through eSTA corrections.
    pub fn auxiliary(&self) -> Option<&ControlFunction> {
        match &*self.repr {
            Repr::Inverted { aux, .. } => Some(aux),
            Repr::Corrected { base, .. } => base.auxiliary(),
            Repr::Piecewise { .. } => None,
        }
    }

    /// This function plus a constant offset (used to shift a whole problem).
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            tf: self.tf,
            kind: self.kind,
            repr: Arc::new(Repr::Corrected {
                base: self.clone(),
                correction: Polynomial::new(vec![offset], 0.0, self.tf),
            }),
        }
    }

    /// Replaces the function inside each smoothing window by a polynomial.
    ///
    /// Interior windows match value, first and second derivative of the
    /// retained branches at both edges (degree 5). A window reaching a
    /// transport endpoint is clipped to [0, t_f] and instead pins the value and
    /// the first four derivatives to rest at that endpoint (degree 7), so the
    /// smoothed function keeps the full boundary-condition set.
    pub fn smooth(&self, spec: &SmoothingSpec) -> Result<ControlFunction> {
        let Repr::Piecewise { segments, before, after } = &*self.repr else {
            return Err(Error::InvalidGrid("only piecewise auxiliary functions can be smoothed".into()));
        };
        let windows = spec.windows(self.tf)?;
        let mut polys = Vec::with_capacity(windows.len());
        for w in &windows {
            let mut constraints = Vec::new();
            if w.touches_start {
                constraints.push(Constraint::new(0.0, 0, *before));
                constraints.extend((1..=ENDPOINT_ORDER).map(|k| Constraint::new(0.0, k, 0.0)));
            } else {
                constraints
                    .extend((0..=EDGE_ORDER).map(|k| Constraint::new(w.start, k, self.derivative_from_left(k, w.start))));
            }
            if w.touches_end {
                constraints.push(Constraint::new(self.tf, 0, *after));
                constraints.extend((1..=ENDPOINT_ORDER).map(|k| Constraint::new(self.tf, k, 0.0)));
            } else {
                constraints.extend((0..=EDGE_ORDER).map(|k| Constraint::new(w.end, k, self.derivative(k, w.end))));
            }
            let (p, _) = Polynomial::interpolate(&constraints, w.start, w.end - w.start)?;
            polys.push(p);
        }

        let mut cuts: Vec<f64> = vec![0.0, self.tf];
        cuts.extend(segments.iter().map(|s| s.end));
        cuts.extend(windows.iter().flat_map(|w| [w.start, w.end]));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut out: Vec<Segment> = Vec::new();
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let shape = match windows.iter().position(|w| w.start <= mid && mid <= w.end) {
                Some(i) => Shape::Poly(polys[i].clone()),
                None => {
                    let idx = segments.partition_point(|s| s.end <= mid).min(segments.len() - 1);
                    segments[idx].shape.clone()
                }
            };
            match out.last_mut() {
                Some(last) if last.shape == shape => last.end = b,
                _ => out.push(Segment { start: a, end: b, shape }),
            }
        }
        Ok(Self::piecewise(self.tf, self.kind, out, *before, *after))
    }

    /// Samples `n` evenly spaced points of [0, t_f] (both ends included).
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let t = self.tf * i as f64 / (n - 1) as f64;
                (t, self.value(t))
            })
            .collect()
    }
}

/// Smoothing windows of width `window_fraction * t_f` around given centres.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpec {
    pub window_fraction: f64,
    /// Window centres in units of t_f.
    pub window_centers: Vec<f64>,
}

impl SmoothingSpec {
    /// t_T = t_f/8 about 0, t_f/2 and t_f.
    pub fn standard() -> Self {
        Self { window_fraction: 1.0 / 8.0, window_centers: vec![0.0, 0.5, 1.0] }
    }

    fn windows(&self, tf: f64) -> Result<Vec<Window>> {
        if !(self.window_fraction > 0.0 && self.window_fraction < 1.0) {
            return Err(Error::InvalidParameter { name: "window_fraction", value: self.window_fraction });
        }
        let half = 0.5 * self.window_fraction * tf;
        let mut out: Vec<Window> = Vec::new();
        let mut centers = self.window_centers.clone();
        centers.sort_by(f64::total_cmp);
        for c in centers {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidParameter { name: "window_center", value: c });
            }
            let c = c * tf;
            let w = Window {
                center: c,
                start: (c - half).max(0.0),
                end: (c + half).min(tf),
                touches_start: c - half <= 0.0,
                touches_end: c + half >= tf,
            };
            if let Some(prev) = out.last() {
                if w.start < prev.end {
                    return Err(Error::OverlappingWindows { first: prev.center, second: w.center });
                }
            }
            out.push(w);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
struct Window {
    center: f64,
    start: f64,
    end: f64,
    touches_start: bool,
    touches_end: bool,
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value })
    }
}

/// Degree-9 polynomial q_c with q_c(0)=0, q_c(t_f)=d and vanishing first
/// to fourth derivatives at both ends.
pub fn polynomial_qc(d: f64, tf: f64) -> Result<ControlFunction> {
    check_positive("d", d)?;
    check_positive("t_f", tf)?;
    let mut cs = vec![Constraint::new(0.0, 0, 0.0), Constraint::new(tf, 0, d)];
    for k in 1..=ENDPOINT_ORDER {
        cs.push(Constraint::new(0.0, k, 0.0));
        cs.push(Constraint::new(tf, k, 0.0));
    }
    let (p, _) = Polynomial::interpolate(&cs, 0.0, tf)?;
    Ok(ControlFunction::from_polynomial(tf, ControlKind::Auxiliary(Family::Polynomial), p))
}

/// The quasi-optimal q_c built from f_c and its point reflection, before
/// smoothing.
pub fn quasi_optimal_qc_raw(d: f64, tf: f64) -> Result<ControlFunction> {
    check_positive("d", d)?;
    check_positive("t_f", tf)?;
    let segments = vec![
        Segment { start: 0.0, end: 0.5 * tf, shape: Shape::Rising { d, tf } },
        Segment { start: 0.5 * tf, end: tf, shape: Shape::Falling { d, tf } },
    ];
    Ok(ControlFunction::piecewise(tf, ControlKind::Auxiliary(Family::QuasiOptimal), segments, 0.0, d))
}

pub fn quasi_optimal_qc(d: f64, tf: f64, smoothing: &SmoothingSpec) -> Result<ControlFunction> {
    quasi_optimal_qc_raw(d, tf)?.smooth(smoothing)
}

/// Two-parabola q_c: constant acceleration 4d/t_f² then the same deceleration.
pub fn quasi_optimal_classical_qc(d: f64, tf: f64) -> Result<ControlFunction> {
    check_positive("d", d)?;
    check_positive("t_f", tf)?;
    let rising = Polynomial::new(vec![0.0, 0.0, 2.0 * d], 0.0, tf);
    // d[1 - 2(s-1)²] = -d + 4d s - 2d s²
    let falling = Polynomial::new(vec![-d, 4.0 * d, -2.0 * d], 0.0, tf);
    let segments = vec![
        Segment { start: 0.0, end: 0.5 * tf, shape: Shape::Poly(rising) },
        Segment { start: 0.5 * tf, end: tf, shape: Shape::Poly(falling) },
    ];
    Ok(ControlFunction::piecewise(tf, ControlKind::Auxiliary(Family::QuasiOptimalClassical), segments, 0.0, d))
}

/// q_0 = q_c + q̈_c/ω0², the trap trajectory that drives a classical
/// particle along q_c.
pub fn invert_q0(qc: &ControlFunction, omega0: f64) -> ControlFunction {
    let kind = match qc.kind() {
        ControlKind::Auxiliary(f) => ControlKind::Trap(f),
        other => other,
    };
    ControlFunction { tf: qc.tf, kind, repr: Arc::new(Repr::Inverted { aux: qc.clone(), omega0 }) }
}

/// Auxiliary function of a family as used for transport: the polynomial as
/// is, the other two smoothed with `smoothing`.
pub fn auxiliary(family: Family, d: f64, tf: f64, smoothing: &SmoothingSpec) -> Result<ControlFunction> {
    match family {
        Family::Polynomial => polynomial_qc(d, tf),
        Family::QuasiOptimal => quasi_optimal_qc(d, tf, smoothing),
        Family::QuasiOptimalClassical => quasi_optimal_classical_qc(d, tf)?.smooth(smoothing),
    }
}

/// Cardinal polynomials P_l spanning the eSTA correction.
#[derive(Debug, Clone)]
pub struct CorrectionBasis {
    tf: f64,
    nodes: Vec<f64>,
    polys: Vec<Polynomial>,
    condition: f64,
}

/// Builds the L cardinal polynomials of degree L+5 that vanish with two
/// derivatives at t=0 and t=t_f and interpolate δ_{lk} at the control points
/// t_k = k t_f/(L+1), k = 1..L.
pub fn build_basis(l: usize, tf: f64) -> Result<CorrectionBasis> {
    if l == 0 {
        return Err(Error::InvalidParameter { name: "L", value: 0.0 });
    }
    check_positive("t_f", tf)?;
    let nodes: Vec<f64> = (1..=l).map(|k| k as f64 * tf / (l + 1) as f64).collect();
    let mut polys = Vec::with_capacity(l);
    let mut condition: f64 = 0.0;
    for target in 0..l {
        let mut cs = Vec::with_capacity(l + 6);
        for k in 0..=EDGE_ORDER {
            cs.push(Constraint::new(0.0, k, 0.0));
            cs.push(Constraint::new(tf, k, 0.0));
        }
        cs.extend(nodes.iter().enumerate().map(|(k, &t)| Constraint::new(t, 0, if k == target { 1.0 } else { 0.0 })));
        let (p, c) = Polynomial::interpolate(&cs, 0.5 * tf, 0.5 * tf)?;
        condition = condition.max(c);
        polys.push(p);
    }
    if condition > 1e10 {
        return Err(Error::IllConditioned { condition });
    }
    Ok(CorrectionBasis { tf, nodes, polys, condition })
}

impl CorrectionBasis {
    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn t_f(&self) -> f64 {
        self.tf
    }

    /// Control-point times t_k.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn polynomials(&self) -> &[Polynomial] {
        &self.polys
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// P_l(t) for l in 0..L.
    pub fn value(&self, l: usize, t: f64) -> f64 {
        self.polys[l].value(t)
    }

    /// Σ_l weights[l] P_l as a single polynomial.
    pub fn combine(&self, weights: &[f64]) -> Polynomial {
        assert_eq!(weights.len(), self.len());
        let mut out = Polynomial::zero(0.5 * self.tf, 0.5 * self.tf);
        for (p, &w) in self.polys.iter().zip(weights) {
            out.add_scaled(p, w);
        }
        out
    }

    /// ∫_0^{t_f} |P_l(t)| dt for every l.
    pub fn l1_norms(&self, rel_tol: f64) -> Vec<f64> {
        self.polys.iter().map(|p| adaptive_simpson(&|t| p.value(t).abs(), 0.0, self.tf, rel_tol)).collect()
    }
}

/// Q(t) = q_0(t) + Σ_l ε_l P_l(t).
pub fn esta_control(q0: &ControlFunction, basis: &CorrectionBasis, epsilon: &[f64]) -> ControlFunction {
    assert_eq!(epsilon.len(), basis.len(), "epsilon must have one entry per basis polynomial");
    let kind = match q0.kind() {
        ControlKind::Trap(f) => ControlKind::Esta(f),
        other => other,
    };
    ControlFunction {
        tf: q0.tf,
        kind,
        repr: Arc::new(Repr::Corrected { base: q0.clone(), correction: basis.combine(epsilon) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    const D: f64 = 10.995;

    fn check_rest_conditions(q: &ControlFunction, d: f64) {
        let tf = q.t_f();
        assert!(q.value(0.0).abs() < 1e-9, "q(0) = {}", q.value(0.0));
        assert!((q.value(tf) - d).abs() < 1e-9, "q(tf) = {}", q.value(tf));
        for k in 1..=4 {
            assert!(q.derivative(k, 0.0).abs() < 1e-9 * tf.powi(-(k as i32)).max(1.0), "order {k} at 0");
            let v = q.derivative_from_left(k, tf);
            assert!(v.abs() < 1e-9 * tf.powi(-(k as i32)).max(1.0), "order {k} at tf: {v}");
        }
    }

    #[test]
    fn polynomial_qc_matches_closed_form() {
        let tf = 0.8;
        let q = polynomial_qc(D, tf).unwrap();
        check_rest_conditions(&q, D);
        assert_relative_eq!(q.value(tf / 2.0), D / 2.0, epsilon = 1e-10);
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            let closed = D * (126.0 * s.powi(5) - 420.0 * s.powi(6) + 540.0 * s.powi(7) - 315.0 * s.powi(8)
                + 70.0 * s.powi(9));
            assert_relative_eq!(q.value(s * tf), closed, epsilon = 1e-10);
        }
    }

    #[test]
    fn quasi_optimal_branch_values() {
        let tf = 1.1;
        assert_eq!(quasi_optimal_fc(D, tf, 0, 0.0), 0.0);
        assert_relative_eq!(quasi_optimal_fc(D, tf, 0, tf / 2.0), D / 2.0, epsilon = 1e-14);
        let raw = quasi_optimal_qc_raw(D, tf).unwrap();
        assert_eq!(raw.value(-0.1), 0.0);
        assert_eq!(raw.value(tf + 0.1), D);
        // f_c'' = (14d/3t_f²)(1-2t/t_f)^{1/3}
        let t = 0.2;
        assert_relative_eq!(
            raw.derivative(2, t),
            14.0 * D / (3.0 * tf * tf) * (1.0 - 2.0 * t / tf).cbrt(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn quasi_optimal_point_symmetry() {
        let tf = 1.1;
        for q in [quasi_optimal_qc_raw(D, tf).unwrap(), quasi_optimal_qc(D, tf, &SmoothingSpec::standard()).unwrap()] {
            for i in 0..=200 {
                let t = tf * i as f64 / 200.0;
                assert!((q.value(t) + q.value(tf - t) - D).abs() < 1e-10, "t = {t}");
            }
        }
    }

    #[test]
    fn classical_qc_midpoint() {
        let tf = 1.0;
        let q = quasi_optimal_classical_qc(D, tf).unwrap();
        let mid = tf / 2.0;
        assert_relative_eq!(q.value(mid), D / 2.0, epsilon = 1e-13);
        assert_relative_eq!(q.derivative_from_left(0, mid), D / 2.0, epsilon = 1e-13);
        assert_relative_eq!(q.derivative_from_left(1, mid), 2.0 * D / tf, epsilon = 1e-12);
        assert_relative_eq!(q.derivative(1, mid), 2.0 * D / tf, epsilon = 1e-12);
        assert_relative_eq!(q.derivative_from_left(2, mid), 4.0 * D / (tf * tf), epsilon = 1e-12);
        assert_relative_eq!(q.derivative(2, mid), -4.0 * D / (tf * tf), epsilon = 1e-12);
        assert_eq!(q.value(0.0), 0.0);
        assert_relative_eq!(q.value(tf), D, epsilon = 1e-13);
    }

    #[test]
    fn classical_q0_first_branch() {
        let tf = 1.2;
        let q0 = invert_q0(&quasi_optimal_classical_qc(D, tf).unwrap(), TAU);
        for &t in &[0.05, 0.3, 0.55] {
            let s = t / tf;
            let expected = 2.0 * D * (s * s + 2.0 / (TAU * TAU * tf * tf));
            assert_relative_eq!(q0.value(t), expected, max_relative = 1e-13);
        }
        assert_eq!(q0.kind(), ControlKind::Trap(Family::QuasiOptimalClassical));
    }

    #[test]
    fn constant_auxiliary_inverts_to_itself() {
        let qc = ControlFunction::constant(1.0, 3.5);
        let q0 = invert_q0(&qc, TAU);
        for &t in &[0.0, 0.4, 1.0] {
            assert_eq!(q0.value(t), 3.5);
        }
    }

    #[test]
    fn smoothed_families_satisfy_boundary_conditions() {
        for tf in [0.8, 1.1, 1.45] {
            for fam in Family::ALL {
                let q = auxiliary(fam, D, tf, &SmoothingSpec::standard()).unwrap();
                check_rest_conditions(&q, D);
                let q0 = invert_q0(&q, TAU);
                assert!(q0.value(0.0).abs() < 1e-9);
                assert!((q0.value(tf) - D).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn smoothing_repairs_classical_midpoint() {
        let tf = 1.0;
        let raw = invert_q0(&quasi_optimal_classical_qc(D, tf).unwrap(), TAU);
        let mid = tf / 2.0;
        let jump = raw.value(mid) - raw.derivative_from_left(0, mid);
        assert_relative_eq!(jump, -8.0 * D / (TAU * TAU * tf * tf), max_relative = 1e-12);

        let smooth = invert_q0(&quasi_optimal_classical_qc(D, tf).unwrap().smooth(&SmoothingSpec::standard()).unwrap(), TAU);
        assert!((smooth.value(mid) - smooth.derivative_from_left(0, mid)).abs() < 1e-12);
        assert!((smooth.derivative(1, mid) - smooth.derivative_from_left(1, mid)).abs() < 1e-10);
        // The auxiliary stays C² at every window edge.
        let qc = smooth.auxiliary().unwrap();
        for &t in &qc.breakpoints()[1..] {
            if t >= tf {
                continue;
            }
            for k in 0..=2 {
                let scale = tf.powi(-(k as i32)) * D;
                assert!((qc.derivative(k, t) - qc.derivative_from_left(k, t)).abs() < 1e-9 * scale, "order {k} at {t}");
            }
        }
        // Outside the windows nothing changes.
        let unsmoothed = quasi_optimal_classical_qc(D, tf).unwrap();
        for &t in &[0.1, 0.3, 0.7, 0.9] {
            assert_eq!(qc.value(t), unsmoothed.value(t));
        }
    }

    #[test]
    fn smoothing_a_cubic_is_a_no_op() {
        let tf = 2.0;
        let p = Polynomial::new(vec![0.3, -1.0, 0.5, 0.25], 0.0, tf);
        let f = ControlFunction::from_polynomial(tf, ControlKind::Custom, p.clone());
        let spec = SmoothingSpec { window_fraction: 0.2, window_centers: vec![0.3, 0.6] };
        let g = f.smooth(&spec).unwrap();
        for i in 0..=100 {
            let t = tf * i as f64 / 100.0;
            assert!((g.value(t) - p.value(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn overlapping_windows_are_rejected() {
        let q = quasi_optimal_classical_qc(D, 1.0).unwrap();
        let spec = SmoothingSpec { window_fraction: 0.3, window_centers: vec![0.4, 0.6] };
        assert!(matches!(q.smooth(&spec), Err(Error::OverlappingWindows { .. })));
    }

    #[test]
    fn standard_windows_have_length_tf_over_8() {
        let tf = 1.6;
        let q = quasi_optimal_classical_qc(D, tf).unwrap().smooth(&SmoothingSpec::standard()).unwrap();
        let bp = q.breakpoints();
        let expected = [0.0, tf / 16.0, tf / 2.0 - tf / 16.0, tf / 2.0 + tf / 16.0, tf - tf / 16.0, tf];
        assert_eq!(bp.len(), expected.len());
        for (a, b) in bp.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn basis_is_cardinal_and_clamped() {
        let tf = 1.1;
        let basis = build_basis(8, tf).unwrap();
        assert_eq!(basis.len(), 8);
        assert_eq!(basis.polynomials()[0].degree(), 13);
        assert!(basis.condition_number() < 1e10);
        for l in 0..8 {
            for (k, &t) in basis.nodes().iter().enumerate() {
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((basis.value(l, t) - expect).abs() < 1e-9);
            }
            for order in 0..=2 {
                for t in [0.0, tf] {
                    assert!(basis.polynomials()[l].derivative(order, t).abs() < 1e-8, "l={l} order={order} t={t}");
                }
            }
        }
    }

    #[test]
    fn zero_correction_is_identity() {
        let tf = 1.0;
        let q0 = invert_q0(&polynomial_qc(D, tf).unwrap(), TAU);
        let basis = build_basis(8, tf).unwrap();
        let q = esta_control(&q0, &basis, &[0.0; 8]);
        assert_eq!(q.kind(), ControlKind::Esta(Family::Polynomial));
        for i in 0..=50 {
            let t = tf * i as f64 / 50.0;
            assert_eq!(q.value(t), q0.value(t));
        }
    }

    #[test]
    fn build_basis_rejects_zero_points() {
        assert!(build_basis(0, 1.0).is_err());
    }

    /// Classical oracle: integrate q̈ = -ω0² (q - q_0(t)) from rest with RK4,
    /// stepping segment by segment so the forcing is smooth within each step.
    fn integrate_auxiliary(q0: &ControlFunction, omega0: f64) -> Vec<(f64, f64)> {
        let bp = q0.breakpoints();
        let w2 = omega0 * omega0;
        let (mut x, mut v) = (q0.value(0.0), 0.0);
        let mut out = vec![(0.0, x)];
        for pair in bp.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let steps = ((b - a) / 2e-4).ceil() as usize;
            let h = (b - a) / steps as f64;
            // forcing evaluated strictly inside the segment
            let force = |t: f64, x: f64| -w2 * (x - q0.value(t.clamp(a + 1e-13, b - 1e-13)));
            for i in 0..steps {
                let t = a + i as f64 * h;
                let k1x = v;
                let k1v = force(t, x);
                let k2x = v + 0.5 * h * k1v;
                let k2v = force(t + 0.5 * h, x + 0.5 * h * k1x);
                let k3x = v + 0.5 * h * k2v;
                let k3v = force(t + 0.5 * h, x + 0.5 * h * k2x);
                let k4x = v + h * k3v;
                let k4v = force(t + h, x + h * k3x);
                x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                out.push((t + h, x));
            }
        }
        out
    }

    #[test]
    fn inversion_round_trips_through_the_classical_equation() {
        for fam in Family::ALL {
            let tf = 1.0;
            let qc = auxiliary(fam, D, tf, &SmoothingSpec::standard()).unwrap();
            let q0 = invert_q0(&qc, TAU);
            let path = integrate_auxiliary(&q0, TAU);
            let rms = (path.iter().map(|(t, x)| (x - qc.value(*t)).powi(2)).sum::<f64>() / path.len() as f64).sqrt();
            assert!(rms < 1e-8, "{fam:?}: rms = {rms}");
        }
    }

    proptest! {
        #[test]
        fn basis_interpolates_random_corrections(eps in proptest::collection::vec(-1.0f64..1.0, 8), tf in 0.5f64..2.0) {
            let basis = build_basis(8, tf).unwrap();
            let q0 = invert_q0(&polynomial_qc(D, tf).unwrap(), TAU);
            let q = esta_control(&q0, &basis, &eps);
            for (k, &t) in basis.nodes().iter().enumerate() {
                prop_assert!((q.value(t) - q0.value(t) - eps[k]).abs() < 1e-9);
            }
            prop_assert!(q.value(0.0).abs() < 1e-9);
            prop_assert!((q.value(tf) - D).abs() < 1e-9);
        }
    }
}
