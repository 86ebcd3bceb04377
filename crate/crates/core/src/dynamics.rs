//! Split-operator propagation on a periodic grid, imaginary-time ground
//! states and transport fidelities.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::control::ControlFunction;
use crate::error::{Error, Result};
use crate::potential::TrapShape;
use crate::robustness::SystematicError;
use crate::units::DimensionlessParams;

/// Uniform periodic grid x_i = x_min + i·dx, dx = (x_max − x_min)/n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid(format!("empty interval [{x_min}, {x_max}]")));
        }
        if !n_points.is_power_of_two() || n_points < 16 {
            return Err(Error::InvalidGrid(format!("{n_points} points (need a power of two ≥ 16)")));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    /// [origin − pad, origin + d + pad].
    pub fn for_transport(origin: f64, distance: f64, pad: f64, n_points: usize) -> Result<Self> {
        if pad < 8.0 {
            return Err(Error::InvalidGrid(format!("padding {pad} below 8σ")));
        }
        if n_points < 512 {
            return Err(Error::InvalidGrid(format!("{n_points} points (transport needs ≥ 512)")));
        }
        Self::new(origin - pad, origin + distance + pad, n_points)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / (self.x_max - self.x_min);
        (0..n).map(|i| if i < n / 2 { i as f64 * dk } else { (i as f64 - n as f64) * dk }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    grid: Grid,
    amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl Wavefunction {
    pub fn new(grid: Grid, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, amplitudes, time })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let amplitudes = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        Self { grid, amplitudes, time: 0.0 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) {
        let s = 1.0 / self.norm_sqr().sqrt();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Wavefunction) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(inner_raw(&self.amplitudes, &other.amplitudes) * self.grid.dx())
    }

    /// ⟨self| f(x) |other⟩ for a multiplication operator sampled on the grid.
    pub fn matrix_element(&self, f: &[f64], other: &Wavefunction) -> Result<Complex64> {
        if self.grid != other.grid || f.len() != self.grid.len() {
            return Err(Error::GridMismatch);
        }
        let s: Complex64 = self.amplitudes.iter().zip(&other.amplitudes).zip(f).map(|((a, b), v)| a.conj() * b * v).sum();
        Ok(s * self.grid.dx())
    }

    /// Probability-density mean and standard deviation.
    pub fn position_moments(&self) -> (f64, f64) {
        let dx = self.grid.dx();
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let (x, p) = (self.grid.x(i), a.norm_sqr() * dx);
            m0 += p;
            m1 += p * x;
            m2 += p * x * x;
        }
        let mean = m1 / m0;
        (mean, (m2 / m0 - mean * mean).max(0.0).sqrt())
    }
}

fn inner_raw(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// |⟨a|b⟩|².
pub fn fidelity(psi_final: &Wavefunction, psi_target: &Wavefunction) -> Result<f64> {
    Ok(psi_target.inner(psi_final)?.norm_sqr())
}

/// A trap shape pinned to the grid, evaluated at trap position Q without
/// per-point transcendental calls for the lattice.
#[derive(Debug, Clone)]
pub struct SampledShape {
    shape: TrapShape,
    x: Vec<f64>,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
}

impl SampledShape {
    pub fn new(grid: &Grid, shape: TrapShape) -> Self {
        let x = grid.positions();
        let (cos2, sin2) = match shape {
            TrapShape::Lattice { wavenumber, .. } => {
                x.iter().map(|&x| ((2.0 * wavenumber * x).cos(), (2.0 * wavenumber * x).sin())).unzip()
            }
            TrapShape::Harmonic { .. } => (Vec::new(), Vec::new()),
        };
        Self { shape, x, cos2, sin2 }
    }

    pub fn shape(&self) -> TrapShape {
        self.shape
    }

    /// out[i] = V(x_i − q).
    pub fn fill(&self, q: f64, out: &mut [f64]) {
        match self.shape {
            TrapShape::Lattice { depth, wavenumber } => {
                // sin²(κ(x − q)) = ½[1 − cos 2κx cos 2κq − sin 2κx sin 2κq]
                let (s, c) = (2.0 * wavenumber * q).sin_cos();
                let h = 0.5 * depth;
                for ((o, cx), sx) in out.iter_mut().zip(&self.cos2).zip(&self.sin2) {
                    *o = h * (1.0 - cx * c - sx * s);
                }
            }
            TrapShape::Harmonic { curvature } => {
                for (o, x) in out.iter_mut().zip(&self.x) {
                    *o = 0.5 * curvature * (x - q) * (x - q);
                }
            }
        }
    }

    pub fn sample(&self, q: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.x.len()];
        self.fill(q, &mut out);
        out
    }
}

/// cos 2κx and sin 2κx on the grid, for fast evaluation of functions of
/// u = x − q that only involve u, sin 2κu and cos 2κu.
#[derive(Debug, Clone)]
pub struct LatticeTable {
    x: Vec<f64>,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
    wavenumber: f64,
}

impl LatticeTable {
    pub fn new(grid: &Grid, wavenumber: f64) -> Self {
        let x = grid.positions();
        let (cos2, sin2) = x.iter().map(|&x| ((2.0 * wavenumber * x).cos(), (2.0 * wavenumber * x).sin())).unzip();
        Self { x, cos2, sin2, wavenumber }
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    /// out[i] = f(u, sin 2κu, cos 2κu) with u = x_i − q.
    pub fn fill(&self, q: f64, out: &mut [f64], f: impl Fn(f64, f64, f64) -> f64) {
        let (sq, cq) = (2.0 * self.wavenumber * q).sin_cos();
        for (i, o) in out.iter_mut().enumerate() {
            let (cx, sx) = (self.cos2[i], self.sin2[i]);
            *o = f(self.x[i] - q, sx * cq - cx * sq, cx * cq + sx * sq);
        }
    }
}

/// Time-dependent potential V(x − Q(t)).
#[derive(Debug, Clone)]
pub struct PotentialModel {
    pub shape: TrapShape,
    pub trajectory: ControlFunction,
}

impl PotentialModel {
    pub fn new(shape: TrapShape, trajectory: ControlFunction) -> Self {
        Self { shape, trajectory }
    }

    pub fn evaluate(&self, x: f64, t: f64) -> f64 {
        self.shape.value(x - self.trajectory.value(t))
    }
}

/// FFT plans and the kinetic spectrum for one grid.
#[derive(Clone)]
pub struct SplitOperator {
    grid: Grid,
    hbar: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// ħ²k²/2m
    kinetic: Vec<f64>,
}

impl std::fmt::Debug for SplitOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SplitOperator").field("grid", &self.grid).finish_non_exhaustive()
    }
}

impl SplitOperator {
    pub fn new(grid: Grid, hbar: f64, mass: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.len());
        let inverse = planner.plan_fft_inverse(grid.len());
        let kinetic = grid.wavenumbers().iter().map(|k| hbar * hbar * k * k / (2.0 * mass)).collect();
        Self { grid, hbar, forward, inverse, kinetic }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kinetic(&self) -> &[f64] {
        &self.kinetic
    }

    /// Real-time stepper for a fixed dt (negative dt runs backwards).
    pub fn stepper(&self, dt: f64) -> Stepper<'_> {
        let n = self.grid.len() as f64;
        let drift = self.kinetic.iter().map(|&t| Complex64::from_polar(1.0 / n, -t * dt / self.hbar)).collect();
        Stepper {
            op: self,
            dt,
            drift,
            kick: vec![Complex64::new(0.0, 0.0); self.grid.len()],
            potential: vec![0.0; self.grid.len()],
            scratch: vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()],
        }
    }

    fn fft(&self, data: &mut [Complex64], scratch: &mut [Complex64], forward: bool) {
        if forward {
            self.forward.process_with_scratch(data, scratch);
        } else {
            self.inverse.process_with_scratch(data, scratch);
        }
    }

    /// ⟨ψ|T + V|ψ⟩ / ⟨ψ|ψ⟩.
    pub fn energy(&self, psi: &[Complex64], potential: &[f64]) -> f64 {
        let mut k = psi.to_vec();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        self.fft(&mut k, &mut scratch, true);
        let n = self.grid.len() as f64;
        let kin: f64 = k.iter().zip(&self.kinetic).map(|(a, t)| a.norm_sqr() * t).sum::<f64>() / n;
        let pot: f64 = psi.iter().zip(potential).map(|(a, v)| a.norm_sqr() * v).sum();
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        (kin + pot) / norm
    }
}

/// Strang step e^{−iV dt/2ħ} e^{−iT dt/ħ} e^{−iV dt/2ħ} with V sampled once
/// per step.
pub struct Stepper<'a> {
    op: &'a SplitOperator,
    dt: f64,
    drift: Vec<Complex64>,
    kick: Vec<Complex64>,
    potential: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Stepper<'_> {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Prepares the kick for the potential V(x − q); applies to every
    /// subsequent `apply` call until the next `set_trap`.
    pub fn set_trap(&mut self, shape: &SampledShape, q: f64) {
        shape.fill(q, &mut self.potential);
        self.set_potential_from_buffer();
    }

    /// Prepares the kick for an explicit potential.
    pub fn set_potential(&mut self, v: &[f64]) {
        self.potential.copy_from_slice(v);
        self.set_potential_from_buffer();
    }

    fn set_potential_from_buffer(&mut self) {
        let c = -0.5 * self.dt / self.op.hbar;
        for (k, v) in self.kick.iter_mut().zip(&self.potential) {
            let (s, co) = (c * v).sin_cos();
            *k = Complex64::new(co, s);
        }
    }

    pub fn apply(&mut self, psi: &mut [Complex64]) {
        for (a, k) in psi.iter_mut().zip(&self.kick) {
            *a *= k;
        }
        self.op.fft(psi, &mut self.scratch, true);
        for (a, d) in psi.iter_mut().zip(&self.drift) {
            *a *= d;
        }
        self.op.fft(psi, &mut self.scratch, false);
        for (a, k) in psi.iter_mut().zip(&self.kick) {
            *a *= k;
        }
    }
}

/// Real-time integrator for transports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// One Strang step per dt, potential sampled at the step midpoint.
    Strang,
    /// Symmetric triple-jump composition of three Strang steps, each
    /// sampling the potential at its own midpoint; fourth order in dt.
    #[default]
    Yoshida4,
}

impl Integrator {
    /// Substep weights in units of dt.
    fn weights(self) -> &'static [f64] {
        const CBRT2: f64 = 1.259_921_049_894_873_2;
        const W1: f64 = 1.0 / (2.0 - CBRT2);
        const W0: f64 = -CBRT2 / (2.0 - CBRT2);
        match self {
            Integrator::Strang => &[1.0],
            Integrator::Yoshida4 => &[W1, W0, W1],
        }
    }
}

/// Steps any number of states by dt along V(x − Q(t)) with the chosen
/// integrator. A negative dt runs backwards.
pub struct TrajectoryStepper<'a> {
    shape: SampledShape,
    substeps: Vec<(f64, Stepper<'a>)>,
    dt: f64,
}

impl<'a> TrajectoryStepper<'a> {
    pub fn new(op: &'a SplitOperator, shape: TrapShape, integrator: Integrator, dt: f64) -> Self {
        let substeps = integrator.weights().iter().map(|&w| (w, op.stepper(w * dt))).collect();
        Self { shape: SampledShape::new(op.grid(), shape), substeps, dt }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances every state in `states` from t0 to t0 + dt.
    pub fn step(&mut self, trajectory: &ControlFunction, t0: f64, states: &mut [&mut [Complex64]]) {
        let mut t = t0;
        for (w, stepper) in self.substeps.iter_mut() {
            let h = *w * self.dt;
            stepper.set_trap(&self.shape, trajectory.value(t + 0.5 * h));
            for psi in states.iter_mut() {
                stepper.apply(psi);
            }
            t += h;
        }
    }
}

/// Propagates `psi` from `psi.time` by `n_steps` of size `dt` under
/// V(x − Q(t)).
pub fn propagate(
    op: &SplitOperator,
    psi: &mut Wavefunction,
    potential: &PotentialModel,
    integrator: Integrator,
    dt: f64,
    n_steps: usize,
) {
    let mut stepper = TrajectoryStepper::new(op, potential.shape, integrator, dt);
    let t0 = psi.time;
    for k in 0..n_steps {
        stepper.step(&potential.trajectory, t0 + k as f64 * dt, &mut [&mut psi.amplitudes]);
    }
    psi.time = t0 + n_steps as f64 * dt;
}

/// Ground state of V(x − center) by imaginary-time split-operator
/// iteration from the harmonic Gaussian, run at two step sizes and
/// Richardson-combined.
pub fn ground_state(
    op: &SplitOperator,
    shape: TrapShape,
    center: f64,
    mass: f64,
    tol: f64,
) -> Result<Wavefunction> {
    let grid = *op.grid();
    let potential = SampledShape::new(&grid, shape).sample(center);
    let length = (op.hbar / (mass * shape.omega(mass))).sqrt();
    let mut psi = Wavefunction::from_fn(grid, |x| Complex64::new((-0.5 * ((x - center) / length).powi(2)).exp(), 0.0));
    psi.normalize();
    let period = 2.0 * PI / shape.omega(mass);
    // coarse relaxation, then two refinements at dτ and dτ/2
    let coarse = relax(op, &potential, psi.amplitudes.clone(), 0.02 * period, 1e3 * tol)?;
    let step = 2e-3 * period;
    let a = relax(op, &potential, coarse, step, tol)?;
    let b = relax(op, &potential, a.clone(), 0.5 * step, tol)?;
    // the O(dτ²) splitting error of the fixed point cancels
    let phase = inner_raw(&a, &b);
    let phase = phase / phase.norm();
    let amps: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| (4.0 * y - x * phase) / 3.0).collect();
    let mut out = Wavefunction::new(grid, amps, 0.0)?;
    out.normalize();
    Ok(out)
}

const MAX_IMAG_STEPS: usize = 400_000;

fn relax(op: &SplitOperator, potential: &[f64], mut psi: Vec<Complex64>, dtau: f64, tol: f64) -> Result<Vec<Complex64>> {
    let n = op.grid.len();
    let half: Vec<f64> = potential.iter().map(|v| (-0.5 * dtau * v / op.hbar).exp()).collect();
    let drift: Vec<f64> = op.kinetic.iter().map(|t| (-dtau * t / op.hbar).exp() / n as f64).collect();
    let mut scratch = vec![Complex64::new(0.0, 0.0); op.forward.get_inplace_scratch_len()];
    const CHECK: usize = 10;
    let mut last = f64::INFINITY;
    for iter in 1..=MAX_IMAG_STEPS {
        for (a, h) in psi.iter_mut().zip(&half) {
            *a *= h;
        }
        op.fft(&mut psi, &mut scratch, true);
        for (a, d) in psi.iter_mut().zip(&drift) {
            *a *= d;
        }
        op.fft(&mut psi, &mut scratch, false);
        for (a, h) in psi.iter_mut().zip(&half) {
            *a *= h;
        }
        let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|a| *a /= norm);
        if iter % CHECK == 0 {
            let e = op.energy(&psi, potential);
            if (e - last).abs() < tol * CHECK as f64 {
                let scale = 1.0 / op.grid.dx().sqrt();
                psi.iter_mut().for_each(|a| *a *= scale);
                return Ok(psi);
            }
            last = e;
        }
    }
    Err(Error::NonConvergence { iterations: MAX_IMAG_STEPS })
}

/// How the reference states are chosen when the lattice carries a
/// systematic error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetConvention {
    /// Initial and target states are ground states of the error-free trap.
    #[default]
    Unperturbed,
    /// Both are ground states of the perturbed trap.
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    pub grid_points: usize,
    /// Padding beyond [0, d] on each side, in σ.
    pub grid_pad: f64,
    /// Time step in τ.
    pub dt: f64,
    pub imag_time_tol: f64,
    pub target: TargetConvention,
    pub integrator: Integrator,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { grid_points: 2048, grid_pad: 12.0, dt: 1.0 / 2000.0, imag_time_tol: 1e-14, target: TargetConvention::default(), integrator: Integrator::default() }
    }
}

impl Numerics {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter { name: "dt_over_tau", value: self.dt });
        }
        if !(self.imag_time_tol > 0.0) {
            return Err(Error::InvalidParameter { name: "imag_time_tol", value: self.imag_time_tol });
        }
        if !self.grid_points.is_power_of_two() || self.grid_points < 512 {
            return Err(Error::InvalidParameter { name: "grid_points", value: self.grid_points as f64 });
        }
        if !(self.grid_pad >= 8.0) {
            return Err(Error::InvalidParameter { name: "grid_pad_sigma", value: self.grid_pad });
        }
        Ok(())
    }

    /// Number of equal steps covering [0, t_f] with step at most `dt`.
    pub fn steps(&self, tf: f64) -> usize {
        ((tf / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

/// Outcome of one transport run.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub fidelity: f64,
    /// |‖ψ(t_f)‖² − ‖ψ(0)‖²|
    pub norm_drift: f64,
    pub final_state: Wavefunction,
}

/// Grid, plans and reference ground states for repeated transports from
/// `origin` to `origin + d`.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: DimensionlessParams,
    numerics: Numerics,
    shape: TrapShape,
    origin: f64,
    op: SplitOperator,
    initial: Wavefunction,
    target: Wavefunction,
}

impl Simulator {
    /// Lattice transport from 0 to d.
    pub fn new(params: DimensionlessParams, numerics: Numerics) -> Result<Self> {
        Self::with_shape(params, numerics, TrapShape::lattice(&params), 0.0)
    }

    pub fn with_shape(params: DimensionlessParams, numerics: Numerics, shape: TrapShape, origin: f64) -> Result<Self> {
        numerics.validate()?;
        let grid = Grid::for_transport(origin, params.distance, numerics.grid_pad, numerics.grid_points)?;
        let op = SplitOperator::new(grid, params.hbar, params.mass);
        let initial = ground_state(&op, shape, origin, params.mass, numerics.imag_time_tol)?;
        let target = ground_state(&op, shape, origin + params.distance, params.mass, numerics.imag_time_tol)?;
        Ok(Self { params, numerics, shape, origin, op, initial, target })
    }

    pub fn params(&self) -> &DimensionlessParams {
        &self.params
    }

    pub fn numerics(&self) -> &Numerics {
        &self.numerics
    }

    pub fn shape(&self) -> TrapShape {
        self.shape
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    /// Start position of the transport; the target sits at origin + d.
    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn operator(&self) -> &SplitOperator {
        &self.op
    }

    pub fn initial_state(&self) -> &Wavefunction {
        &self.initial
    }

    pub fn target_state(&self) -> &Wavefunction {
        &self.target
    }

    /// The trap shape seen by the atoms under `error`.
    pub fn applied_shape(&self, error: Option<&SystematicError>) -> TrapShape {
        match error {
            Some(e) => e.shape(&self.params),
            None => self.shape,
        }
    }

    /// Reference states for `error` under the configured convention.
    pub fn reference_states(&self, error: Option<&SystematicError>) -> Result<(Wavefunction, Wavefunction)> {
        match (error, self.numerics.target) {
            (Some(e), TargetConvention::Perturbed) if e.delta != 0.0 => {
                let shape = e.shape(&self.params);
                let tol = self.numerics.imag_time_tol;
                let a = ground_state(&self.op, shape, self.origin, self.params.mass, tol)?;
                let b = ground_state(&self.op, shape, self.origin + self.params.distance, self.params.mass, tol)?;
                Ok((a, b))
            }
            _ => Ok((self.initial.clone(), self.target.clone())),
        }
    }

    pub fn transport(&self, trajectory: &ControlFunction, error: Option<&SystematicError>) -> Result<TransportResult> {
        let tf = trajectory.t_f();
        let n = self.numerics.steps(tf);
        let (mut psi, target) = self.reference_states(error)?;
        let start = psi.norm_sqr();
        let model = PotentialModel::new(self.applied_shape(error), trajectory.clone());
        propagate(&self.op, &mut psi, &model, self.numerics.integrator, tf / n as f64, n);
        Ok(TransportResult {
            fidelity: fidelity(&psi, &target)?,
            norm_drift: (psi.norm_sqr() - start).abs(),
            final_state: psi,
        })
    }

    /// Transport fidelity along `trajectory` under an optional systematic error.
    pub fn simulate_transport(&self, trajectory: &ControlFunction, error: Option<&SystematicError>) -> Result<f64> {
        Ok(self.transport(trajectory, error)?.fidelity)
    }

    /// Calls `visit(t_k, Ψ_0(t_k), Ψ_T(t_k))` on every step time t_k = k·dt,
    /// k = 0..=n, where Ψ_0 is the forward-evolved initial state and Ψ_T the
    /// target evolved backwards from t_f, both under the error-free trap.
    ///
    /// Ψ_T is first carried back to t = 0 and then stepped forward alongside
    /// Ψ_0, so memory does not grow with the number of steps.
    pub fn overlap_stream(
        &self,
        trajectory: &ControlFunction,
        mut visit: impl FnMut(f64, &Wavefunction, &Wavefunction),
    ) -> Result<()> {
        let tf = trajectory.t_f();
        let n = self.numerics.steps(tf);
        let dt = tf / n as f64;
        let integrator = self.numerics.integrator;
        let mut back = TrajectoryStepper::new(&self.op, self.shape, integrator, -dt);
        let mut target = self.target.clone();
        for k in (0..n).rev() {
            back.step(trajectory, (k + 1) as f64 * dt, &mut [&mut target.amplitudes]);
        }
        target.time = 0.0;
        let mut psi = self.initial.clone();
        psi.time = 0.0;
        let mut fwd = TrajectoryStepper::new(&self.op, self.shape, integrator, dt);
        visit(0.0, &psi, &target);
        for k in 0..n {
            fwd.step(trajectory, k as f64 * dt, &mut [&mut psi.amplitudes, &mut target.amplitudes]);
            let t = (k + 1) as f64 * dt;
            psi.time = t;
            target.time = t;
            visit(t, &psi, &target);
        }
        Ok(())
    }

    /// Ψ_T(t) = U(t, t_f) Ψ_T sampled every `stride` steps backwards from
    /// t_f, returned in increasing time (the last entry is the target).
    pub fn backward_evolved_target(&self, trajectory: &ControlFunction, stride: usize) -> Result<Vec<Wavefunction>> {
        let stride = stride.max(1);
        let tf = trajectory.t_f();
        let n = self.numerics.steps(tf);
        let dt = tf / n as f64;
        let mut back = TrajectoryStepper::new(&self.op, self.shape, self.numerics.integrator, -dt);
        let mut psi = self.target.clone();
        psi.time = tf;
        let mut out = vec![psi.clone()];
        for k in (0..n).rev() {
            back.step(trajectory, (k + 1) as f64 * dt, &mut [&mut psi.amplitudes]);
            psi.time = k as f64 * dt;
            if k % stride == 0 {
                out.push(psi.clone());
            }
        }
        out.reverse();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{auxiliary, invert_q0, Family, SmoothingSpec};
    use crate::modes::hermite_eigenfunction;
    use crate::units::{scaled, PhysicalParams};

    fn params() -> DimensionlessParams {
        scaled(&PhysicalParams::default()).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(0.0, 1.0, 1000).is_err());
        assert!(Grid::new(1.0, 0.0, 1024).is_err());
        assert!(Grid::for_transport(0.0, 11.0, 4.0, 2048).is_err());
        assert!(Grid::for_transport(0.0, 11.0, 12.0, 256).is_err());
        let g = Grid::new(-1.0, 1.0, 16).unwrap();
        assert_eq!(g.wavenumbers()[8], -8.0 * PI);
    }

    #[test]
    fn fidelity_basics() {
        let g = Grid::new(-10.0, 10.0, 256).unwrap();
        let mut a = Wavefunction::from_fn(g, |x| Complex64::new(hermite_eigenfunction(0, x, 1.0), 0.0));
        a.normalize();
        let b = Wavefunction::from_fn(g, |x| Complex64::new(hermite_eigenfunction(1, x, 1.0), 0.0));
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-14);
        assert!(fidelity(&a, &b).unwrap() < 1e-28);
        let mut c = a.clone();
        c.amplitudes_mut().iter_mut().for_each(|z| *z *= Complex64::from_polar(1.0, 0.7));
        assert!((fidelity(&c, &a).unwrap() - 1.0).abs() < 1e-14);
        let other = Wavefunction::from_fn(Grid::new(-10.0, 10.0, 128).unwrap(), |_| Complex64::new(1.0, 0.0));
        assert_eq!(fidelity(&a, &other), Err(Error::GridMismatch));
    }

    #[test]
    fn free_gaussian_spreads_as_predicted() {
        let (hbar, mass) = (1.0, 0.5);
        let g = Grid::new(-40.0, 40.0, 1024).unwrap();
        let op = SplitOperator::new(g, hbar, mass);
        let s0: f64 = 1.0;
        let packet = |x: f64, t: f64| {
            let a = Complex64::new(s0 * s0, hbar * t / mass);
            Complex64::new(s0, 0.0) / a.sqrt() * (-(x * x) / (2.0 * a)).exp() * PI.powf(-0.25)
        };
        let mut psi = Wavefunction::from_fn(g, |x| packet(x, 0.0));
        let model = PotentialModel::new(TrapShape::Harmonic { curvature: 0.0 }, ControlFunction::constant(1.0, 0.0));
        propagate(&op, &mut psi, &model, Integrator::Strang, 1e-2, 300);
        let exact = Wavefunction::from_fn(g, |x| packet(x, 3.0));
        assert!(1.0 - fidelity(&psi, &exact).unwrap() < 1e-8);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_ground_state_is_the_gaussian() {
        let p = params();
        let g = Grid::for_transport(0.0, p.distance, 12.0, 2048).unwrap();
        let op = SplitOperator::new(g, p.hbar, p.mass);
        for center in [0.0, 3.3] {
            let psi = ground_state(&op, TrapShape::harmonic(&p), center, p.mass, 1e-14).unwrap();
            let exact = Wavefunction::from_fn(g, |x| Complex64::new(hermite_eigenfunction(0, x - center, 1.0), 0.0));
            assert!(1.0 - fidelity(&psi, &exact).unwrap() < 1e-8);
            let (mean, std) = psi.position_moments();
            assert!((mean - center).abs() < 1e-8 && (std - 0.5f64.sqrt()).abs() < 1e-6, "{mean} {std}");
        }
    }

    #[test]
    fn lattice_ground_state_is_softened() {
        let p = params();
        let g = Grid::for_transport(0.0, p.distance, 12.0, 2048).unwrap();
        let op = SplitOperator::new(g, p.hbar, p.mass);
        let shape = TrapShape::lattice(&p);
        let psi = ground_state(&op, shape, 0.0, p.mass, 1e-12).unwrap();
        let e = op.energy(psi.amplitudes(), &SampledShape::new(&g, shape).sample(0.0));
        assert!(e < 0.5 * p.omega0 && e > 0.4 * p.omega0, "E = {e}");
        // one lattice period away the well is identical
        let shifted = ground_state(&op, shape, p.distance, p.mass, 1e-12).unwrap();
        let (m0, s0) = psi.position_moments();
        let (m1, s1) = shifted.position_moments();
        assert!((m1 - m0 - p.distance).abs() < 1e-8 && (s1 - s0).abs() < 1e-8);
    }

    #[test]
    fn harmonic_sta_transport_is_exact() {
        let p = params();
        let sim = Simulator::with_shape(p, Numerics::default(), TrapShape::harmonic(&p), 0.0).unwrap();
        let qc = auxiliary(Family::Polynomial, p.distance, 0.8, &SmoothingSpec::standard()).unwrap();
        let r = sim.transport(&invert_q0(&qc, p.omega0), None).unwrap();
        assert!(r.fidelity > 1.0 - 1e-6, "F = {}", r.fidelity);
        assert!(r.norm_drift < 1e-10);
    }

    #[test]
    fn overlap_stream_conserves_the_overlap() {
        let p = params();
        let sim = Simulator::with_shape(p, Numerics::default(), TrapShape::harmonic(&p), 0.0).unwrap();
        let qc = auxiliary(Family::QuasiOptimalClassical, p.distance, 0.9, &SmoothingSpec::standard()).unwrap();
        let q0 = invert_q0(&qc, p.omega0);
        let mut overlaps = Vec::new();
        sim.overlap_stream(&q0, |_, a, b| overlaps.push(b.inner(a).unwrap())).unwrap();
        let first = overlaps[0];
        assert!((first.norm() - 1.0).abs() < 1e-6);
        assert!(overlaps.iter().all(|z| (z - first).norm() < 1e-11));
        let stream = sim.backward_evolved_target(&q0, 100).unwrap();
        assert_eq!(stream.last().unwrap().amplitudes(), sim.target_state().amplitudes());
        assert!(stream.iter().all(|w| (w.norm_sqr() - 1.0).abs() < 1e-10));
        assert_eq!(stream[0].time, 0.0);
    }
}
