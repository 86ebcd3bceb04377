//! The twelve acceptance criteria at desk scale (2048 grid points,
//! dt = τ/2000). Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances are fixed below.

use std::process::ExitCode;
use std::time::Instant;

use esta_core::control::{auxiliary, invert_q0, SmoothingSpec};
use esta_core::deviation::control_deviation;
use esta_core::esta::esta_trajectory;
use esta_core::noise::{adiabatic_constant_approx, adiabatic_constant_exact, noise_sensitivities};
use esta_core::robustness::{error_bound, sensitivity_fd, sensitivity_tdpt, DEFAULT_FD_STEP};
use esta_core::units::{derive_units, scaled};
use esta_core::{
    ControlFunction, DerivativeMethod, DimensionlessParams, ErrorKind, EstaInputs, Family, Integrator, NoiseKind, Numerics,
    PhysicalParams, Simulator, TrapShape,
};
use esta_oracle::{crank_nicolson_fidelity, noise_slope, MonteCarloConfig};
use rayon::prelude::*;

const TAU_EXPECTED_US: f64 = 20.0;
const TAU_REL_TOL: f64 = 0.03;
const HARMONIC_INFIDELITY: f64 = 1e-6;
const F_THRESHOLD: f64 = 0.9;
const CROSSING_TOL: f64 = 0.05;
const CROSS_Q0_23: f64 = 1.2;
const CROSS_Q2: f64 = 1.03;
const CROSS_Q3: f64 = 0.98;
const TDPT_REL_TOL: f64 = 0.05;
const F_REFERENCE: f64 = 0.9;
const C_RATIO_POSITION: (f64, f64) = (0.964, 0.015);
const C_RATIO_AMPLITUDE: (f64, f64) = (0.909, 0.015);
const C_EXACT_RATIO: (f64, f64) = (3.77, 0.12);
const ADIABATIC_TF: f64 = 4.0;
const ADIABATIC_REL_TOL: f64 = 0.05;
const MC_REALIZATIONS: usize = 200;
const MC_SIGMAS: f64 = 2.0;
const NORM_DRIFT_MAX: f64 = 1e-10;
const REFINEMENT_TOL: f64 = 1e-7;
const CN_TOL: f64 = 1e-6;
const CN_STEPS: usize = 2400;

#[derive(Clone, Copy, PartialEq)]
struct Traj {
    family: Family,
    esta: bool,
}

impl Traj {
    fn name(self) -> String {
        format!("{}{}", if self.esta { "Q" } else { "q0" }, self.family.index())
    }
}

fn all_trajectories() -> Vec<Traj> {
    [false, true].iter().flat_map(|&esta| Family::ALL.iter().map(move |&family| Traj { family, esta })).collect()
}

fn control(p: DimensionlessParams, t: Traj, tf: f64) -> ControlFunction {
    let inputs = EstaInputs::for_family(t.family, p, tf).expect("design");
    if t.esta {
        esta_trajectory(&inputs).expect("eSTA").0
    } else {
        inputs.q0
    }
}

/// The (1-based) grid value at which `f` first reaches `level`, by linear
/// interpolation between grid points.
fn crossing(grid: &[f64], f: &[f64], level: f64) -> Option<f64> {
    (1..grid.len()).find(|&i| f[i - 1] < level && f[i] >= level).map(|i| {
        grid[i - 1] + (level - f[i - 1]) * (grid[i] - grid[i - 1]) / (f[i] - f[i - 1])
    })
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: usize, pass: bool, text: String) {
        if !pass {
            self.failures += 1;
        }
        println!("criterion {id:>2}  {}  {text}", if pass { "PASS" } else { "FAIL" });
    }
}

fn key(tf: f64) -> i64 {
    (tf * 1000.0).round() as i64
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut report = Report { failures: 0 };
    let phys = PhysicalParams::default();
    let p = scaled(&phys).unwrap();
    let sim = Simulator::new(p, Numerics::default()).unwrap();

    // 1
    let tau_us = derive_units(&phys).unwrap().tau * 1e6;
    let rel = (tau_us - TAU_EXPECTED_US).abs() / TAU_EXPECTED_US;
    report.line(1, rel <= TAU_REL_TOL, format!("tau = {tau_us:.3} us, {:.2}% from 20 us (tol 3%)", 100.0 * rel));

    // 2
    let harmonic = Simulator::with_shape(p, Numerics::default(), TrapShape::harmonic(&p), 0.0).unwrap();
    let cases: Vec<(Family, f64)> = Family::ALL.iter().flat_map(|&f| [0.8, 1.0, 1.2].map(|tf| (f, tf))).collect();
    let worst = cases
        .par_iter()
        .map(|&(f, tf)| {
            let qc = auxiliary(f, p.distance, tf, &SmoothingSpec::standard()).unwrap();
            1.0 - harmonic.simulate_transport(&invert_q0(&qc, p.omega0), None).unwrap()
        })
        .reduce(|| 0.0, f64::max);
    report.line(2, worst <= HARMONIC_INFIDELITY, format!("harmonic STA: max 1 - F = {worst:.2e} over 3 families x 3 t_f (tol 1e-6)"));

    // 3, 4 and the norm part of 12
    let grid: Vec<f64> = (0..14).map(|i| ((0.8 + 0.05 * i as f64) * 100.0).round() / 100.0).collect();
    let trajs = all_trajectories();
    let points: Vec<(Traj, f64)> = trajs.iter().flat_map(|&t| grid.iter().map(move |&tf| (t, tf))).collect();
    let runs: Vec<(f64, f64)> = points
        .par_iter()
        .map(|&(t, tf)| {
            let r = sim.transport(&control(p, t, tf), None).unwrap();
            (r.fidelity, r.norm_drift)
        })
        .collect();
    let fid = |t: Traj, tf: f64| runs[points.iter().position(|&(a, b)| a == t && key(b) == key(tf)).unwrap()].0;
    let curve = |t: Traj| grid.iter().map(|&tf| fid(t, tf)).collect::<Vec<_>>();
    let q01_at_15 = sim.transport(&control(p, Traj { family: Family::Polynomial, esta: false }, 1.5), None).unwrap();
    let mut max_drift = runs.iter().map(|r| r.1).fold(q01_at_15.norm_drift, f64::max);
    {
        let want = [
            (Traj { family: Family::QuasiOptimal, esta: false }, CROSS_Q0_23),
            (Traj { family: Family::QuasiOptimalClassical, esta: false }, CROSS_Q0_23),
            (Traj { family: Family::QuasiOptimal, esta: true }, CROSS_Q2),
            (Traj { family: Family::QuasiOptimalClassical, esta: true }, CROSS_Q3),
        ];
        let mut ok = q01_at_15.fidelity < F_THRESHOLD;
        let mut parts = Vec::new();
        for (t, target) in want {
            let c = crossing(&grid, &curve(t), F_THRESHOLD);
            ok &= c.is_some_and(|c| (c - target).abs() <= CROSSING_TOL);
            parts.push(format!("{} {}", t.name(), c.map_or("none".into(), |c| format!("{c:.3}"))));
        }
        report.line(
            3,
            ok,
            format!("F = 0.9 crossings: {} (targets 1.2, 1.2, 1.03, 0.98 +- 0.05); F(q01, 1.5) = {:.3}", parts.join(", "), q01_at_15.fidelity),
        );
    }
    {
        let mut worst = f64::INFINITY;
        for family in Family::ALL {
            for &tf in grid.iter().filter(|&&tf| tf >= 0.9 - 1e-9) {
                let margin = fid(Traj { family, esta: true }, tf) - fid(Traj { family, esta: false }, tf);
                worst = worst.min(margin);
            }
        }
        report.line(4, worst >= 0.0, format!("min F(Q_j) - F(q0_j) over t_f in [0.9, 1.45], j = 1..3: {worst:.4}"));
    }

    // 5, 6, 7
    let rob_tf = [1.0, 1.1, 1.2, 1.3];
    let rob_points: Vec<(Traj, f64)> = trajs.iter().flat_map(|&t| rob_tf.iter().map(move |&tf| (t, tf))).collect();
    struct Rob {
        f0: f64,
        fd: Vec<f64>,
        tdpt: Vec<f64>,
    }
    let rob: Vec<Rob> = rob_points
        .par_iter()
        .map(|&(t, tf)| {
            let c = control(p, t, tf);
            let f0 = fid(t, tf);
            let fd = ErrorKind::ALL.iter().map(|&k| sensitivity_fd(&sim, &c, k, DEFAULT_FD_STEP).unwrap()).collect();
            let tdpt = sensitivity_tdpt(&sim, &c, &ErrorKind::ALL).unwrap().iter().map(|s| s.sensitivity).collect();
            Rob { f0, fd, tdpt }
        })
        .collect();
    let rob_at = |t: Traj, tf: f64| &rob[rob_points.iter().position(|&(a, b)| a == t && key(b) == key(tf)).unwrap()];
    {
        let mut ok = true;
        let mut parts = Vec::new();
        for family in [Family::QuasiOptimal, Family::QuasiOptimalClassical] {
            for tf in rob_tf {
                let (q, s) = (rob_at(Traj { family, esta: true }, tf).fd[0], rob_at(Traj { family, esta: false }, tf).fd[0]);
                ok &= q <= s;
                parts.push(format!("{}@{tf}: {q:.3}/{s:.3}", family.index()));
            }
        }
        report.line(5, ok, format!("correlated S(Q_j)/S(q0_j): {}", parts.join(" ")));
    }
    {
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for r in rob.iter().filter(|r| r.f0 > F_THRESHOLD) {
            for (a, b) in r.tdpt.iter().zip(&r.fd) {
                worst = worst.max((a - b).abs() / b.abs());
                count += 1;
            }
        }
        report.line(6, worst <= TDPT_REL_TOL && count > 0, format!("max |S_tdpt - S_fd|/S_fd = {worst:.2e} over {count} cases with F > 0.9 (tol 5%)"));
    }
    {
        let mut worst = f64::INFINITY;
        for family in Family::ALL {
            for tf in [1.1, 1.2, 1.3] {
                let (e, s) = (rob_at(Traj { family, esta: true }, tf), rob_at(Traj { family, esta: false }, tf));
                for k in 0..ErrorKind::ALL.len() {
                    let (be, bs) = (error_bound(e.f0, e.fd[k], F_REFERENCE), error_bound(s.f0, s.fd[k], F_REFERENCE));
                    worst = worst.min(be - bs);
                }
            }
        }
        report.line(7, worst >= 0.0, format!("min B(Q_j) - B(q0_j) over t_f in {{1.1, 1.2, 1.3}}, all kinds, j = 1..3: {worst:.4}"));
    }

    // 8
    {
        let exact: Vec<f64> = NoiseKind::ALL.iter().map(|&k| adiabatic_constant_exact(&sim, k).unwrap()).collect();
        let approx: Vec<f64> = NoiseKind::ALL.iter().map(|&k| adiabatic_constant_approx(k, &p)).collect();
        let (rp, ra, rx) = (approx[0] / exact[0], approx[1] / exact[1], exact[0] / exact[1]);
        let within = |v: f64, (c, t): (f64, f64)| (v - c).abs() <= t;
        report.line(
            8,
            within(rp, C_RATIO_POSITION) && within(ra, C_RATIO_AMPLITUDE) && within(rx, C_EXACT_RATIO),
            format!("C^P approx/exact {rp:.4} (0.964+-0.015), C^A approx/exact {ra:.4} (0.909+-0.015), C^P/C^A {rx:.3} (3.77+-0.12)"),
        );

        // 9
        let ratios: Vec<Vec<f64>> = Family::ALL
            .par_iter()
            .map(|&family| {
                let c = control(p, Traj { family, esta: false }, ADIABATIC_TF);
                let s = noise_sensitivities(&sim, &c, &NoiseKind::ALL).unwrap();
                s.iter().zip(&exact).map(|(s, c)| s / ADIABATIC_TF / c).collect()
            })
            .collect();
        let worst = ratios.iter().flatten().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        let shown: Vec<String> = ratios.iter().map(|r| format!("({:.4}, {:.4})", r[0], r[1])).collect();
        report.line(
            9,
            worst <= ADIABATIC_REL_TOL,
            format!("S_N/(t_f C) at t_f = 4 for q01..q03 (position, amplitude): {} (tol 5%)", shown.join(" ")),
        );
    }

    // 10
    {
        let c = control(p, Traj { family: Family::QuasiOptimalClassical, esta: false }, 1.2);
        let s_n = noise_sensitivities(&sim, &c, &[NoiseKind::Position]).unwrap()[0];
        // the Monte Carlo steps with plain Strang splitting; the spread
        // between integrators is counted as the S_N uncertainty
        let strang = Simulator::new(p, Numerics { integrator: Integrator::Strang, ..Numerics::default() }).unwrap();
        let s_n_strang = noise_sensitivities(&strang, &c, &[NoiseKind::Position]).unwrap()[0];
        let mc = MonteCarloConfig { realizations: MC_REALIZATIONS, eta_sq: vec![1e-4, 2e-4], seed: 20240611 };
        let est = noise_slope(&sim, &c, NoiseKind::Position, &mc).unwrap();
        let combined = (est.standard_error.powi(2) + (s_n - s_n_strang).powi(2)).sqrt();
        let z = (est.slope + s_n).abs() / combined;
        report.line(
            10,
            z <= MC_SIGMAS && est.realizations >= MC_REALIZATIONS,
            format!(
                "MC slope {:.3} +- {:.3} ({} paths) vs -S_N = {:.3}: {z:.2} combined SE (tol 2)",
                est.slope, combined, est.realizations, -s_n
            ),
        );
    }

    // 11
    {
        let tfs = [1.0, 1.2, 1.4];
        let rows: Vec<(f64, Vec<(f64, f64)>)> = tfs
            .iter()
            .map(|&tf| {
                let v = Family::ALL
                    .iter()
                    .map(|&f| {
                        let inputs = EstaInputs::for_family(f, p, tf).unwrap();
                        let r = control_deviation(&inputs, ErrorKind::Correlated, DerivativeMethod::FiniteDifference).unwrap();
                        (r.c_q, r.upper_bound)
                    })
                    .collect();
                (tf, v)
            })
            .collect();
        let ok = rows.iter().all(|(_, v)| v[0].0 > v[1].0 && v[0].0 > v[2].0 && v.iter().all(|(c, b)| b >= c));
        let shown: Vec<String> =
            rows.iter().map(|(tf, v)| format!("{tf}: {:.3}/{:.3}/{:.3}", v[0].0, v[1].0, v[2].0)).collect();
        report.line(11, ok, format!("C_Q for Q1/Q2/Q3, correlated error: {}; bound >= C_Q everywhere", shown.join(", ")));
    }

    // 12
    {
        let reference = control(p, Traj { family: Family::QuasiOptimalClassical, esta: true }, 1.2);
        let base = sim.transport(&reference, None).unwrap();
        max_drift = max_drift.max(base.norm_drift);
        let half_dt = Simulator::new(p, Numerics { dt: 0.5 * Numerics::default().dt, ..Numerics::default() }).unwrap();
        let doubled = Simulator::new(p, Numerics { grid_points: 4096, ..Numerics::default() }).unwrap();
        let d_dt = (half_dt.simulate_transport(&reference, None).unwrap() - base.fidelity).abs();
        let d_grid = (doubled.simulate_transport(&reference, None).unwrap() - base.fidelity).abs();
        let d_cn = (crank_nicolson_fidelity(&sim, &reference, CN_STEPS).unwrap() - base.fidelity).abs();
        report.line(
            12,
            max_drift < NORM_DRIFT_MAX && d_dt < REFINEMENT_TOL && d_grid < REFINEMENT_TOL && d_cn < CN_TOL,
            format!(
                "max norm drift {max_drift:.1e} over {} transports; Q3 at 1.2: dF(dt/2) {d_dt:.1e}, dF(2x grid) {d_grid:.1e}, |F_CN - F| {d_cn:.1e}",
                runs.len() + 2
            ),
        );
    }

    println!(
        "acceptance: {} of 12 criteria passed in {:.0} s",
        12 - report.failures,
        start.elapsed().as_secs_f64()
    );
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
