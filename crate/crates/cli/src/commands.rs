//! One function per subcommand. Sweeps fan out over a rayon pool and
//! collect in input order, so output files do not depend on scheduling.

use std::fs;

use anyhow::{Context as _, Result};
use esta_core::deviation::control_deviation;
use esta_core::esta::esta_trajectory;
use esta_core::noise::{adiabatic_constant_exact, noise_error_bound, noise_sensitivities};
use esta_core::robustness::{sensitivity_fd, sensitivity_tdpt, RobustnessReport};
use esta_core::units::{derive_units, nondimensionalize};
use esta_core::{ControlFunction, DimensionlessParams, EstaInputs, Simulator, SystematicError};
use esta_oracle::{noise_slope, MonteCarloConfig};
use rayon::prelude::*;

use crate::config::{SensitivityMethod, SweepConfig, TrajectorySpec};
use crate::output::{line_plot, num, Series, Table};

pub struct Context {
    pub cfg: SweepConfig,
    pub params: DimensionlessParams,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(cfg: SweepConfig) -> Result<Self> {
        let params = nondimensionalize(&derive_units(&cfg.physical)?);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
        Ok(Self { cfg, params, pool })
    }

    fn simulator(&self) -> Result<Simulator> {
        Simulator::new(self.params, self.cfg.numerics).context("preparing the lattice ground states")
    }

    fn inputs(&self, spec: TrajectorySpec, tf: f64) -> Result<EstaInputs> {
        Ok(EstaInputs::for_family_with_basis(spec.family, self.params, tf, self.cfg.basis_size)?.with_modes(self.cfg.mode_cutoff)?)
    }

    fn control(&self, spec: TrajectorySpec, tf: f64) -> Result<ControlFunction> {
        let inputs = self.inputs(spec, tf)?;
        if spec.esta {
            Ok(esta_trajectory(&inputs)?.0)
        } else {
            Ok(inputs.q0)
        }
    }

    /// Maps `f` over `points` in parallel; rows of successful points are
    /// kept in order and the first failure is returned alongside.
    fn sweep<P: Sync, R: Send>(&self, points: &[P], f: impl Fn(&P) -> Result<Vec<R>> + Sync) -> (Vec<R>, Option<anyhow::Error>) {
        let results: Vec<Result<Vec<R>>> = self.pool.install(|| points.par_iter().map(&f).collect());
        let mut rows = Vec::new();
        let mut failure = None;
        for r in results {
            match r {
                Ok(mut v) => rows.append(&mut v),
                Err(e) if failure.is_none() => failure = Some(e),
                Err(_) => {}
            }
        }
        (rows, failure)
    }

    fn out(&self, name: &str) -> Result<std::path::PathBuf> {
        fs::create_dir_all(&self.cfg.out_dir).with_context(|| format!("creating {}", self.cfg.out_dir.display()))?;
        Ok(self.cfg.out_dir.join(name))
    }

    fn write(&self, name: &str, table: &Table) -> Result<()> {
        let path = self.out(name)?;
        table.write(&path)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn plot(&self, name: &str, title: &str, x: &str, y: &str, series: &[Series]) -> Result<()> {
        if self.cfg.svg {
            let path = self.out(name)?;
            fs::write(&path, line_plot(title, x, y, series)).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn finish(failure: Option<anyhow::Error>) -> Result<()> {
    match failure {
        Some(e) => Err(e.context("sweep incomplete; rows written for the points that succeeded")),
        None => Ok(()),
    }
}

/// Groups rows into series by a label column, plotting column `y` over `x`.
fn series_by(table: &Table, label: &[usize], x: usize, y: usize) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for row in &table.rows {
        let name = label.iter().map(|&i| row[i].as_str()).collect::<Vec<_>>().join(" ");
        let point = (row[x].parse().unwrap_or(f64::NAN), row[y].parse().unwrap_or(f64::NAN));
        match out.iter_mut().find(|s| s.label == name) {
            Some(s) => s.points.push(point),
            None => out.push(Series { label: name, points: vec![point] }),
        }
    }
    out
}

pub fn units(cfg: &SweepConfig) -> Result<()> {
    let u = derive_units(&cfg.physical)?;
    let p = nondimensionalize(&u);
    let rows: [(&str, String); 14] = [
        ("mass_amu", num(cfg.physical.mass)),
        ("wavelength_nm", num(cfg.physical.wavelength)),
        ("alpha", num(cfg.physical.alpha)),
        ("distance_sites", num(cfg.physical.distance_sites)),
        ("recoil_energy_J", num(u.recoil_energy)),
        ("lattice_depth_J", num(u.lattice_depth_u0)),
        ("omega0_rad_per_s", num(u.omega0)),
        ("tau_us", format!("{:.4}", u.tau * 1e6)),
        ("sigma_nm", format!("{:.4}", u.sigma * 1e9)),
        ("u_tilde", num(u.u_tilde)),
        ("k0_sigma", num(p.wavenumber)),
        ("distance_sigma", num(p.distance)),
        ("depth_scaled", num(p.depth)),
        ("mass_scaled", num(p.mass)),
    ];
    for (k, v) in rows {
        println!("{k:<18} {v}");
    }
    Ok(())
}

pub fn trajectory(ctx: &Context) -> Result<()> {
    let tf = ctx.cfg.tf;
    let mut families: Vec<_> = ctx.cfg.trajectories.iter().map(|t| t.family).collect();
    families.sort_by_key(|f| f.index());
    families.dedup();
    for family in families {
        let inputs = ctx.inputs(TrajectorySpec { family, esta: false }, tf)?;
        let (esta, _) = esta_trajectory(&inputs)?;
        let qc = inputs.auxiliary();
        let n = ctx.cfg.samples;
        let mut table = Table::new(&["t_over_tf", "qc", "q0", "Q"]);
        for i in 0..n {
            let s = i as f64 / (n - 1) as f64;
            let t = s * tf;
            table.push(vec![num(s), num(qc.value(t)), num(inputs.q0.value(t)), num(esta.value(t))]);
        }
        let j = family.index();
        ctx.write(&format!("trajectory_{j}.csv"), &table)?;
        let series: Vec<Series> = ["qc", "q0", "Q"]
            .iter()
            .enumerate()
            .map(|(c, name)| Series {
                label: format!("{name}{j}"),
                points: table.rows.iter().map(|r| (r[0].parse().unwrap(), r[c + 1].parse().unwrap())).collect(),
            })
            .collect();
        ctx.plot(&format!("trajectory_{j}.svg"), &format!("family {j}, t_f = {tf} τ"), "t / t_f", "position (σ)", &series)?;
    }
    Ok(())
}

pub fn epsilon(ctx: &Context) -> Result<()> {
    let spec = TrajectorySpec { family: ctx.cfg.family, esta: true };
    let inputs = ctx.inputs(spec, ctx.cfg.tf)?;
    let (_, eps) = esta_trajectory(&inputs)?;
    let mut table = Table::new(&["l", "epsilon_sigma"]);
    for (l, e) in eps.values.iter().enumerate() {
        table.push(vec![(l + 1).to_string(), num(*e)]);
    }
    ctx.write("epsilon.csv", &table)?;
    let mut gn = Table::new(&["n", "re", "im"]);
    for (n, g) in eps.gn.iter().enumerate() {
        gn.push(vec![(n + 1).to_string(), num(g.re), num(g.im)]);
    }
    ctx.write("gn.csv", &gn)?;
    println!("fidelity_estimate  {}", num(eps.fidelity_estimate));
    if eps.degenerate {
        println!("warning: vanishing gradient, ε set to zero");
    }
    if !eps.time_converged {
        println!("warning: time quadrature not converged to 1e-8");
    }
    Ok(())
}

fn sweep_points(ctx: &Context) -> Vec<(f64, TrajectorySpec)> {
    ctx.cfg.tf_grid.iter().flat_map(|&tf| ctx.cfg.trajectories.iter().map(move |&s| (tf, s))).collect()
}

pub fn fidelity(ctx: &Context) -> Result<()> {
    let sim = ctx.simulator()?;
    let points = sweep_points(ctx);
    let (rows, failure) = ctx.sweep(&points, |&(tf, spec)| {
        let f = sim.simulate_transport(&ctx.control(spec, tf)?, None)?;
        Ok(vec![vec![num(tf), spec.to_string(), num(0.0), num(f)]])
    });
    let mut table = Table::new(&["tf_over_tau", "trajectory", "delta", "fidelity"]);
    table.rows = rows;
    ctx.write("fidelity.csv", &table)?;
    ctx.plot("fidelity.svg", "Fidelity", "t_f / τ", "F", &series_by(&table, &[1], 0, 3))?;
    finish(failure)
}

pub fn robustness(ctx: &Context) -> Result<()> {
    let sim = ctx.simulator()?;
    let cfg = &ctx.cfg;
    let points = sweep_points(ctx);
    let (rows, failure) = ctx.sweep(&points, |&(tf, spec)| {
        let control = ctx.control(spec, tf)?;
        let f0 = sim.simulate_transport(&control, None)?;
        let s: Vec<f64> = match cfg.sensitivity_method {
            SensitivityMethod::FiniteDifference => {
                cfg.error_kinds.iter().map(|&k| sensitivity_fd(&sim, &control, k, cfg.fd_step)).collect::<Result<_, _>>()?
            }
            SensitivityMethod::Tdpt => sensitivity_tdpt(&sim, &control, &cfg.error_kinds)?.iter().map(|t| t.sensitivity).collect(),
        };
        Ok(cfg
            .error_kinds
            .iter()
            .zip(s)
            .map(|(k, s)| {
                let r = RobustnessReport::new(f0, s, cfg.f_reference);
                vec![num(tf), spec.to_string(), k.to_string(), num(f0), num(r.sensitivity), num(r.bound)]
            })
            .collect())
    });
    let mut table = Table::new(&["tf_over_tau", "trajectory", "error_kind", "F0", "S", "B"]);
    table.rows = rows;
    ctx.write("robustness.csv", &table)?;
    ctx.plot("robustness.svg", "Sensitivity", "t_f / τ", "S", &series_by(&table, &[1, 2], 0, 4))?;
    ctx.plot("bound.svg", "Error bound", "t_f / τ", "B", &series_by(&table, &[1, 2], 0, 5))?;
    if failure.is_some() {
        return finish(failure);
    }

    let tf = cfg.delta_tf;
    for &kind in &cfg.error_kinds {
        let points: Vec<(TrajectorySpec, f64)> =
            cfg.trajectories.iter().flat_map(|&s| cfg.delta_grid.iter().map(move |&d| (s, d))).collect();
        let (rows, failure) = ctx.sweep(&points, |&(spec, delta)| {
            let err = SystematicError::new(kind, delta)?;
            let f = sim.simulate_transport(&ctx.control(spec, tf)?, Some(&err))?;
            Ok(vec![vec![num(tf), spec.to_string(), num(delta), num(f)]])
        });
        let mut table = Table::new(&["tf_over_tau", "trajectory", "delta", "fidelity"]);
        table.rows = rows;
        ctx.write(&format!("fidelity_delta_{kind}.csv"), &table)?;
        ctx.plot(&format!("fidelity_delta_{kind}.svg"), &format!("{kind} error at t_f = {tf} τ"), "δ", "F", &series_by(&table, &[1], 2, 3))?;
        finish(failure)?;
    }
    Ok(())
}

pub fn noise(ctx: &Context) -> Result<()> {
    let sim = ctx.simulator()?;
    let cfg = &ctx.cfg;
    let points = sweep_points(ctx);
    let constants = cfg.noise_kinds.iter().map(|&k| adiabatic_constant_exact(&sim, k)).collect::<Result<Vec<_>, _>>()?;
    for (k, c) in cfg.noise_kinds.iter().zip(&constants) {
        println!("adiabatic_constant_{k:<10} {}", num(*c));
    }
    let (rows, failure) = ctx.sweep(&points, |&(tf, spec)| {
        let control = ctx.control(spec, tf)?;
        let f0 = sim.simulate_transport(&control, None)?;
        let s = noise_sensitivities(&sim, &control, &cfg.noise_kinds)?;
        Ok(cfg
            .noise_kinds
            .iter()
            .zip(s)
            .map(|(k, s)| vec![num(tf), spec.to_string(), k.to_string(), num(f0), num(s), num(noise_error_bound(f0, s, cfg.f_reference))])
            .collect())
    });
    let mut table = Table::new(&["tf_over_tau", "trajectory", "noise_kind", "F0", "S_N", "B_N"]);
    table.rows = rows;
    ctx.write("noise.csv", &table)?;
    ctx.plot("noise.svg", "Noise sensitivity", "t_f / τ", "S_N", &series_by(&table, &[1, 2], 0, 4))?;
    ctx.plot("noise_bound.svg", "Noise error bound", "t_f / τ", "B_N", &series_by(&table, &[1, 2], 0, 5))?;
    finish(failure)?;

    if cfg.mc_realizations > 0 {
        let mc_points: Vec<(usize, (f64, TrajectorySpec), esta_core::NoiseKind)> = points
            .iter()
            .flat_map(|&p| cfg.noise_kinds.iter().map(move |&k| (p, k)))
            .enumerate()
            .map(|(i, (p, k))| (i, p, k))
            .collect();
        let (rows, failure) = ctx.sweep(&mc_points, |&(i, (tf, spec), kind)| {
            let mc = MonteCarloConfig {
                realizations: cfg.mc_realizations,
                seed: cfg.seed.wrapping_add(i as u64),
                ..MonteCarloConfig::default()
            };
            let est = noise_slope(&sim, &ctx.control(spec, tf)?, kind, &mc)?;
            Ok(vec![vec![
                num(tf),
                spec.to_string(),
                kind.to_string(),
                num(-est.slope),
                num(est.standard_error),
                est.realizations.to_string(),
            ]])
        });
        let mut table = Table::new(&["tf_over_tau", "trajectory", "noise_kind", "S_N_mc", "standard_error", "realizations"]);
        table.rows = rows;
        ctx.write("noise_mc.csv", &table)?;
        finish(failure)?;
    }
    Ok(())
}

pub fn deviation(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let points = sweep_points(ctx);
    let (rows, failure) = ctx.sweep(&points, |&(tf, spec)| {
        if !spec.esta {
            // C_Q measures the eSTA correction; STA rows carry only the STA term
            let inputs = ctx.inputs(spec, tf)?;
            let r = esta_core::deviation::deviation_from(&inputs, cfg.deviation_kind, vec![0.0; inputs.basis.len()]);
            return Ok(vec![vec![num(tf), spec.to_string(), num(r.c_q), num(r.upper_bound)]]);
        }
        let r = control_deviation(&ctx.inputs(spec, tf)?, cfg.deviation_kind, cfg.derivative_method)?;
        Ok(vec![vec![num(tf), spec.to_string(), num(r.c_q), num(r.upper_bound)]])
    });
    let mut table = Table::new(&["tf_over_tau", "trajectory", "c_q", "c_q_upper_bound"]);
    table.rows = rows;
    ctx.write("deviation.csv", &table)?;
    let mut series = series_by(&table, &[1], 0, 2);
    for s in series_by(&table, &[1], 0, 3) {
        series.push(Series { label: format!("{} bound", s.label), points: s.points });
    }
    ctx.plot("deviation.svg", &format!("Control deviation ({} error)", cfg.deviation_kind), "t_f / τ", "C_Q", &series)?;
    finish(failure)
}
