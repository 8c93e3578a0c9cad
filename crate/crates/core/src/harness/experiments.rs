use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Experiment, Identity, ModelKind, ScenarioConfig};
use super::Outcome;
use crate::dnmap::{
    alessandrini_residual, dn_matrix_linear, dn_pairing, nonlinear_integral_identity_residual,
    self_adjointness_residual, IdentityCheck,
};
use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::fraclap::{assemble_fraclap, FracLapOperator};
use crate::grid::{Grid, Window};
use crate::inversion::{
    estimate_homogeneity_exponent, ground_state_target, normalized_drives,
    recover_linear_potential, recover_nonlinear_coefficient, window_basis, LinearInversionConfig,
    NonlinearInversionSetup, NonlinearModel, RungeProblem, TimeWindow,
};
use crate::nemytskii::{exponent_warnings, power_nonlinearity, Nonlinearity};
use crate::solver::{
    energy_ledger, mechanical_energy, ExteriorControl, ForwardProblem, NewtonOptions,
};
use crate::time::TimeGrid;

pub(crate) fn run(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::default();
    match cfg.experiment {
        Experiment::Forward => forward(cfg, out, &mut o)?,
        Experiment::EnergyCheck => energy_check(cfg, out, &mut o)?,
        Experiment::IdentityCheck => identity_check(cfg, out, &mut o)?,
        Experiment::Runge => runge(cfg, out, &mut o)?,
        Experiment::InvertLinear => invert_linear(cfg, out, &mut o)?,
        Experiment::InvertNonlinear => invert_nonlinear(cfg, out, &mut o)?,
    }
    Ok(o)
}

struct Setup {
    op: FracLapOperator,
    time: TimeGrid,
}

impl Setup {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let grid = Arc::new(cfg.grid.build()?);
        Ok(Self {
            op: assemble_fraclap(grid, cfg.s)?,
            time: TimeGrid::new(cfg.dt, cfg.t_final)?,
        })
    }

    fn grid(&self) -> &Grid {
        &self.op.grid
    }
}

/// Refined copy of the scenario at `level`: `dt / 2^level`, and optionally
/// `h / 2^level` on the same box.
fn refined(cfg: &ScenarioConfig, level: usize) -> ScenarioConfig {
    let mut c = cfg.clone();
    let k = 1usize << level;
    c.dt = cfg.dt / k as f64;
    if cfg.refine.space {
        c.grid.n_nodes = (cfg.grid.n_nodes - 1) * k + 1;
    }
    c
}

/// `amp sin^2` bump across the window times `sin^4(pi t / t_a)` on `[0, t_a]`.
fn bump_control(
    grid: &Grid,
    time: &TimeGrid,
    window: Window,
    amp: f64,
    active: f64,
) -> Result<ExteriorControl> {
    let nodes = grid.window(window);
    let lo = grid.x(nodes[0]) - grid.h;
    let len = grid.x(nodes[nodes.len() - 1]) + grid.h - lo;
    let ta = active * time.t_final();
    ExteriorControl::from_fn(grid, time, window, |x, t| {
        if t >= ta {
            0.0
        } else {
            amp * (PI * (x - lo) / len).sin().powi(2) * (PI * t / ta).sin().powi(4)
        }
    })
}

fn nonlinearity(cfg: &ScenarioConfig, grid: &Grid, o: &mut Outcome) -> Result<Nonlinearity> {
    let f = power_nonlinearity(cfg.model.profile_values(grid), cfg.model.r)?;
    for w in exponent_warnings(cfg.s, &f) {
        o.warn(w);
    }
    Ok(f)
}

fn max_abs_on(grid: &Grid, f: &SpaceTimeField) -> f64 {
    f.rows()
        .flat_map(|row| grid.omega.iter().map(move |&i| row[i].abs()))
        .fold(0.0, f64::max)
}

fn csv_line(vals: &[f64]) -> String {
    let mut s = vals
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    s
}

fn forward(cfg: &ScenarioConfig, out: &Path, o: &mut Outcome) -> Result<()> {
    let st = Setup::new(cfg)?;
    let grid = st.grid();
    let control = bump_control(
        grid,
        &st.time,
        Window::W1,
        cfg.control.amplitude,
        cfg.control.active_fraction,
    )?;
    let probe = bump_control(grid, &st.time, Window::W2, 1.0, 1.0)?;
    let (traj, f);
    match cfg.model.kind {
        ModelKind::Linear => {
            let q = cfg.model.potential(grid, &st.time);
            traj = ForwardProblem::new(&st.op, st.time)
                .potential(&q)
                .control(&control)
                .solve()?;
        }
        ModelKind::Nonlinear => {
            f = nonlinearity(cfg, grid, o)?;
            traj = ForwardProblem::new(&st.op, st.time)
                .nonlinearity(&f)
                .control(&control)
                .newton(NewtonOptions::default())
                .solve()?;
            o.metric(
                "newton_iters_max",
                traj.newton_iters.iter().copied().max().unwrap_or(0) as f64,
            );
            o.metric(
                "newton_iters_total",
                traj.newton_iters.iter().sum::<usize>() as f64,
            );
        }
    }
    o.metric("max_abs_u", max_abs_on(grid, &traj.u));
    o.metric("max_abs_v", max_abs_on(grid, &traj.v));
    let energy = mechanical_energy(&st.op, &traj);
    o.metric("final_energy", *energy.last().unwrap_or(&0.0));
    o.metric("dn_pairing", dn_pairing(&st.op, &traj, &probe)?);
    let mut buf = Vec::new();
    traj.write_csv(grid, &mut buf)?;
    o.write(out, "trajectory.csv", buf)
}

fn energy_check(cfg: &ScenarioConfig, out: &Path, o: &mut Outcome) -> Result<()> {
    let mut residuals = Vec::new();
    for level in 0..cfg.refine.levels {
        let c = refined(cfg, level);
        let st = Setup::new(&c)?;
        let grid = st.grid();
        let (a, b) = (grid.omega_lo, grid.omega_hi);
        let u0: Vec<f64> = (0..grid.n_nodes)
            .map(|i| {
                if grid.is_omega(i) {
                    (PI * (grid.x(i) - a) / (b - a)).sin().powi(2)
                } else {
                    0.0
                }
            })
            .collect();
        let v0 = vec![0.0; grid.n_nodes];
        let q = c.model.potential(grid, &st.time);
        let source = SpaceTimeField::zeros(st.time.n_times(), grid.n_nodes);
        let traj = ForwardProblem::new(&st.op, st.time)
            .potential(&q)
            .initial(&u0, &v0)
            .solve()?;
        let ledger = energy_ledger(&st.op, &traj, &q, &source)?;
        let rel = ledger.max_relative();
        o.metric(format!("max_relative_residual_l{level}"), rel);
        residuals.push(rel);
        if level == 0 {
            let mut s = String::from("t,energy,dissipation,residual\n");
            for n in 0..st.time.n_times() {
                s.push_str(&csv_line(&[
                    st.time.t(n),
                    ledger.energy[n],
                    ledger.dissipation[n],
                    ledger.residual[n],
                ]));
            }
            o.write(out, "energy_ledger.csv", s)?;
            o.metric("max_relative_residual", rel);
        }
    }
    let finest = *residuals.last().unwrap_or(&0.0);
    o.at_most("finest_relative_residual", finest, 1e-3);
    if residuals.len() >= 2 {
        let n = residuals.len();
        let order = (residuals[n - 2] / residuals[n - 1]).log2();
        o.metric("refinement_order", order);
        o.thresholds.insert("refinement_order_min".into(), 1.7);
        o.thresholds.insert("refinement_order_max".into(), 2.3);
        o.check((order - 2.0).abs() <= 0.3);
    }
    Ok(())
}

fn identity_check(cfg: &ScenarioConfig, out: &Path, o: &mut Outcome) -> Result<()> {
    let identity = cfg
        .identity
        .ok_or_else(|| Error::Config("identity-check needs `identity`".into()))?;
    let mut checks: Vec<IdentityCheck> = Vec::new();
    let mut table = String::from("level,dt,n_nodes,lhs,rhs,residual,relative,at_roundoff\n");
    for level in 0..cfg.refine.levels {
        let c = refined(cfg, level);
        let st = Setup::new(&c)?;
        let grid = st.grid();
        let phi1 = bump_control(
            grid,
            &st.time,
            Window::W1,
            c.control.amplitude,
            c.control.active_fraction,
        )?;
        let phi2 = bump_control(grid, &st.time, Window::W2, 1.0, c.control.active_fraction)?;
        let check = match identity {
            Identity::SelfAdjoint => {
                let q = c.model.potential(grid, &st.time);
                self_adjointness_residual(&st.op, &q, &phi1, &phi2, st.time)?
            }
            Identity::Alessandrini => {
                let q1 = c.model.potential(grid, &st.time);
                let q2 = SpaceTimeField::zeros(st.time.n_times(), grid.n_nodes);
                alessandrini_residual(&st.op, &q1, &q2, &phi1, &phi2, st.time)?
            }
            Identity::NonlinearIntegral => {
                let f1 = nonlinearity(&c, grid, o)?;
                let f2 = power_nonlinearity(vec![0.0; grid.n_nodes], c.model.r)?;
                nonlinear_integral_identity_residual(
                    &st.op,
                    &f1,
                    &f2,
                    &phi1,
                    &phi2,
                    st.time,
                    NewtonOptions::default(),
                )?
            }
        };
        o.metric(format!("relative_residual_l{level}"), check.relative());
        table.push_str(&format!(
            "{level},{:e},{},{:e},{:e},{:e},{:e},{}\n",
            c.dt,
            grid.n_nodes,
            check.lhs,
            check.rhs,
            check.residual,
            check.relative(),
            check.at_roundoff()
        ));
        checks.push(check);
    }
    o.write(out, "identity.csv", table)?;
    let Some(last) = checks.last().copied() else {
        return Ok(());
    };
    o.metric("lhs", last.lhs);
    o.metric("rhs", last.rhs);
    o.metric("residual", last.residual);
    o.metric("at_roundoff", if last.at_roundoff() { 1.0 } else { 0.0 });
    let limit = if identity == Identity::SelfAdjoint {
        1e-3
    } else {
        1e-2
    };
    o.at_most("relative_residual", last.relative(), limit);
    if checks.len() >= 2 {
        let prev = checks[checks.len() - 2];
        let min_order = if identity == Identity::SelfAdjoint {
            1.0
        } else {
            0.0
        };
        o.thresholds
            .insert("refinement_order_min".into(), min_order);
        let order = (prev.residual / last.residual).log2();
        if order.is_finite() {
            o.metric("refinement_order", order);
        }
        if last.at_roundoff() {
            o.warn("finest residual is at rounding level; the refinement order measures rounding noise".into());
            o.check(true);
        } else {
            o.check(if min_order > 0.0 {
                order >= min_order
            } else {
                order > 0.0
            });
        }
    }
    Ok(())
}

fn runge(cfg: &ScenarioConfig, out: &Path, o: &mut Outcome) -> Result<()> {
    let st = Setup::new(cfg)?;
    let grid = st.grid();
    let target = ground_state_target(&st.op, &st.time);
    let q = match cfg.model.kind {
        ModelKind::Linear => cfg.model.potential(grid, &st.time),
        ModelKind::Nonlinear => SpaceTimeField::zeros(st.time.n_times(), grid.n_nodes),
    };
    let mut table = String::from("intervals,basis_dim,achieved_error,relative_error\n");
    let mut errors = Vec::new();
    for &m in &cfg.runge.levels {
        let prob = RungeProblem {
            target: target.clone(),
            window: Window::W1,
            alpha: cfg.runge.alpha,
            time_intervals: m,
        };
        let res = crate::inversion::synthesize_control(&st.op, &q, &prob, st.time)?;
        o.metric(format!("relative_error_m{m}"), res.relative_error);
        o.metric(format!("achieved_error_m{m}"), res.achieved_error);
        table.push_str(&format!(
            "{m},{},{:e},{:e}\n",
            prob.basis_dim(grid),
            res.achieved_error,
            res.relative_error
        ));
        errors.push(res.relative_error);
    }
    o.write(out, "runge.csv", table)?;
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    o.metric("monotone", if monotone { 1.0 } else { 0.0 });
    o.check(monotone);
    if let Some(&last) = errors.last() {
        o.at_most("final_relative_error", last, 0.2);
    }
    Ok(())
}

/// Target windows from the config, or `K` overlapping windows tiling the
/// horizon for `K` time knots.
fn target_windows(cfg: &ScenarioConfig, knots: usize) -> Vec<TimeWindow> {
    if !cfg.inversion.windows.is_empty() {
        return cfg
            .inversion
            .windows
            .iter()
            .map(|w| TimeWindow {
                center: w[0],
                half_width: w[1],
            })
            .collect();
    }
    let w = cfg.t_final / (knots + 1) as f64;
    (1..=knots)
        .map(|k| TimeWindow {
            center: k as f64 * w,
            half_width: w,
        })
        .collect()
}

fn invert_linear(cfg: &ScenarioConfig, out: &Path, o: &mut Outcome) -> Result<()> {
    let st = Setup::new(cfg)?;
    let grid = st.grid();
    let m = cfg.runge.intervals;
    let controls = window_basis(grid, &st.time, Window::W1, m)?;
    let probes = window_basis(grid, &st.time, Window::W2, m)?;
    let q = cfg.model.potential(grid, &st.time);
    let zero = SpaceTimeField::zeros(st.time.n_times(), grid.n_nodes);
    let mut data = dn_matrix_linear(&st.op, &q, &controls, &probes, st.time)?;
    let background = dn_matrix_linear(&st.op, &zero, &controls, &probes, st.time)?;
    if cfg.inversion.noise > 0.0 {
        let spread = data
            .pairings
            .iter()
            .zip(&background.pairings)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        let normal = Normal::new(0.0, cfg.inversion.noise * spread)
            .map_err(|e| Error::Config(format!("noise level: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for row in &mut data.pairings {
            for v in row {
                *v += normal.sample(&mut rng);
            }
        }
        o.metric("noise_std", cfg.inversion.noise * spread);
    }
    o.write(out, "dn_record.json", data.to_json()?)?;
    o.write(out, "dn_background.json", background.to_json()?)?;
    let knots = cfg.inversion.time_knots;
    let inv = LinearInversionConfig {
        targets: target_windows(cfg, knots),
        alpha_runge: cfg.runge.alpha,
        alpha_inv: cfg.inversion.alpha,
        time_knots: knots,
    };
    let rec = recover_linear_potential(&data, &background, &st.op, &inv)?;
    let err = rec.relative_error(&q, &st.time);
    o.metric(
        "relative_error_time_reversed",
        rec.relative_error(&q.reversed(), &st.time),
    );
    o.metric("residual_norm", rec.diagnostics.residual_norm);
    o.metric("runge_error_mean", rec.diagnostics.runge_error_mean);
    o.metric("runge_error_max", rec.diagnostics.runge_error_max);
    o.metric("n_measurements", rec.diagnostics.n_measurements as f64);
    o.metric("n_unknowns", rec.diagnostics.n_unknowns as f64);
    o.at_most("relative_error", err, if knots == 1 { 0.10 } else { 0.15 });
    o.write(out, "reconstruction.json", rec.to_json()?)?;
    let mut buf = Vec::new();
    rec.write_csv(&q, &st.time, &mut buf)?;
    o.write(out, "reconstruction.csv", buf)
}

fn invert_nonlinear(cfg: &ScenarioConfig, out: &Path, o: &mut Outcome) -> Result<()> {
    let st = Setup::new(cfg)?;
    let grid = st.grid();
    let inv = &cfg.inversion;
    let f = nonlinearity(cfg, grid, o)?;
    let model = NonlinearModel {
        op: &st.op,
        f: &f,
        time: st.time,
        newton: NewtonOptions::default(),
    };
    let drives = normalized_drives(&st.op, &st.time, inv.drive_bumps, cfg.runge.intervals)?;
    let probes = window_basis(grid, &st.time, Window::W2, cfg.runge.intervals)?;
    let pick = |list: &[ExteriorControl], k: usize, what: &str| {
        list.get(k).cloned().ok_or_else(|| {
            Error::Config(format!(
                "{what} index {k} exceeds the basis size {}",
                list.len()
            ))
        })
    };
    let psi = pick(&drives, inv.exponent_drive, "exponent_drive")?;
    let phi2 = pick(&probes, inv.exponent_probe, "exponent_probe")?;
    let est = estimate_homogeneity_exponent(&st.op, &model, &psi, &phi2, &inv.eps_list, st.time)?;
    o.write(out, "exponent.json", serde_json::to_string_pretty(&est)?)?;
    o.at_most("r_error", (est.r_est - cfg.model.r).abs(), 0.1);
    o.metric("r_est", est.r_est);
    let r = if inv.use_estimated_r {
        est.r_est
    } else {
        cfg.model.r
    };
    let setup = NonlinearInversionSetup {
        drives,
        probes,
        targets: target_windows(cfg, 1),
        alpha_runge: cfg.runge.alpha,
    };
    let rec =
        recover_nonlinear_coefficient(&st.op, &model, r, &setup, inv.eps0, inv.alpha, st.time)?;
    let truth =
        SpaceTimeField::constant_in_time(st.time.n_times(), &cfg.model.profile_values(grid));
    o.metric("residual_norm", rec.diagnostics.residual_norm);
    o.metric(
        "covered_nodes",
        rec.covered.iter().filter(|c| **c).count() as f64,
    );
    o.metric("runge_error_mean", rec.diagnostics.runge_error_mean);
    o.at_most("relative_error", rec.relative_error(&truth, &st.time), 0.15);
    if inv.check_wrong_r {
        for (name, dr) in [("residual_r_minus", -0.5), ("residual_r_plus", 0.5)] {
            let rr = r + dr;
            if rr > 0.0 {
                let wrong = recover_nonlinear_coefficient(
                    &st.op, &model, rr, &setup, inv.eps0, inv.alpha, st.time,
                )?;
                o.metric(name, wrong.diagnostics.residual_norm);
            }
        }
    }
    o.write(out, "reconstruction.json", rec.to_json()?)?;
    let mut buf = Vec::new();
    rec.write_csv(&truth, &st.time, &mut buf)?;
    o.write(out, "reconstruction.csv", buf)
}
