//! Control synthesis and inverse recovery from DN data.
//!
//! Controls are expanded in window-node x cubic B-spline bases. Runge
//! synthesis fits background states to interior targets in the discrete
//! `L^2(0,T; H^s)` norm. Potentials are recovered from the integral identity
//! with background (Born) states; power-law coefficients from the leading
//! term of the DN data in the small-amplitude limit.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dnmap::{pairings, DNRecord, TimeReverse};
use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::fraclap::FracLapOperator;
use crate::grid::{Grid, Window};
use crate::nemytskii::Nonlinearity;
use crate::solver::{ExteriorControl, ForwardProblem, NewtonOptions};
use crate::time::TimeGrid;

/// Uniform cubic B-spline with support `[0, 4]` in the scaled variable.
fn cubic_bspline(u: f64) -> f64 {
    if !(0.0..4.0).contains(&u) {
        0.0
    } else if u < 1.0 {
        u * u * u / 6.0
    } else if u < 2.0 {
        (-3.0 * u * u * u + 12.0 * u * u - 12.0 * u + 4.0) / 6.0
    } else if u < 3.0 {
        (3.0 * u * u * u - 24.0 * u * u + 60.0 * u - 44.0) / 6.0
    } else {
        (4.0 - u).powi(3) / 6.0
    }
}

/// Cubic B-splines on `intervals` uniform knot intervals over `[0, T]`,
/// keeping the `intervals - 3` whose support lies inside the horizon. Each
/// vanishes with its first two derivatives at both ends.
pub fn time_bsplines(time: &TimeGrid, intervals: usize) -> Result<Vec<Vec<f64>>> {
    if intervals < 4 {
        return Err(Error::Domain(format!(
            "need at least 4 knot intervals for an interior cubic spline, got {intervals}"
        )));
    }
    if intervals > time.n_steps {
        return Err(Error::Domain(format!(
            "{intervals} knot intervals exceed the {} time steps",
            time.n_steps
        )));
    }
    let width = time.t_final() / intervals as f64;
    Ok((0..intervals - 3)
        .map(|j| {
            (0..time.n_times())
                .map(|n| cubic_bspline(time.t(n) / width - j as f64))
                .collect()
        })
        .collect())
}

/// Window-node x time-spline control basis, node-major.
pub fn window_basis(
    grid: &Grid,
    time: &TimeGrid,
    window: Window,
    intervals: usize,
) -> Result<Vec<ExteriorControl>> {
    let splines = time_bsplines(time, intervals)?;
    let mut out = Vec::with_capacity(grid.window(window).len() * splines.len());
    for &i in grid.window(window) {
        for b in &splines {
            let mut values = SpaceTimeField::zeros(time.n_times(), grid.n_nodes);
            for (n, &bn) in b.iter().enumerate() {
                values.set(n, i, bn);
            }
            out.push(ExteriorControl::new(grid, values, window)?);
        }
    }
    Ok(out)
}

/// `sum_n w_n dt h a(t_n)^T L b(t_n)`.
pub fn l2_hs_inner(
    op: &FracLapOperator,
    time: &TimeGrid,
    a: &SpaceTimeField,
    b: &SpaceTimeField,
) -> f64 {
    (0..time.n_times())
        .map(|n| time.weight(n) * op.form(a.row(n), b.row(n)))
        .sum::<f64>()
        * time.dt
}

pub fn l2_hs_norm(op: &FracLapOperator, time: &TimeGrid, a: &SpaceTimeField) -> f64 {
    l2_hs_inner(op, time, a, a).max(0.0).sqrt()
}

/// `sum_n w_n dt h a(t_n)^T b(t_n)`.
pub fn l2_inner(grid: &Grid, time: &TimeGrid, a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    (0..time.n_times())
        .map(|n| {
            time.weight(n)
                * a.row(n)
                    .iter()
                    .zip(b.row(n))
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
        })
        .sum::<f64>()
        * time.dt
        * grid.h
}

/// Smooth window in time, `cos^2(pi (t - c) / (2 w))` on `|t - c| < w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub center: f64,
    pub half_width: f64,
}

impl TimeWindow {
    pub fn eval(&self, t: f64) -> f64 {
        let z = (t - self.center) / self.half_width;
        if z.abs() >= 1.0 {
            0.0
        } else {
            (0.5 * std::f64::consts::PI * z).cos().powi(2)
        }
    }
}

/// Nodal hat at every omega node times every time window.
pub fn localized_targets(
    grid: &Grid,
    time: &TimeGrid,
    windows: &[TimeWindow],
) -> Vec<SpaceTimeField> {
    let mut out = Vec::with_capacity(grid.omega.len() * windows.len());
    for w in windows {
        for &i in &grid.omega {
            let mut f = SpaceTimeField::zeros(time.n_times(), grid.n_nodes);
            for n in 0..time.n_times() {
                f.set(n, i, w.eval(time.t(n)));
            }
            out.push(f);
        }
    }
    out
}

/// Lowest eigenmode of the omega block, scaled to maximum 1, times
/// `sin^2(pi t / T)`.
pub fn ground_state_target(op: &FracLapOperator, time: &TimeGrid) -> SpaceTimeField {
    let eig = SymmetricEigen::new(op.omega_block());
    let k = (0..eig.eigenvalues.len())
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap_or(0);
    let mode = eig.eigenvectors.column(k);
    let peak = mode
        .iter()
        .copied()
        .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    let mut f = SpaceTimeField::zeros(time.n_times(), op.n_nodes());
    let tf = time.t_final();
    for n in 0..time.n_times() {
        let s = (std::f64::consts::PI * time.t(n) / tf).sin().powi(2);
        for (a, &i) in op.grid.omega.iter().enumerate() {
            f.set(n, i, s * mode[a] / peak);
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungeProblem {
    pub target: SpaceTimeField,
    pub window: Window,
    pub alpha: f64,
    /// Knot intervals of the time B-spline basis.
    pub time_intervals: usize,
}

impl RungeProblem {
    pub fn basis_dim(&self, grid: &Grid) -> usize {
        grid.window(self.window).len() * self.time_intervals.saturating_sub(3)
    }
}

#[derive(Debug, Clone)]
pub struct RungeResult {
    pub control: ExteriorControl,
    pub coefficients: Vec<f64>,
    /// State error in the discrete `L^2(0,T; H^s)` norm.
    pub achieved_error: f64,
    pub relative_error: f64,
    /// Interior part `u - phi` of the synthesized state.
    pub state: SpaceTimeField,
}

/// Background states of a control basis with the regularized normal
/// equations factored once for many targets.
pub struct RungeSynthesizer<'a> {
    op: &'a FracLapOperator,
    time: TimeGrid,
    basis: Vec<ExteriorControl>,
    states: Vec<SpaceTimeField>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    pub alpha: f64,
}

impl<'a> RungeSynthesizer<'a> {
    pub fn new(
        op: &'a FracLapOperator,
        q_background: Option<&SpaceTimeField>,
        basis: Vec<ExteriorControl>,
        alpha: f64,
        time: TimeGrid,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!(
                "Runge weight must be positive, got {alpha}"
            )));
        }
        if basis.is_empty() {
            return Err(Error::Domain("empty control basis".into()));
        }
        let grid = &op.grid;
        let states = basis
            .par_iter()
            .enumerate()
            .map(|(index, c)| {
                let mut p = ForwardProblem::new(op, time).control(c);
                if let Some(q) = q_background {
                    p = p.potential(q);
                }
                p.solve()
                    .map(|traj| interior_part(grid, &traj.u))
                    .map_err(|e| Error::ForwardSolve {
                        index,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>>>()?;

        let k = basis.len();
        let omega = &grid.omega;
        let l_oo = op.omega_block();
        let nt = time.n_times();
        // lifted[k][n] = L_OO e_k(t_n) restricted to omega
        let lifted: Vec<Vec<DVector<f64>>> = states
            .par_iter()
            .map(|st| {
                (0..nt)
                    .map(|n| {
                        &l_oo
                            * DVector::from_iterator(
                                omega.len(),
                                omega.iter().map(|&i| st.get(n, i)),
                            )
                    })
                    .collect()
            })
            .collect();
        let scale = time.dt * grid.h;
        let rows: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|a| {
                (0..k)
                    .map(|b| {
                        let mut acc = 0.0;
                        for n in 0..nt {
                            let s: f64 = omega
                                .iter()
                                .enumerate()
                                .map(|(p, &i)| states[a].get(n, i) * lifted[b][n][p])
                                .sum();
                            acc += time.weight(n) * s;
                        }
                        acc * scale
                    })
                    .collect()
            })
            .collect();
        let mut gram = DMatrix::from_fn(k, k, |a, b| rows[a][b]);
        gram = (&gram + gram.transpose()) * 0.5;
        let control_gram = DMatrix::from_fn(k, k, |a, b| {
            l2_inner(grid, &time, &basis[a].values, &basis[b].values)
        });
        let normal = &gram + control_gram * alpha;
        let chol = Cholesky::new(normal.clone()).ok_or_else(|| Error::IllConditioned {
            condition: condition_estimate(&normal),
        })?;
        Ok(Self {
            op,
            time,
            basis,
            states,
            gram,
            chol,
            alpha,
        })
    }

    pub fn basis(&self) -> &[ExteriorControl] {
        &self.basis
    }

    pub fn states(&self) -> &[SpaceTimeField] {
        &self.states
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn synthesize(&self, target: &SpaceTimeField) -> Result<RungeResult> {
        let grid = &self.op.grid;
        target.check_shape(self.time.n_times(), grid.n_nodes, "Runge target")?;
        for n in 0..target.n_times {
            if let Some(i) =
                (0..grid.n_nodes).find(|&i| target.get(n, i) != 0.0 && !grid.is_omega(i))
            {
                return Err(Error::Domain(format!(
                    "Runge target is nonzero at exterior node {i}"
                )));
            }
        }
        let rhs = DVector::from_iterator(
            self.basis.len(),
            self.states
                .iter()
                .map(|st| l2_hs_inner(self.op, &self.time, st, target)),
        );
        let c = self.chol.solve(&rhs);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned {
                condition: f64::INFINITY,
            });
        }
        let mut state = SpaceTimeField::zeros(target.n_times, target.n_nodes);
        let mut control = SpaceTimeField::zeros(target.n_times, target.n_nodes);
        for (k, &ck) in c.iter().enumerate() {
            if ck == 0.0 {
                continue;
            }
            for (d, s) in state.data.iter_mut().zip(&self.states[k].data) {
                *d += ck * s;
            }
            for (d, s) in control.data.iter_mut().zip(&self.basis[k].values.data) {
                *d += ck * s;
            }
        }
        let achieved = l2_hs_norm(self.op, &self.time, &state.sub(target));
        let norm = l2_hs_norm(self.op, &self.time, target);
        let window = self.basis[0].window;
        Ok(RungeResult {
            control: ExteriorControl::new(grid, control, window)?,
            coefficients: c.iter().copied().collect(),
            achieved_error: achieved,
            relative_error: if norm > 0.0 { achieved / norm } else { 0.0 },
            state,
        })
    }
}

fn interior_part(grid: &Grid, u: &SpaceTimeField) -> SpaceTimeField {
    let mut out = SpaceTimeField::zeros(u.n_times, u.n_nodes);
    for n in 0..u.n_times {
        for &i in &grid.omega {
            out.set(n, i, u.get(n, i));
        }
    }
    out
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Runge synthesis over the window-node x B-spline basis.
pub fn synthesize_control(
    op: &FracLapOperator,
    q_background: &SpaceTimeField,
    prob: &RungeProblem,
    time: TimeGrid,
) -> Result<RungeResult> {
    let basis = window_basis(&op.grid, &time, prob.window, prob.time_intervals)?;
    RungeSynthesizer::new(op, Some(q_background), basis, prob.alpha, time)?.synthesize(&prob.target)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Mean and max relative Runge errors over synthesized targets.
    pub runge_error_mean: f64,
    pub runge_error_max: f64,
    pub alpha_runge: f64,
    pub alpha_inv: f64,
    /// `|K q - m| / |m|` of the final linear system.
    pub residual_norm: f64,
    pub n_measurements: usize,
    pub n_unknowns: usize,
    pub model: String,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

/// Recovered coefficient on omega, piecewise linear in time between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub node_coords: Vec<f64>,
    pub nodes: Vec<usize>,
    pub time_knots: Vec<f64>,
    /// `q_est[k][a]` at knot `k` and omega node `a`; `None` where not recovered.
    pub q_est: Vec<Vec<Option<f64>>>,
    pub covered: Vec<bool>,
    pub r_est: Option<f64>,
    pub diagnostics: Diagnostics,
}

fn hat_weights(knots: &[f64], t: f64) -> Vec<f64> {
    let k = knots.len();
    if k == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; k];
    for a in 0..k - 1 {
        let (t0, t1) = (knots[a], knots[a + 1]);
        if t >= t0 && t <= t1 {
            let s = (t - t0) / (t1 - t0);
            w[a] = 1.0 - s;
            w[a + 1] = s;
            break;
        }
    }
    w
}

impl Reconstruction {
    /// Estimate on the full grid and time grid; unrecovered nodes are 0.
    pub fn field(&self, n_nodes: usize, time: &TimeGrid) -> SpaceTimeField {
        let mut f = SpaceTimeField::zeros(time.n_times(), n_nodes);
        for n in 0..time.n_times() {
            let w = hat_weights(&self.time_knots, time.t(n));
            for (a, &i) in self.nodes.iter().enumerate() {
                let v: f64 = w
                    .iter()
                    .zip(&self.q_est)
                    .map(|(wk, row)| wk * row[a].unwrap_or(0.0))
                    .sum();
                f.set(n, i, v);
            }
        }
        f
    }

    /// Relative discrete `L^2` error against `truth` over covered nodes and
    /// all time nodes.
    pub fn relative_error(&self, truth: &SpaceTimeField, time: &TimeGrid) -> f64 {
        let est = self.field(truth.n_nodes, time);
        let (mut num, mut den) = (0.0, 0.0);
        for n in 0..time.n_times() {
            let w = time.weight(n);
            for (a, &i) in self.nodes.iter().enumerate() {
                if !self.covered[a] {
                    continue;
                }
                num += w * (est.get(n, i) - truth.get(n, i)).powi(2);
                den += w * truth.get(n, i).powi(2);
            }
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `x,q_true,q_est` for one knot, or `t,x,q_true,q_est` for several.
    pub fn write_csv<W: Write>(
        &self,
        truth: &SpaceTimeField,
        time: &TimeGrid,
        mut out: W,
    ) -> Result<()> {
        let timed = self.time_knots.len() > 1;
        writeln!(
            out,
            "{}",
            if timed {
                "t,x,q_true,q_est"
            } else {
                "x,q_true,q_est"
            }
        )?;
        for (k, &tk) in self.time_knots.iter().enumerate() {
            let n = ((tk / time.dt).round() as usize).min(time.n_steps);
            for (a, &i) in self.nodes.iter().enumerate() {
                let est = self.q_est[k][a].map_or("nan".to_string(), |v| format!("{v:e}"));
                if timed {
                    write!(out, "{tk:e},")?;
                }
                writeln!(
                    out,
                    "{:e},{:e},{}",
                    self.node_coords[a],
                    truth.get(n, i),
                    est
                )?;
            }
        }
        Ok(())
    }
}

/// Tikhonov solve of `K q = m` with weight `alpha` relative to the largest
/// eigenvalue of `K^T K`; returns the solution and relative residual.
fn tikhonov(k: &DMatrix<f64>, m: &DVector<f64>, alpha: f64) -> Result<(DVector<f64>, f64)> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "inversion weight must be positive, got {alpha}"
        )));
    }
    let ktk = k.transpose() * k;
    let lmax = SymmetricEigen::new(ktk.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, v| a.max(*v));
    if lmax == 0.0 {
        return Ok((DVector::zeros(k.ncols()), 0.0));
    }
    let mut a = ktk;
    for d in 0..a.nrows() {
        a[(d, d)] += alpha * lmax;
    }
    let chol = Cholesky::new(a.clone()).ok_or_else(|| Error::IllConditioned {
        condition: condition_estimate(&a),
    })?;
    let q = chol.solve(&(k.transpose() * m));
    let mn = m.norm();
    let res = if mn == 0.0 {
        0.0
    } else {
        (k * &q - m).norm() / mn
    };
    Ok((q, res))
}

/// Omega nodes whose kernel columns vanish.
fn unresolved_columns(k: &DMatrix<f64>, col_nodes: &[usize]) -> Vec<usize> {
    let norms: Vec<f64> = (0..k.ncols()).map(|c| k.column(c).norm()).collect();
    let max = norms.iter().fold(0.0f64, |a, v| a.max(*v));
    let mut out: Vec<usize> = norms
        .iter()
        .zip(col_nodes)
        .filter(|(n, _)| **n <= 1e-10 * max)
        .map(|(_, &i)| i)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearInversionConfig {
    pub targets: Vec<TimeWindow>,
    pub alpha_runge: f64,
    pub alpha_inv: f64,
    /// Time knots of the piecewise-linear potential model; 1 means static.
    pub time_knots: usize,
}

/// Recovers a small potential from DN data against the `q = 0` background.
pub fn recover_linear_potential(
    dn_data: &DNRecord,
    dn_background: &DNRecord,
    op: &FracLapOperator,
    cfg: &LinearInversionConfig,
) -> Result<Reconstruction> {
    if !dn_data.same_bases(dn_background) {
        return Err(Error::Mismatch(
            "DN records use different bases or discretizations".into(),
        ));
    }
    dn_data.validate()?;
    dn_background.validate()?;
    if dn_data.n_nodes != op.n_nodes() || dn_data.s != op.s {
        return Err(Error::Mismatch(
            "DN records do not match the operator".into(),
        ));
    }
    if cfg.time_knots == 0 {
        return Err(Error::Config("time_knots must be at least 1".into()));
    }
    let time = dn_data.time()?;
    let grid = &op.grid;

    let s1 = RungeSynthesizer::new(op, None, dn_data.controls.clone(), cfg.alpha_runge, time)?;
    let reversed: Vec<ExteriorControl> = dn_data
        .probes
        .iter()
        .map(TimeReverse::time_reverse)
        .collect();
    let s2 = RungeSynthesizer::new(op, None, reversed, cfg.alpha_runge, time)?;
    let targets = localized_targets(grid, &time, &cfg.targets);
    let side1 = targets
        .par_iter()
        .map(|t| s1.synthesize(t))
        .collect::<Result<Vec<_>>>()?;
    let side2 = targets
        .par_iter()
        .map(|t| s2.synthesize(t))
        .collect::<Result<Vec<_>>>()?;

    let nc = dn_data.controls.len();
    let np = dn_data.probes.len();
    let dm = DMatrix::from_fn(nc, np, |a, b| {
        dn_data.pairings[a][b] - dn_background.pairings[a][b]
    });
    let tf = time.t_final();
    let knots: Vec<f64> = if cfg.time_knots == 1 {
        vec![0.0]
    } else {
        (0..cfg.time_knots)
            .map(|k| tf * k as f64 / (cfg.time_knots - 1) as f64)
            .collect()
    };
    let theta: Vec<Vec<f64>> = (0..time.n_times())
        .map(|n| hat_weights(&knots, time.t(n)))
        .collect();
    let omega = &grid.omega;
    let m = omega.len();
    let nk = knots.len();
    let nt = time.n_times();
    let scale = time.dt * grid.h;

    let pairs: Vec<(usize, usize)> = (0..side1.len())
        .flat_map(|i| (0..side2.len()).map(move |j| (i, j)))
        .collect();
    let rows: Vec<(f64, Vec<f64>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let a = DVector::from_column_slice(&side1[i].coefficients);
            let b = DVector::from_column_slice(&side2[j].coefficients);
            let meas = a.dot(&(&dm * b));
            let mut row = vec![0.0; nk * m];
            for n in 0..nt {
                let w = time.weight(n) * scale;
                for (p, &x) in omega.iter().enumerate() {
                    let prod = side1[i].state.get(n, x) * side2[j].state.get(nt - 1 - n, x);
                    if prod == 0.0 {
                        continue;
                    }
                    for (k, th) in theta[n].iter().enumerate() {
                        row[k * m + p] += w * th * prod;
                    }
                }
            }
            (meas, row)
        })
        .collect();
    let kmat = DMatrix::from_fn(rows.len(), nk * m, |r, c| rows[r].1[c]);
    let mvec = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.0));
    let col_nodes: Vec<usize> = (0..nk).flat_map(|_| omega.iter().copied()).collect();
    let unresolved = unresolved_columns(&kmat, &col_nodes);
    if !unresolved.is_empty() {
        return Err(Error::RankDeficient { unresolved });
    }
    let (q, residual) = tikhonov(&kmat, &mvec, cfg.alpha_inv)?;

    let errs: Vec<f64> = side1
        .iter()
        .chain(&side2)
        .map(|r| r.relative_error)
        .collect();
    let diagnostics = Diagnostics {
        runge_error_mean: errs.iter().sum::<f64>() / errs.len() as f64,
        runge_error_max: errs.iter().fold(0.0, |a, v| a.max(*v)),
        alpha_runge: cfg.alpha_runge,
        alpha_inv: cfg.alpha_inv,
        residual_norm: residual,
        n_measurements: rows.len(),
        n_unknowns: nk * m,
        model: "Born approximation about q = 0; the unknown potential is assumed small".into(),
        extra: BTreeMap::new(),
    };
    Ok(Reconstruction {
        node_coords: grid.omega_coords(),
        nodes: omega.clone(),
        time_knots: knots,
        q_est: (0..nk)
            .map(|k| (0..m).map(|p| Some(q[k * m + p])).collect())
            .collect(),
        covered: vec![true; m],
        r_est: None,
        diagnostics,
    })
}

/// Black-box forward model returning DN pairings of one control against a
/// list of probes.
pub trait ForwardOracle: Sync {
    fn pairings(&self, control: &ExteriorControl, probes: &[ExteriorControl]) -> Result<Vec<f64>>;
}

/// Nonlinear model `u_tt + L u_t + L u + f(u) = 0` solved on demand.
pub struct NonlinearModel<'a> {
    pub op: &'a FracLapOperator,
    pub f: &'a Nonlinearity,
    pub time: TimeGrid,
    pub newton: NewtonOptions,
}

impl ForwardOracle for NonlinearModel<'_> {
    fn pairings(&self, control: &ExteriorControl, probes: &[ExteriorControl]) -> Result<Vec<f64>> {
        let traj = ForwardProblem::new(self.op, self.time)
            .nonlinearity(self.f)
            .control(control)
            .newton(self.newton)
            .solve()?;
        pairings(self.op, &traj, probes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub r_est: f64,
    pub slope: f64,
    pub eps: Vec<f64>,
    pub d_values: Vec<f64>,
}

/// Relative level below which a DN difference is treated as rounding noise.
pub const DN_NOISE_FLOOR: f64 = 1e-12;

/// Fits `log |D(eps)|` against `log eps` with
/// `D(eps) = <(Lambda_f - Lambda_0)(eps psi), phi2*>`.
pub fn estimate_homogeneity_exponent(
    op: &FracLapOperator,
    oracle: &dyn ForwardOracle,
    psi: &ExteriorControl,
    phi2: &ExteriorControl,
    eps_list: &[f64],
    time: TimeGrid,
) -> Result<ExponentEstimate> {
    if eps_list.len() < 2 {
        return Err(Error::Domain("need at least two amplitudes".into()));
    }
    if eps_list.iter().any(|e| !(*e > 0.0)) || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain(
            "amplitudes must be positive and decreasing".into(),
        ));
    }
    let probe = [phi2.time_reverse()];
    let base_traj = ForwardProblem::new(op, time).control(psi).solve()?;
    let base = pairings(op, &base_traj, &probe)?[0];
    let d_values = eps_list
        .iter()
        .map(|&e| Ok(oracle.pairings(&psi.scaled(e), &probe)?[0] - e * base))
        .collect::<Result<Vec<f64>>>()?;
    let pts: Vec<(f64, f64)> = eps_list
        .iter()
        .zip(&d_values)
        .filter(|(e, d)| d.abs() > DN_NOISE_FLOOR * (*e * base).abs())
        .map(|(e, d)| (e.ln(), d.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Inconclusive(
            "DN difference is below the noise floor at too many amplitudes".into(),
        ));
    }
    let slope = ls_slope(&pts);
    Ok(ExponentEstimate {
        r_est: slope - 1.0,
        slope,
        eps: eps_list.to_vec(),
        d_values,
    })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Drive controls and probes for coefficient recovery.
#[derive(Debug, Clone)]
pub struct NonlinearInversionSetup {
    /// Controls on w1 whose small-amplitude responses illuminate omega.
    pub drives: Vec<ExteriorControl>,
    /// Probe basis on w2.
    pub probes: Vec<ExteriorControl>,
    pub targets: Vec<TimeWindow>,
    pub alpha_runge: f64,
}

/// Relative floor on `|v0|^r v0` below which a node is not recovered.
pub const COVERAGE_FLOOR: f64 = 1e-8;

/// Recovers `q` in `f = q |tau|^r tau` on the nodes the drives reach.
pub fn recover_nonlinear_coefficient(
    op: &FracLapOperator,
    oracle: &dyn ForwardOracle,
    r_known: f64,
    setup: &NonlinearInversionSetup,
    eps0: f64,
    alpha_inv: f64,
    time: TimeGrid,
) -> Result<Reconstruction> {
    if !(r_known > 0.0) {
        return Err(Error::Domain(format!(
            "exponent must be positive, got {r_known}"
        )));
    }
    if !(eps0 > 0.0) {
        return Err(Error::Domain(format!("eps0 must be positive, got {eps0}")));
    }
    if setup.drives.iter().any(|c| c.window != Window::W1)
        || setup.probes.iter().any(|c| c.window != Window::W2)
    {
        return Err(Error::Domain(
            "drives must lie on w1 and probes on w2".into(),
        ));
    }
    let grid = &op.grid;
    let omega = &grid.omega;
    let m = omega.len();
    let nt = time.n_times();
    let eps = [eps0, 0.5 * eps0, 0.25 * eps0];
    // R(eps) = A + c1 eps^r + c2 eps^{2r}; row of the inverse picks A
    let vander = DMatrix::from_fn(3, 3, |a, b| eps[a].powf(b as f64 * r_known));
    let extrap = vander
        .try_inverse()
        .ok_or_else(|| Error::Domain("degenerate amplitude ladder".into()))?
        .row(0)
        .clone_owned();

    struct DriveData {
        g: SpaceTimeField,
        limit: Vec<f64>,
    }
    let drives = setup
        .drives
        .par_iter()
        .enumerate()
        .map(|(index, psi)| -> Result<DriveData> {
            let wrap = |e: Error| Error::ForwardSolve {
                index,
                source: Box::new(e),
            };
            let lin = ForwardProblem::new(op, time)
                .control(psi)
                .solve()
                .map_err(wrap)?;
            let base = pairings(op, &lin, &setup.probes)?;
            let mut ratios = Vec::with_capacity(3);
            for &e in &eps {
                let nl = oracle
                    .pairings(&psi.scaled(e), &setup.probes)
                    .map_err(wrap)?;
                let denom = e.powf(r_known + 1.0);
                ratios.push(
                    nl.iter()
                        .zip(&base)
                        .map(|(a, b)| (a - e * b) / denom)
                        .collect::<Vec<_>>(),
                );
            }
            let limit = (0..setup.probes.len())
                .map(|l| (0..3).map(|a| extrap[a] * ratios[a][l]).sum())
                .collect();
            let mut g = SpaceTimeField::zeros(nt, grid.n_nodes);
            for n in 0..nt {
                for &i in omega {
                    let v = lin.u.get(n, i);
                    g.set(n, i, v.abs().powf(r_known) * v);
                }
            }
            Ok(DriveData { g, limit })
        })
        .collect::<Result<Vec<_>>>()?;

    let cover: Vec<f64> = omega
        .iter()
        .map(|&i| {
            drives
                .iter()
                .flat_map(|d| (0..nt).map(move |n| d.g.get(n, i).abs()))
                .fold(0.0, f64::max)
        })
        .collect();
    let cmax = cover.iter().fold(0.0f64, |a, v| a.max(*v));
    let covered: Vec<bool> = cover
        .iter()
        .map(|c| cmax > 0.0 && *c >= COVERAGE_FLOOR * cmax)
        .collect();
    let cols: Vec<usize> = (0..m).filter(|&p| covered[p]).collect();
    if cols.is_empty() {
        return Err(Error::RankDeficient {
            unresolved: omega.clone(),
        });
    }

    let reversed: Vec<ExteriorControl> =
        setup.probes.iter().map(TimeReverse::time_reverse).collect();
    let s2 = RungeSynthesizer::new(op, None, reversed, setup.alpha_runge, time)?;
    let targets = localized_targets(grid, &time, &setup.targets);
    let side2 = targets
        .par_iter()
        .map(|t| s2.synthesize(t))
        .collect::<Result<Vec<_>>>()?;

    let scale = time.dt * grid.h;
    let pairs: Vec<(usize, usize)> = (0..drives.len())
        .flat_map(|p| (0..side2.len()).map(move |j| (p, j)))
        .collect();
    let rows: Vec<(f64, Vec<f64>)> = pairs
        .par_iter()
        .map(|&(p, j)| {
            let meas: f64 = drives[p]
                .limit
                .iter()
                .zip(&side2[j].coefficients)
                .map(|(a, b)| a * b)
                .sum();
            let row = cols
                .iter()
                .map(|&c| {
                    let x = omega[c];
                    (0..nt)
                        .map(|n| {
                            time.weight(n)
                                * drives[p].g.get(n, x)
                                * side2[j].state.get(nt - 1 - n, x)
                        })
                        .sum::<f64>()
                        * scale
                })
                .collect();
            (meas, row)
        })
        .collect();
    let kmat = DMatrix::from_fn(rows.len(), cols.len(), |r, c| rows[r].1[c]);
    let mvec = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.0));
    let col_nodes: Vec<usize> = cols.iter().map(|&c| omega[c]).collect();
    let unresolved = unresolved_columns(&kmat, &col_nodes);
    if !unresolved.is_empty() {
        return Err(Error::RankDeficient { unresolved });
    }
    let (q, residual) = tikhonov(&kmat, &mvec, alpha_inv)?;
    let mut est = vec![None; m];
    for (k, &c) in cols.iter().enumerate() {
        est[c] = Some(q[k]);
    }
    let errs: Vec<f64> = side2.iter().map(|r| r.relative_error).collect();
    let mut extra = BTreeMap::new();
    extra.insert("covered_nodes".into(), cols.len() as f64);
    Ok(Reconstruction {
        node_coords: grid.omega_coords(),
        nodes: omega.clone(),
        time_knots: vec![0.0],
        q_est: vec![est],
        covered,
        r_est: Some(r_known),
        diagnostics: Diagnostics {
            runge_error_mean: errs.iter().sum::<f64>() / errs.len() as f64,
            runge_error_max: errs.iter().fold(0.0, |a, v| a.max(*v)),
            alpha_runge: setup.alpha_runge,
            alpha_inv,
            residual_norm: residual,
            n_measurements: rows.len(),
            n_unknowns: cols.len(),
            model: format!("leading small-amplitude term, Richardson over eps = {eps:?}"),
            extra,
        },
    })
}

/// Smooth drives on w1: `cos^2` bumps centred in `n_bumps` equal
/// sub-windows times the time splines, each scaled so its interior linear
/// response peaks at 1.
pub fn normalized_drives(
    op: &FracLapOperator,
    time: &TimeGrid,
    n_bumps: usize,
    intervals: usize,
) -> Result<Vec<ExteriorControl>> {
    let grid = &op.grid;
    let w = grid.window(Window::W1);
    if n_bumps == 0 || w.is_empty() {
        return Err(Error::Domain("no drive bumps requested".into()));
    }
    let lo = grid.x(w[0]);
    let hi = grid.x(w[w.len() - 1]);
    let width = (hi - lo) / n_bumps as f64;
    let splines = time_bsplines(time, intervals)?;
    let mut raw = Vec::new();
    for b in 0..n_bumps {
        let c = lo + (b as f64 + 0.5) * width;
        for sp in &splines {
            let mut values = SpaceTimeField::zeros(time.n_times(), grid.n_nodes);
            for &i in w {
                let z = (grid.x(i) - c) / (0.5 * width);
                if z.abs() < 1.0 {
                    let s = (0.5 * std::f64::consts::PI * z).cos().powi(2);
                    for (n, &bn) in sp.iter().enumerate() {
                        values.set(n, i, s * bn);
                    }
                }
            }
            raw.push(ExteriorControl::new(grid, values, Window::W1)?);
        }
    }
    raw.into_par_iter()
        .map(|c| {
            let traj = ForwardProblem::new(op, *time).control(&c).solve()?;
            let peak = grid
                .omega
                .iter()
                .flat_map(|&i| (0..time.n_times()).map(move |n| (n, i)))
                .map(|(n, i)| traj.u.get(n, i).abs())
                .fold(0.0, f64::max);
            if peak == 0.0 {
                return Err(Error::Domain("drive produces no interior response".into()));
            }
            Ok(c.scaled(1.0 / peak))
        })
        .collect()
}
