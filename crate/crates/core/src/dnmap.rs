//! Partial Dirichlet-to-Neumann pairings, DN matrices over control bases, and
//! the discrete integral identities relating them to interior solutions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::fraclap::FracLapOperator;
use crate::grid::{Grid, Window};
use crate::nemytskii::{apply, Nonlinearity};
use crate::solver::{ExteriorControl, ForwardProblem, NewtonOptions, Trajectory};
use crate::time::TimeGrid;

/// `u*(x, t) = u(x, T - t)`.
pub trait TimeReverse {
    fn time_reverse(&self) -> Self;
}

impl TimeReverse for SpaceTimeField {
    fn time_reverse(&self) -> Self {
        self.reversed()
    }
}

impl TimeReverse for ExteriorControl {
    fn time_reverse(&self) -> Self {
        ExteriorControl {
            values: self.values.reversed(),
            window: self.window,
        }
    }
}

impl TimeReverse for Trajectory {
    fn time_reverse(&self) -> Self {
        let mut newton_iters = self.newton_iters.clone();
        newton_iters.reverse();
        Trajectory {
            u: self.u.reversed(),
            v: self.v.reversed().scaled(-1.0),
            time: self.time,
            scheme: self.scheme,
            newton_iters,
            control_window: self.control_window,
        }
    }
}

fn check_probe(traj: &Trajectory, probe: &ExteriorControl) -> Result<()> {
    let expected = traj.control_window.map_or(Window::W2, Window::other);
    if probe.window != expected {
        return Err(Error::Domain(format!(
            "probe on {:?} but the trajectory is measured on {:?}",
            probe.window, expected
        )));
    }
    probe
        .values
        .check_shape(traj.u.n_times, traj.u.n_nodes, "probe")
}

/// Pairings `<Lambda phi, psi_k>` of one trajectory against several probes.
///
/// Each value is `sum_n w_n dt h psi(t_n)^T L (u + v)(t_n)` with trapezoid
/// weights `w_n`.
pub fn pairings(
    op: &FracLapOperator,
    traj: &Trajectory,
    probes: &[ExteriorControl],
) -> Result<Vec<f64>> {
    for p in probes {
        check_probe(traj, p)?;
    }
    let mut rows: Vec<usize> = probes.iter().flat_map(ExteriorControl::support).collect();
    rows.sort_unstable();
    rows.dedup();
    let nn = op.n_nodes();
    let nt = traj.time.n_times();
    let h = op.h();
    let dt = traj.time.dt;
    // y[n][k] = (L (u + v))(rows[k]) at time n
    let mut y = vec![vec![0.0; rows.len()]; nt];
    let mut w = vec![0.0; nn];
    for (n, yn) in y.iter_mut().enumerate() {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = traj.u.get(n, i) + traj.v.get(n, i);
        }
        for (k, &j) in rows.iter().enumerate() {
            let lrow = op.matrix.row(j);
            yn[k] = (0..nn).map(|i| lrow[i] * w[i]).sum();
        }
    }
    Ok(probes
        .iter()
        .map(|p| {
            let mut acc = 0.0;
            for (n, yn) in y.iter().enumerate() {
                let pr = p.values.row(n);
                let s: f64 = rows.iter().zip(yn).map(|(&j, yj)| pr[j] * yj).sum();
                acc += traj.time.weight(n) * s;
            }
            acc * dt * h
        })
        .collect())
}

/// `<Lambda phi, psi>` for the trajectory driven by `phi`.
pub fn dn_pairing(op: &FracLapOperator, traj: &Trajectory, probe: &ExteriorControl) -> Result<f64> {
    Ok(pairings(op, traj, std::slice::from_ref(probe))?[0])
}

/// Pairing matrix over a control basis and a probe basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DNRecord {
    pub s: f64,
    pub dt: f64,
    pub t_final: f64,
    pub n_nodes: usize,
    pub controls: Vec<ExteriorControl>,
    pub probes: Vec<ExteriorControl>,
    pub pairings: Vec<Vec<f64>>,
    pub model_tag: String,
}

#[derive(Serialize, Deserialize)]
struct CompactControl {
    window: Window,
    nodes: Vec<usize>,
    values: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DNRecordFile {
    s: f64,
    dt: f64,
    t_final: f64,
    n_nodes: usize,
    model_tag: String,
    controls: Vec<CompactControl>,
    probes: Vec<CompactControl>,
    pairings: Vec<Vec<f64>>,
}

fn compact(c: &ExteriorControl) -> CompactControl {
    let nodes = c.support();
    let values = (0..c.values.n_times)
        .map(|n| nodes.iter().map(|&i| c.values.get(n, i)).collect())
        .collect();
    CompactControl {
        window: c.window,
        nodes,
        values,
    }
}

fn expand(c: CompactControl, grid: &Grid, n_times: usize) -> Result<ExteriorControl> {
    if c.values.len() != n_times || c.values.iter().any(|r| r.len() != c.nodes.len()) {
        return Err(Error::Mismatch(
            "control values do not match the record's time grid".into(),
        ));
    }
    if c.nodes.iter().any(|&i| i >= grid.n_nodes) {
        return Err(Error::Mismatch("control node outside the grid".into()));
    }
    let mut values = SpaceTimeField::zeros(n_times, grid.n_nodes);
    for (n, row) in c.values.iter().enumerate() {
        for (&i, &v) in c.nodes.iter().zip(row) {
            values.set(n, i, v);
        }
    }
    ExteriorControl::new(grid, values, c.window)
}

impl DNRecord {
    pub fn to_json(&self) -> Result<String> {
        let file = DNRecordFile {
            s: self.s,
            dt: self.dt,
            t_final: self.t_final,
            n_nodes: self.n_nodes,
            model_tag: self.model_tag.clone(),
            controls: self.controls.iter().map(compact).collect(),
            probes: self.probes.iter().map(compact).collect(),
            pairings: self.pairings.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str, grid: &Grid) -> Result<Self> {
        let file: DNRecordFile = serde_json::from_str(text)?;
        if file.n_nodes != grid.n_nodes {
            return Err(Error::Mismatch(format!(
                "record has {} nodes, grid has {}",
                file.n_nodes, grid.n_nodes
            )));
        }
        let time = TimeGrid::new(file.dt, file.t_final)?;
        let nt = time.n_times();
        let controls = file
            .controls
            .into_iter()
            .map(|c| expand(c, grid, nt))
            .collect::<Result<Vec<_>>>()?;
        let probes = file
            .probes
            .into_iter()
            .map(|c| expand(c, grid, nt))
            .collect::<Result<Vec<_>>>()?;
        let rec = DNRecord {
            s: file.s,
            dt: file.dt,
            t_final: file.t_final,
            n_nodes: file.n_nodes,
            controls,
            probes,
            pairings: file.pairings,
            model_tag: file.model_tag,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairings.len() != self.controls.len()
            || self.pairings.iter().any(|r| r.len() != self.probes.len())
        {
            return Err(Error::Mismatch(
                "pairing matrix does not match the bases".into(),
            ));
        }
        if self.pairings.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DN pairings".into()));
        }
        Ok(())
    }

    pub fn time(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.dt, self.t_final)
    }

    /// True when both records use the same discretization and bases.
    pub fn same_bases(&self, other: &DNRecord) -> bool {
        self.s == other.s
            && self.dt == other.dt
            && self.t_final == other.t_final
            && self.n_nodes == other.n_nodes
            && self.controls == other.controls
            && self.probes == other.probes
    }
}

fn check_bases(controls: &[ExteriorControl], probes: &[ExteriorControl]) -> Result<()> {
    if let Some(i) = controls.iter().position(|c| c.window != Window::W1) {
        return Err(Error::Domain(format!("control {i} is not on w1")));
    }
    if let Some(j) = probes.iter().position(|p| p.window != Window::W2) {
        return Err(Error::Domain(format!("probe {j} is not on w2")));
    }
    Ok(())
}

fn dn_matrix_with<F>(
    op: &FracLapOperator,
    controls: &[ExteriorControl],
    probes: &[ExteriorControl],
    time: TimeGrid,
    tag: String,
    forward: F,
) -> Result<DNRecord>
where
    F: Fn(&ExteriorControl) -> Result<Trajectory> + Sync,
{
    check_bases(controls, probes)?;
    let rows: Vec<Result<Vec<f64>>> = controls
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            forward(c)
                .and_then(|traj| pairings(op, &traj, probes))
                .map_err(|e| Error::ForwardSolve {
                    index,
                    source: Box::new(e),
                })
        })
        .collect();
    let pairings = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let rec = DNRecord {
        s: op.s,
        dt: time.dt,
        t_final: time.t_final(),
        n_nodes: op.n_nodes(),
        controls: controls.to_vec(),
        probes: probes.to_vec(),
        pairings,
        model_tag: tag,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn dn_matrix_linear(
    op: &FracLapOperator,
    q: &SpaceTimeField,
    controls: &[ExteriorControl],
    probes: &[ExteriorControl],
    time: TimeGrid,
) -> Result<DNRecord> {
    dn_matrix_with(op, controls, probes, time, "linear".into(), |c| {
        ForwardProblem::new(op, time)
            .potential(q)
            .control(c)
            .solve()
    })
}

pub fn dn_matrix_nonlinear(
    op: &FracLapOperator,
    f: &Nonlinearity,
    controls: &[ExteriorControl],
    probes: &[ExteriorControl],
    time: TimeGrid,
    newton: NewtonOptions,
) -> Result<DNRecord> {
    dn_matrix_with(
        op,
        controls,
        probes,
        time,
        format!("nonlinear {}", f.tag),
        |c| {
            ForwardProblem::new(op, time)
                .nonlinearity(f)
                .control(c)
                .newton(newton)
                .solve()
        },
    )
}

/// Both sides of a discrete identity and their absolute difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Largest magnitude among the terms combined into `lhs` and `rhs`.
    pub scale: f64,
}

/// Residuals below this multiple of [`IdentityCheck::scale`] are rounding
/// error in the terms that were combined.
pub const ROUNDOFF_FLOOR: f64 = 1e-11;

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64, terms: &[f64]) -> Self {
        let scale = terms
            .iter()
            .chain([&lhs, &rhs])
            .fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            lhs,
            rhs,
            residual: (lhs - rhs).abs(),
            scale,
        }
    }

    /// True when the residual is indistinguishable from rounding error.
    pub fn at_roundoff(&self) -> bool {
        self.residual <= ROUNDOFF_FLOOR * self.scale
    }

    /// Residual relative to the larger side, zero when both sides vanish.
    pub fn relative(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.residual / scale
        }
    }
}

fn check_pair(phi1: &ExteriorControl, phi2: &ExteriorControl) -> Result<()> {
    if phi1.window != Window::W1 || phi2.window != Window::W2 {
        return Err(Error::Domain("expected phi1 on w1 and phi2 on w2".into()));
    }
    Ok(())
}

/// Interior integral `sum_n w_n dt h sum_{omega} a b`.
fn interior_integral(grid: &Grid, time: &TimeGrid, a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    let mut acc = 0.0;
    for n in 0..time.n_times() {
        let s: f64 = grid.omega.iter().map(|&i| a.get(n, i) * b.get(n, i)).sum();
        acc += time.weight(n) * s;
    }
    acc * time.dt * grid.h
}

/// `<Lambda_q phi1, phi2*>` against `<Lambda_{q*} phi2, phi1*>`.
pub fn self_adjointness_residual(
    op: &FracLapOperator,
    q: &SpaceTimeField,
    phi1: &ExteriorControl,
    phi2: &ExteriorControl,
    time: TimeGrid,
) -> Result<IdentityCheck> {
    check_pair(phi1, phi2)?;
    let q_rev = q.time_reverse();
    let u1 = ForwardProblem::new(op, time)
        .potential(q)
        .control(phi1)
        .solve()?;
    let u2 = ForwardProblem::new(op, time)
        .potential(&q_rev)
        .control(phi2)
        .solve()?;
    let lhs = dn_pairing(op, &u1, &phi2.time_reverse())?;
    let rhs = dn_pairing(op, &u2, &phi1.time_reverse())?;
    Ok(IdentityCheck::new(lhs, rhs, &[]))
}

/// Integral identity for two potentials.
///
/// `lhs = <(Lambda_{q1} - Lambda_{q2*}) phi1, phi2*>` and
/// `rhs = sum (q1 - q2*) (u1 - phi1) (u2 - phi2)*` over omega and time, with
/// `u1` solved under `q1` and `u2` under `q2`. Both reduce to the familiar
/// form `<(Lambda_{q1} - Lambda_{q2}) phi1, phi2*>` whenever `q2 = q2*`.
pub fn alessandrini_residual(
    op: &FracLapOperator,
    q1: &SpaceTimeField,
    q2: &SpaceTimeField,
    phi1: &ExteriorControl,
    phi2: &ExteriorControl,
    time: TimeGrid,
) -> Result<IdentityCheck> {
    check_pair(phi1, phi2)?;
    let q2_rev = q2.time_reverse();
    let probe = phi2.time_reverse();
    let u1 = ForwardProblem::new(op, time)
        .potential(q1)
        .control(phi1)
        .solve()?;
    let u1_ref = ForwardProblem::new(op, time)
        .potential(&q2_rev)
        .control(phi1)
        .solve()?;
    let u2 = ForwardProblem::new(op, time)
        .potential(q2)
        .control(phi2)
        .solve()?;
    let (p1, p2) = (
        dn_pairing(op, &u1, &probe)?,
        dn_pairing(op, &u1_ref, &probe)?,
    );
    let lhs = p1 - p2;
    let dq = q1.sub(&q2_rev);
    let rhs = interior_integral(
        &op.grid,
        &time,
        &dq.zip_with(&u1.u, |a, b| a * b),
        &u2.u.time_reverse(),
    );
    Ok(IdentityCheck::new(lhs, rhs, &[p1, p2]))
}

/// Integral identity for two nonlinearities, with `u2` the linear response
/// to `phi2`.
pub fn nonlinear_integral_identity_residual(
    op: &FracLapOperator,
    f1: &Nonlinearity,
    f2: &Nonlinearity,
    phi1: &ExteriorControl,
    phi2: &ExteriorControl,
    time: TimeGrid,
    newton: NewtonOptions,
) -> Result<IdentityCheck> {
    check_pair(phi1, phi2)?;
    let probe = phi2.time_reverse();
    let solve = |f: &Nonlinearity| {
        ForwardProblem::new(op, time)
            .nonlinearity(f)
            .control(phi1)
            .newton(newton)
            .solve()
    };
    let a = solve(f1)?;
    let b = solve(f2)?;
    let u2 = ForwardProblem::new(op, time).control(phi2).solve()?;
    let (p1, p2) = (dn_pairing(op, &a, &probe)?, dn_pairing(op, &b, &probe)?);
    let lhs = p1 - p2;
    let df = apply(f1, &op.grid, &a.u)?.sub(&apply(f2, &op.grid, &b.u)?);
    let rhs = interior_integral(&op.grid, &time, &df, &u2.u.time_reverse());
    Ok(IdentityCheck::new(lhs, rhs, &[p1, p2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nemytskii::power_nonlinearity;
    use crate::test_util::op61;
    use std::f64::consts::PI;

    fn bump(op: &FracLapOperator, time: &TimeGrid, w: Window, amp: f64) -> ExteriorControl {
        let (lo, hi) = match w {
            Window::W1 => (-0.8, -0.2),
            Window::W2 => (1.2, 1.8),
        };
        let tf = time.t_final();
        ExteriorControl::from_fn(&op.grid, time, w, |x, t| {
            amp * ((x - lo) / (hi - lo) * PI).sin().powi(2) * (t / tf * PI).sin().powi(4)
        })
        .unwrap()
    }

    fn xt_potential(op: &FracLapOperator, time: &TimeGrid) -> SpaceTimeField {
        SpaceTimeField::from_fn(time.n_times(), op.n_nodes(), |n, i| {
            op.grid.x(i) * time.t(n)
        })
    }

    #[test]
    fn reverse_trajectory_negates_velocity() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.02, 0.4).unwrap();
        let c = bump(&op, &time, Window::W1, 1.0);
        let traj = ForwardProblem::new(&op, time).control(&c).solve().unwrap();
        let r = traj.time_reverse();
        assert_eq!(r.v.get(0, 30), -traj.v.get(time.n_steps, 30));
        assert_eq!(r.time_reverse(), traj);
    }

    #[test]
    fn zero_trajectory_pairs_to_zero() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.02, 0.4).unwrap();
        let traj = ForwardProblem::new(&op, time).solve().unwrap();
        let p = bump(&op, &time, Window::W2, 1.0);
        assert_eq!(dn_pairing(&op, &traj, &p).unwrap(), 0.0);
    }

    #[test]
    fn probe_on_driving_window_rejected() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.02, 0.4).unwrap();
        let c = bump(&op, &time, Window::W1, 1.0);
        let traj = ForwardProblem::new(&op, time).control(&c).solve().unwrap();
        assert!(matches!(dn_pairing(&op, &traj, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn pairing_is_linear_in_trajectory() {
        let op = op61(0.4);
        let time = TimeGrid::new(0.02, 0.4).unwrap();
        let c1 = bump(&op, &time, Window::W1, 1.0);
        let c2 = ExteriorControl::from_fn(&op.grid, &time, Window::W1, |x, t| x * t * t).unwrap();
        let p = bump(&op, &time, Window::W2, 1.0);
        let a = ForwardProblem::new(&op, time).control(&c1).solve().unwrap();
        let b = ForwardProblem::new(&op, time).control(&c2).solve().unwrap();
        let sum = Trajectory {
            u: a.u.add(&b.u),
            v: a.v.add(&b.v),
            ..a.clone()
        };
        let lhs = dn_pairing(&op, &sum, &p).unwrap();
        let rhs = dn_pairing(&op, &a, &p).unwrap() + dn_pairing(&op, &b, &p).unwrap();
        assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
    }

    #[test]
    fn linear_and_zero_nonlinear_records_agree() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.02, 0.4).unwrap();
        let controls = vec![
            bump(&op, &time, Window::W1, 1.0),
            bump(&op, &time, Window::W1, 2.0),
        ];
        let probes = vec![bump(&op, &time, Window::W2, 1.0)];
        let q = SpaceTimeField::zeros(time.n_times(), 61);
        let lin = dn_matrix_linear(&op, &q, &controls, &probes, time).unwrap();
        let f0 = power_nonlinearity(vec![0.0; 61], 2.0).unwrap();
        let nl = dn_matrix_nonlinear(&op, &f0, &controls, &probes, time, NewtonOptions::default())
            .unwrap();
        for (a, b) in lin
            .pairings
            .iter()
            .flatten()
            .zip(nl.pairings.iter().flatten())
        {
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
        // doubling a control doubles its row
        assert!(
            (lin.pairings[1][0] - 2.0 * lin.pairings[0][0]).abs()
                <= 1e-13 * lin.pairings[1][0].abs()
        );
    }

    #[test]
    fn record_json_round_trip() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.05, 0.5).unwrap();
        let controls = vec![bump(&op, &time, Window::W1, 1.0)];
        let probes = vec![
            bump(&op, &time, Window::W2, 1.0),
            bump(&op, &time, Window::W2, 0.5),
        ];
        let q = SpaceTimeField::zeros(time.n_times(), 61);
        let rec = dn_matrix_linear(&op, &q, &controls, &probes, time).unwrap();
        let back = DNRecord::from_json(&rec.to_json().unwrap(), &op.grid).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn wrong_basis_windows_rejected() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.05, 0.5).unwrap();
        let q = SpaceTimeField::zeros(time.n_times(), 61);
        let c = bump(&op, &time, Window::W2, 1.0);
        assert!(dn_matrix_linear(
            &op,
            &q,
            std::slice::from_ref(&c),
            std::slice::from_ref(&c),
            time
        )
        .is_err());
    }

    #[test]
    fn self_adjointness_zero_control() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.02, 0.4).unwrap();
        let q = xt_potential(&op, &time);
        let phi1 = ExteriorControl::zero(&op.grid, &time, Window::W1);
        let phi2 = bump(&op, &time, Window::W2, 1.0);
        let chk = self_adjointness_residual(&op, &q, &phi1, &phi2, time).unwrap();
        assert_eq!(chk.residual, 0.0);
    }

    #[test]
    fn self_adjointness_time_dependent() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.01, 1.0).unwrap();
        let q = xt_potential(&op, &time);
        let chk = self_adjointness_residual(
            &op,
            &q,
            &bump(&op, &time, Window::W1, 1.0),
            &bump(&op, &time, Window::W2, 1.0),
            time,
        )
        .unwrap();
        assert!(chk.lhs.abs() > 0.0);
        assert!(chk.relative() < 1e-10, "{chk:?}");
    }

    #[test]
    fn alessandrini_identity_holds() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.01, 1.0).unwrap();
        let q1 = SpaceTimeField::constant_in_time(
            time.n_times(),
            &op.grid
                .coords()
                .iter()
                .map(|x| 0.5 * (-50.0 * (x - 0.5).powi(2)).exp())
                .collect::<Vec<_>>(),
        );
        let q2 = SpaceTimeField::zeros(time.n_times(), 61);
        let phi1 = bump(&op, &time, Window::W1, 1.0);
        let phi2 = bump(&op, &time, Window::W2, 1.0);
        let chk = alessandrini_residual(&op, &q1, &q2, &phi1, &phi2, time).unwrap();
        assert!(chk.relative() < 1e-10, "{chk:?}");
        let swapped = alessandrini_residual(&op, &q2, &q1, &phi1, &phi2, time).unwrap();
        assert_eq!(swapped.lhs, -chk.lhs);
    }

    #[test]
    fn alessandrini_time_dependent_background() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.01, 1.0).unwrap();
        let q1 = SpaceTimeField::zeros(time.n_times(), 61);
        let q2 = xt_potential(&op, &time);
        let chk = alessandrini_residual(
            &op,
            &q1,
            &q2,
            &bump(&op, &time, Window::W1, 1.0),
            &bump(&op, &time, Window::W2, 1.0),
            time,
        )
        .unwrap();
        assert!(chk.relative() < 1e-10, "{chk:?}");
    }

    #[test]
    fn nonlinear_identity_holds() {
        let op = op61(0.5);
        let time = TimeGrid::new(0.01, 1.0).unwrap();
        let f1 = power_nonlinearity(vec![1.0; 61], 2.0).unwrap();
        let f2 = power_nonlinearity(vec![0.0; 61], 2.0).unwrap();
        let chk = nonlinear_integral_identity_residual(
            &op,
            &f1,
            &f2,
            &bump(&op, &time, Window::W1, 0.1),
            &bump(&op, &time, Window::W2, 1.0),
            time,
            NewtonOptions::default(),
        )
        .unwrap();
        assert!(chk.lhs.abs() > 0.0);
        assert!(chk.relative() < 1e-4, "{chk:?}");
        assert!(chk.at_roundoff(), "{chk:?}");
        let none = nonlinear_integral_identity_residual(
            &op,
            &f1,
            &f2,
            &bump(&op, &time, Window::W1, 0.1),
            &ExteriorControl::zero(&op.grid, &time, Window::W2),
            time,
            NewtonOptions::default(),
        )
        .unwrap();
        assert_eq!((none.lhs, none.rhs), (0.0, 0.0));
    }
}
