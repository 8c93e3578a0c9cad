//! Crank-Nicolson integration of the nonlocal viscous wave equation
//!
//! `u_tt + L u_t + L u + q u + f(u) = h` in omega, `u = Phi` outside omega,
//!
//! written as the first-order system `u' = v`, `v' = -L(u + v) - q u - f(u) + h`.
//! Exterior nodes are pinned to the control; only omega unknowns are stepped.
//! The exterior velocity is the trapezoid-consistent derivative of the
//! control, started from zero.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::fraclap::FracLapOperator;
use crate::grid::{Grid, NodeRole, Window};
use crate::nemytskii::Nonlinearity;
use crate::time::TimeGrid;

/// Exterior data supported on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorControl {
    pub values: SpaceTimeField,
    pub window: Window,
}

impl ExteriorControl {
    pub fn new(grid: &Grid, values: SpaceTimeField, window: Window) -> Result<Self> {
        if values.n_nodes != grid.n_nodes {
            return Err(Error::Mismatch(format!(
                "control has {} nodes, grid has {}",
                values.n_nodes, grid.n_nodes
            )));
        }
        values.check_finite("control")?;
        for n in 0..values.n_times {
            for (i, &v) in values.row(n).iter().enumerate() {
                if v != 0.0 && grid.role(i) != NodeRole::Window(window) {
                    return Err(Error::Domain(format!(
                        "control on {window:?} is nonzero at node {i} outside the window"
                    )));
                }
            }
        }
        Ok(Self { values, window })
    }

    pub fn zero(grid: &Grid, time: &TimeGrid, window: Window) -> Self {
        Self {
            values: SpaceTimeField::zeros(time.n_times(), grid.n_nodes),
            window,
        }
    }

    /// Samples `g(x, t)` on the window nodes.
    pub fn from_fn(
        grid: &Grid,
        time: &TimeGrid,
        window: Window,
        g: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = SpaceTimeField::zeros(time.n_times(), grid.n_nodes);
        for n in 0..time.n_times() {
            for &i in grid.window(window) {
                values.set(n, i, g(grid.x(i), time.t(n)));
            }
        }
        Self::new(grid, values, window)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            values: self.values.scaled(a),
            window: self.window,
        }
    }

    pub fn n_times(&self) -> usize {
        self.values.n_times
    }

    /// Nodes where the control is nonzero at some time.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.n_nodes)
            .filter(|&i| (0..self.values.n_times).any(|n| self.values.get(n, i) != 0.0))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CrankNicolson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub u: SpaceTimeField,
    pub v: SpaceTimeField,
    pub time: TimeGrid,
    pub scheme: Scheme,
    pub newton_iters: Vec<usize>,
    /// Window of the driving control, if any.
    pub control_window: Option<Window>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.time.dt
    }

    pub fn t_final(&self) -> f64 {
        self.time.t_final()
    }

    pub fn n_nodes(&self) -> usize {
        self.u.n_nodes
    }

    /// Writes `t,node,x,u,v`, one row per time and node.
    pub fn write_csv<W: Write>(&self, grid: &Grid, mut out: W) -> Result<()> {
        writeln!(out, "t,node,x,u,v")?;
        for n in 0..self.time.n_times() {
            let t = self.time.t(n);
            for i in 0..self.n_nodes() {
                writeln!(
                    out,
                    "{:e},{},{:e},{:e},{:e}",
                    t,
                    i,
                    grid.x(i),
                    self.u.get(n, i),
                    self.v.get(n, i)
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 25,
        }
    }
}

enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factor {
    fn new(a: DMatrix<f64>) -> Option<Self> {
        match Cholesky::new(a.clone()) {
            Some(c) => Some(Factor::Chol(c)),
            None => {
                let lu = a.lu();
                if lu.is_invertible() {
                    Some(Factor::Lu(lu))
                } else {
                    None
                }
            }
        }
    }

    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let x = match self {
            Factor::Chol(c) => c.solve(b),
            Factor::Lu(lu) => lu.solve(b)?,
        };
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

/// A forward problem assembled piece by piece; unset inputs are zero.
pub struct ForwardProblem<'a> {
    op: &'a FracLapOperator,
    time: TimeGrid,
    potential: Option<&'a SpaceTimeField>,
    nonlinearity: Option<&'a Nonlinearity>,
    control: Option<&'a ExteriorControl>,
    source: Option<&'a SpaceTimeField>,
    initial: Option<(&'a [f64], &'a [f64])>,
    newton: NewtonOptions,
}

impl<'a> ForwardProblem<'a> {
    pub fn new(op: &'a FracLapOperator, time: TimeGrid) -> Self {
        Self {
            op,
            time,
            potential: None,
            nonlinearity: None,
            control: None,
            source: None,
            initial: None,
            newton: NewtonOptions::default(),
        }
    }

    pub fn potential(mut self, q: &'a SpaceTimeField) -> Self {
        self.potential = Some(q);
        self
    }

    pub fn nonlinearity(mut self, f: &'a Nonlinearity) -> Self {
        self.nonlinearity = Some(f);
        self
    }

    pub fn control(mut self, c: &'a ExteriorControl) -> Self {
        self.control = Some(c);
        self
    }

    pub fn source(mut self, h: &'a SpaceTimeField) -> Self {
        self.source = Some(h);
        self
    }

    /// Initial displacement and velocity; only omega entries are used.
    pub fn initial(mut self, u0: &'a [f64], v0: &'a [f64]) -> Self {
        self.initial = Some((u0, v0));
        self
    }

    pub fn newton(mut self, opts: NewtonOptions) -> Self {
        self.newton = opts;
        self
    }

    fn validate(&self) -> Result<()> {
        let grid = &self.op.grid;
        let (nt, nn) = (self.time.n_times(), grid.n_nodes);
        if let Some(q) = self.potential {
            q.check_shape(nt, nn, "potential")?;
            for n in 0..nt {
                if grid.omega.iter().any(|&i| !q.get(n, i).is_finite()) {
                    return Err(Error::NonFinite("potential".into()));
                }
            }
        }
        if let Some(h) = self.source {
            h.check_shape(nt, nn, "source")?;
            h.check_finite("source")?;
            for n in 0..nt {
                if let Some(i) = (0..nn).find(|&i| h.get(n, i) != 0.0 && !grid.is_omega(i)) {
                    return Err(Error::Domain(format!(
                        "source is nonzero at exterior node {i}"
                    )));
                }
            }
        }
        if let Some(c) = self.control {
            c.values.check_shape(nt, nn, "control")?;
            if c.values.row(0).iter().any(|v| *v != 0.0) {
                return Err(Error::Domain("control has a nonzero initial trace".into()));
            }
        }
        if let Some((u0, v0)) = self.initial {
            if u0.len() != nn || v0.len() != nn {
                return Err(Error::Mismatch(
                    "initial data length differs from grid".into(),
                ));
            }
            if u0.iter().chain(v0).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("initial data".into()));
            }
        }
        if !(self.newton.tol > 0.0) {
            return Err(Error::Domain("Newton tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<Trajectory> {
        self.validate()?;
        let op = self.op;
        let grid = &op.grid;
        let omega = &grid.omega;
        let m = omega.len();
        let nn = grid.n_nodes;
        let nt = self.time.n_times();
        let dt = self.time.dt;
        let half = 0.5 * dt;

        // exterior data: control values and trapezoid velocity
        let mut u = SpaceTimeField::zeros(nt, nn);
        let mut v = SpaceTimeField::zeros(nt, nn);
        let support = self
            .control
            .map(ExteriorControl::support)
            .unwrap_or_default();
        // drive[n][k] = Phi + Phi_t at support node k
        let mut drive = vec![vec![0.0; support.len()]; nt];
        if let Some(c) = self.control {
            for (k, &j) in support.iter().enumerate() {
                let mut psi = 0.0;
                for n in 0..nt {
                    let phi = c.values.get(n, j);
                    if n > 0 {
                        psi = 2.0 * (phi - c.values.get(n - 1, j)) / dt - psi;
                    }
                    u.set(n, j, phi);
                    v.set(n, j, psi);
                    drive[n][k] = phi + psi;
                }
            }
        }
        let l_ii = op.block(omega, omega);
        let l_is = op.block(omega, &support);
        let ext = |n: usize| -> DVector<f64> {
            let mut e = if support.is_empty() {
                DVector::zeros(m)
            } else {
                -(&l_is * DVector::from_column_slice(&drive[n]))
            };
            if let Some(h) = self.source {
                for (k, &i) in omega.iter().enumerate() {
                    e[k] += h.get(n, i);
                }
            }
            e
        };
        let q_at = |n: usize| -> DVector<f64> {
            match self.potential {
                Some(q) => DVector::from_iterator(m, omega.iter().map(|&i| q.get(n, i))),
                None => DVector::zeros(m),
            }
        };
        let f_at = |w: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
            self.nonlinearity.map(|f| {
                let val = DVector::from_iterator(
                    m,
                    omega.iter().zip(w.iter()).map(|(&i, &x)| f.value(i, x)),
                );
                let der = DVector::from_iterator(
                    m,
                    omega.iter().zip(w.iter()).map(|(&i, &x)| f.dvalue(i, x)),
                );
                (val, der)
            })
        };

        let mut ui = DVector::zeros(m);
        let mut vi = DVector::zeros(m);
        if let Some((u0, v0)) = self.initial {
            for (k, &i) in omega.iter().enumerate() {
                ui[k] = u0[i];
                vi[k] = v0[i];
            }
        }
        for (k, &i) in omega.iter().enumerate() {
            u.set(0, i, ui[k]);
            v.set(0, i, vi[k]);
        }

        let base = {
            let mut a = l_ii.scale(half + 0.25 * dt * dt);
            for k in 0..m {
                a[(k, k)] += 1.0;
            }
            a
        };
        let step_matrix = |qn: &DVector<f64>| -> DMatrix<f64> {
            let mut a = base.clone();
            for k in 0..m {
                a[(k, k)] += 0.25 * dt * dt * qn[k];
            }
            a
        };
        let constant_q = self.potential.is_none_or(SpaceTimeField::is_time_constant);
        let mut cached: Option<Factor> = None;
        let mut newton_iters = Vec::new();

        let mut ext_n = ext(0);
        let mut q_n = q_at(0);
        for n in 0..self.time.n_steps {
            let ext_next = ext(n + 1);
            let q_next = q_at(n + 1);
            let mut f_n = -(&l_ii * (&ui + &vi)) - q_n.component_mul(&ui) + &ext_n;
            if let Some((fv, _)) = f_at(&ui) {
                f_n -= fv;
            }

            let v_next = match self.nonlinearity {
                None => {
                    let pred = &ui + &vi * half;
                    let rhs = &vi
                        + &f_n * half
                        + (-(&l_ii * &pred) - q_next.component_mul(&pred) + &ext_next) * half;
                    let factor = if constant_q {
                        if cached.is_none() {
                            cached = Factor::new(step_matrix(&q_next));
                        }
                        cached.as_ref()
                    } else {
                        cached = Factor::new(step_matrix(&q_next));
                        cached.as_ref()
                    };
                    factor
                        .and_then(|f| f.solve(&rhs))
                        .ok_or(Error::StepFailure { step: n + 1 })?
                }
                Some(_) => {
                    let scale = vi.amax().max(dt * f_n.amax()).max(dt * ext_next.amax());
                    let mut w = vi.clone();
                    let mut iters = 0;
                    loop {
                        let un = &ui + (&vi + &w) * half;
                        let (fv, fd) = f_at(&un).expect("nonlinearity present");
                        let g = &w
                            - &vi
                            - &f_n * half
                            - (-(&l_ii * (&un + &w)) - q_next.component_mul(&un) + &ext_next - fv)
                                * half;
                        let res = g.amax();
                        if !res.is_finite() {
                            return Err(Error::NewtonDivergence {
                                step: n + 1,
                                residual: res,
                            });
                        }
                        if res <= self.newton.tol * scale {
                            break;
                        }
                        if iters == self.newton.max_iter {
                            return Err(Error::NewtonDivergence {
                                step: n + 1,
                                residual: res,
                            });
                        }
                        let jac = step_matrix(&(&q_next + fd));
                        let delta = jac
                            .lu()
                            .solve(&(-g))
                            .filter(|d| d.iter().all(|x| x.is_finite()))
                            .ok_or(Error::NewtonDivergence {
                                step: n + 1,
                                residual: res,
                            })?;
                        w += delta;
                        iters += 1;
                    }
                    newton_iters.push(iters);
                    w
                }
            };
            ui = &ui + (&vi + &v_next) * half;
            vi = v_next;
            if ui.iter().chain(vi.iter()).any(|x| !x.is_finite()) {
                return Err(Error::StepFailure { step: n + 1 });
            }
            for (k, &i) in omega.iter().enumerate() {
                u.set(n + 1, i, ui[k]);
                v.set(n + 1, i, vi[k]);
            }
            ext_n = ext_next;
            q_n = q_next;
        }

        Ok(Trajectory {
            u,
            v,
            time: self.time,
            scheme: Scheme::CrankNicolson,
            newton_iters,
            control_window: self.control.map(|c| c.window),
        })
    }
}

/// Linear solve with potential `q`, exterior control and interior source.
pub fn solve_linear(
    op: &FracLapOperator,
    q: &SpaceTimeField,
    control: &ExteriorControl,
    source: &SpaceTimeField,
    time: TimeGrid,
) -> Result<Trajectory> {
    ForwardProblem::new(op, time)
        .potential(q)
        .control(control)
        .source(source)
        .solve()
}

/// Nonlinear solve with per-step Newton iteration.
pub fn solve_nonlinear(
    op: &FracLapOperator,
    f: &Nonlinearity,
    control: &ExteriorControl,
    time: TimeGrid,
    newton: NewtonOptions,
) -> Result<Trajectory> {
    ForwardProblem::new(op, time)
        .nonlinearity(f)
        .control(control)
        .newton(newton)
        .solve()
}

/// Potential `d_tau f(base.u)` on omega, zero elsewhere.
pub fn linearized_potential(
    op: &FracLapOperator,
    f: &Nonlinearity,
    base: &Trajectory,
) -> SpaceTimeField {
    let grid = &op.grid;
    let mut q = SpaceTimeField::zeros(base.u.n_times, grid.n_nodes);
    for n in 0..base.u.n_times {
        for &i in &grid.omega {
            q.set(n, i, f.dvalue(i, base.u.get(n, i)));
        }
    }
    q
}

/// Solves the equation linearized around `base` in direction `control`.
pub fn solve_linearized(
    op: &FracLapOperator,
    f: &Nonlinearity,
    base: &Trajectory,
    control: &ExteriorControl,
    time: TimeGrid,
) -> Result<Trajectory> {
    if !base.time.same_as(&time) {
        return Err(Error::Mismatch(
            "base trajectory uses a different time grid".into(),
        ));
    }
    if base.n_nodes() != op.n_nodes() {
        return Err(Error::Mismatch(
            "base trajectory uses a different grid".into(),
        ));
    }
    let q = linearized_potential(op, f, base);
    ForwardProblem::new(op, time)
        .potential(&q)
        .control(control)
        .solve()
}

/// Terms of the energy balance at every time node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub residual: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
}

impl EnergyLedger {
    /// `max |R| / max energy`, or 0 for a trajectory with no energy.
    pub fn max_relative(&self) -> f64 {
        let e = self.energy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let r = self.residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if e == 0.0 {
            r
        } else {
            r / e
        }
    }
}

/// `|v|^2_{L2} + |u|^2_{Hs}` at every time node.
pub fn mechanical_energy(op: &FracLapOperator, traj: &Trajectory) -> Vec<f64> {
    let grid = &op.grid;
    (0..traj.u.n_times)
        .map(|n| {
            let vr = traj.v.row(n);
            let l2 = grid.h * grid.omega.iter().map(|&i| vr[i] * vr[i]).sum::<f64>();
            l2 + op.form(traj.u.row(n), traj.u.row(n))
        })
        .collect()
}

/// Residual of the energy identity for a zero-exterior trajectory.
pub fn energy_ledger(
    op: &FracLapOperator,
    traj: &Trajectory,
    q: &SpaceTimeField,
    source: &SpaceTimeField,
) -> Result<EnergyLedger> {
    let grid = &op.grid;
    let nt = traj.time.n_times();
    q.check_shape(nt, grid.n_nodes, "potential")?;
    source.check_shape(nt, grid.n_nodes, "source")?;
    for n in 0..nt {
        for i in grid.exterior() {
            if traj.u.get(n, i) != 0.0 || traj.v.get(n, i) != 0.0 {
                return Err(Error::Domain(
                    "energy ledger needs a trajectory with zero exterior values".into(),
                ));
            }
        }
    }
    let h = grid.h;
    let dt = traj.time.dt;
    let energy = mechanical_energy(op, traj);
    let mut dissipation = vec![0.0; nt];
    let mut residual = vec![0.0; nt];
    let (mut diss, mut work_h, mut work_q) = (0.0, 0.0, 0.0);
    let mut prev: Option<(f64, f64, f64)> = None;
    for n in 0..nt {
        let vr = traj.v.row(n);
        let ur = traj.u.row(n);
        let d = op.form(vr, vr);
        let hv = h * grid
            .omega
            .iter()
            .map(|&i| source.get(n, i) * vr[i])
            .sum::<f64>();
        let quv = h * grid
            .omega
            .iter()
            .map(|&i| q.get(n, i) * ur[i] * vr[i])
            .sum::<f64>();
        if let Some((d0, hv0, q0)) = prev {
            diss += dt * (d0 + d);
            work_h += dt * (hv0 + hv);
            work_q += dt * (q0 + quv);
        }
        prev = Some((d, hv, quv));
        dissipation[n] = diss;
        residual[n] = energy[n] + diss - energy[0] - work_h + work_q;
    }
    Ok(EnergyLedger {
        residual,
        energy,
        dissipation,
    })
}
