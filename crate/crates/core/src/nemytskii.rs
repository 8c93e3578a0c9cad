//! Carathéodory nonlinearities `f(x, tau)` acting pointwise on space-time
//! fields, with their `tau`-derivative.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::grid::{Grid, Interval};

pub type NodeFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Nonlinearity {
    value: NodeFn,
    dvalue: NodeFn,
    pub r: f64,
    pub coeff: Option<Vec<f64>>,
    pub homogeneous: bool,
    pub tag: String,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("tag", &self.tag)
            .field("r", &self.r)
            .field("homogeneous", &self.homogeneous)
            .finish()
    }
}

impl Nonlinearity {
    /// Wraps an arbitrary pair `(f, d_tau f)`. `homogeneous` declares
    /// `f(i, lambda tau) = lambda^{r+1} f(i, tau)` for `lambda > 0`.
    pub fn new(
        value: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        dvalue: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        r: f64,
        homogeneous: bool,
        tag: impl Into<String>,
    ) -> Self {
        Self {
            value: Arc::new(value),
            dvalue: Arc::new(dvalue),
            r,
            coeff: None,
            homogeneous,
            tag: tag.into(),
        }
    }

    pub fn value(&self, i: usize, tau: f64) -> f64 {
        (self.value)(i, tau)
    }

    pub fn dvalue(&self, i: usize, tau: f64) -> f64 {
        (self.dvalue)(i, tau)
    }

    /// Nodes among `nodes` where `f(i, 0) != 0`.
    pub fn nonzero_at_origin(&self, nodes: &[usize]) -> Vec<usize> {
        nodes
            .iter()
            .copied()
            .filter(|&i| self.value(i, 0.0) != 0.0)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeff
            .as_ref()
            .is_some_and(|c| c.iter().all(|v| *v == 0.0))
    }
}

/// `f(i, tau) = coeff_i |tau|^r tau`.
pub fn power_nonlinearity(coeff: Vec<f64>, r: f64) -> Result<Nonlinearity> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("exponent r must be >= 0, got {r}")));
    }
    if coeff.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("nonlinearity coefficient".into()));
    }
    let c1 = Arc::new(coeff.clone());
    let c2 = Arc::clone(&c1);
    let value = move |i: usize, tau: f64| c1[i] * tau.abs().powf(r) * tau;
    let dvalue = move |i: usize, tau: f64| {
        if tau == 0.0 && r > 0.0 {
            0.0
        } else {
            (r + 1.0) * c2[i] * tau.abs().powf(r)
        }
    };
    Ok(Nonlinearity {
        value: Arc::new(value),
        dvalue: Arc::new(dvalue),
        r,
        coeff: Some(coeff),
        homogeneous: true,
        tag: format!("power(r={r})"),
    })
}

fn map_omega(
    grid: &Grid,
    u: &SpaceTimeField,
    what: &str,
    g: impl Fn(usize, usize, f64) -> f64,
) -> Result<SpaceTimeField> {
    u.check_finite(what)?;
    if u.n_nodes != grid.n_nodes {
        return Err(Error::Mismatch(format!(
            "{what} has {} nodes, grid has {}",
            u.n_nodes, grid.n_nodes
        )));
    }
    let mut out = SpaceTimeField::zeros(u.n_times, u.n_nodes);
    for n in 0..u.n_times {
        for &i in &grid.omega {
            out.set(n, i, g(n, i, u.get(n, i)));
        }
    }
    out.check_finite("nonlinearity output")?;
    Ok(out)
}

/// Pointwise `f(x, u)` on omega; exterior nodes are zero.
pub fn apply(f: &Nonlinearity, grid: &Grid, u: &SpaceTimeField) -> Result<SpaceTimeField> {
    map_omega(grid, u, "nonlinearity argument", |_, i, tau| {
        f.value(i, tau)
    })
}

/// Pointwise `d_tau f(x, u) * hdir` on omega.
pub fn apply_derivative(
    f: &Nonlinearity,
    grid: &Grid,
    u: &SpaceTimeField,
    hdir: &SpaceTimeField,
) -> Result<SpaceTimeField> {
    if !u.same_shape(hdir) {
        return Err(Error::Mismatch(
            "direction and base field shapes differ".into(),
        ));
    }
    hdir.check_finite("derivative direction")?;
    map_omega(grid, u, "nonlinearity argument", |n, i, tau| {
        f.dvalue(i, tau) * hdir.get(n, i)
    })
}

/// Discrete `L^inf(0,T; L^2(Omega))` norm with the grid spacing weight.
pub fn linf_l2(grid: &Grid, u: &SpaceTimeField) -> f64 {
    u.rows()
        .map(|row| (grid.h * grid.omega.iter().map(|&i| row[i] * row[i]).sum::<f64>()).sqrt())
        .fold(0.0, f64::max)
}

/// Discrete `L^q(0,T; L^p(Omega))` norm with trapezoid time weights.
pub fn lq_lp(grid: &Grid, u: &SpaceTimeField, dt: f64, q: f64, p: f64) -> f64 {
    let last = u.n_times.saturating_sub(1);
    let mut acc = 0.0;
    for (n, row) in u.rows().enumerate() {
        let sp = grid.h
            * grid
                .omega
                .iter()
                .map(|&i| row[i].abs().powf(p))
                .sum::<f64>();
        let w = if n == 0 || n == last { 0.5 } else { 1.0 };
        acc += w * dt * sp.powf(q / p);
    }
    acc.powf(1.0 / q)
}

/// Growth bound `|d_tau f| <= A + B |tau|^r` measured on samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub max_violation: f64,
    pub range: [f64; 2],
}

pub const MIN_GROWTH_SAMPLES: usize = 100;

/// Fits `A` at the sample closest to `tau = 0` and `B` on the half of the
/// range nearest the origin, then reports the largest excess of `|d_tau f|`
/// over `A + B |tau|^r` on the full range.
pub fn certify_growth(
    f: &Nonlinearity,
    nodes: &[usize],
    tau_range: Interval,
    samples: usize,
) -> Result<GrowthReport> {
    if samples < MIN_GROWTH_SAMPLES {
        return Err(Error::Domain(format!(
            "certify_growth needs at least {MIN_GROWTH_SAMPLES} samples, got {samples}"
        )));
    }
    if tau_range.is_empty() {
        return Err(Error::Domain("empty tau range".into()));
    }
    let taus: Vec<f64> = (0..samples)
        .map(|k| tau_range.lo + tau_range.len() * k as f64 / (samples - 1) as f64)
        .collect();
    let reach = taus.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let tau0 = taus
        .iter()
        .copied()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    let r = f.r;

    let a = nodes
        .iter()
        .map(|&i| f.dvalue(i, tau0).abs())
        .fold(0.0, f64::max);
    let mut b = 0.0f64;
    for &tau in taus.iter().filter(|t| t.abs() <= 0.5 * reach && **t != 0.0) {
        let scale = tau.abs().powf(r);
        for &i in nodes {
            b = b.max((f.dvalue(i, tau).abs() - a).max(0.0) / scale);
        }
    }
    let mut max_violation = 0.0f64;
    for &tau in &taus {
        let bound = a + b * tau.abs().powf(r);
        for &i in nodes {
            let excess = f.dvalue(i, tau).abs() - bound;
            if excess > 1e-12 * bound.max(f64::MIN_POSITIVE) {
                max_violation = max_violation.max(excess);
            }
        }
    }
    Ok(GrowthReport {
        a,
        b,
        max_violation,
        range: [tau_range.lo, tau_range.hi],
    })
}

/// Checks the exponent restrictions for one space dimension and returns a
/// warning for each one that fails. Integrability of the growth coefficient
/// holds for every `p` on a finite grid, so only `r` can violate them.
pub fn exponent_warnings(s: f64, f: &Nonlinearity) -> Vec<String> {
    let mut out = Vec::new();
    let r = f.r;
    if 2.0 * s < 1.0 {
        let r_max = 2.0 * s / (1.0 - 2.0 * s);
        if r > r_max {
            out.push(format!(
                "r = {r} exceeds 2s/(1-2s) = {r_max:.6} for s = {s}; well-posedness theory does not cover this nonlinearity"
            ));
        }
    }
    if f.homogeneous && !(r > 0.0 && r <= 2.0) {
        out.push(format!(
            "homogeneous nonlinearity with r = {r} lies outside 0 < r <= 2 where uniqueness is known"
        ));
    }
    out
}
