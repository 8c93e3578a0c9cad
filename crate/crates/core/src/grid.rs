//! Uniform 1D computational box with the domain, its exterior collar and the
//! two measurement windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-open coordinate interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

/// One of the two exterior windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    W1,
    W2,
}

impl Window {
    pub fn other(self) -> Window {
        match self {
            Window::W1 => Window::W2,
            Window::W2 => Window::W1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Omega,
    Window(Window),
    Collar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub box_lo: f64,
    pub box_hi: f64,
    pub n_nodes: usize,
    pub h: f64,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub omega: Vec<usize>,
    pub w1: Vec<usize>,
    pub w2: Vec<usize>,
}

pub const MIN_NODES: usize = 16;

/// Builds the grid and its index sets.
///
/// Omega holds the nodes strictly inside `(omega_lo, omega_hi)`; window
/// membership is half-open, `lo <= x < hi`. Coordinates within `1e-9 h` of an
/// interval endpoint are treated as lying on it.
pub fn build_grid(
    box_lo: f64,
    box_hi: f64,
    n_nodes: usize,
    omega_lo: f64,
    omega_hi: f64,
    w1: Interval,
    w2: Interval,
) -> Result<Grid> {
    let bad = |msg: &str| Err(Error::InvalidGrid(msg.to_string()));
    let all = [
        box_lo, box_hi, omega_lo, omega_hi, w1.lo, w1.hi, w2.lo, w2.hi,
    ];
    if all.iter().any(|v| !v.is_finite()) {
        return bad("non-finite coordinate");
    }
    if n_nodes < MIN_NODES {
        return Err(Error::InvalidGrid(format!(
            "n_nodes = {n_nodes} is below the minimum of {MIN_NODES}"
        )));
    }
    if box_lo >= box_hi {
        return bad("box_lo must be below box_hi");
    }
    if omega_lo >= omega_hi {
        return bad("empty omega");
    }
    if omega_lo <= box_lo || omega_hi >= box_hi {
        return bad("no exterior collar");
    }
    for (name, w) in [("w1", w1), ("w2", w2)] {
        if w.is_empty() {
            return Err(Error::InvalidGrid(format!("window {name} is empty")));
        }
        if w.lo < box_lo || w.hi > box_hi {
            return Err(Error::InvalidGrid(format!("window {name} leaves the box")));
        }
        if w.lo <= omega_hi && w.hi > omega_lo {
            return Err(Error::InvalidGrid(format!(
                "window {name} intersects the closure of omega"
            )));
        }
    }
    if w1.lo < w2.hi && w2.lo < w1.hi {
        return bad("windows overlap");
    }

    let h = (box_hi - box_lo) / (n_nodes - 1) as f64;
    let tol = 1e-9 * h;
    let x = |i: usize| box_lo + i as f64 * h;
    let omega: Vec<usize> = (0..n_nodes)
        .filter(|&i| x(i) > omega_lo + tol && x(i) < omega_hi - tol)
        .collect();
    let in_window = |w: Interval| -> Vec<usize> {
        (0..n_nodes)
            .filter(|&i| x(i) >= w.lo - tol && x(i) < w.hi - tol)
            .collect()
    };
    let w1_idx = in_window(w1);
    let w2_idx = in_window(w2);

    if omega.is_empty() {
        return bad("empty omega");
    }
    let first = omega[0];
    let last = omega[omega.len() - 1];
    if first == 0 || last == n_nodes - 1 {
        return bad("no exterior collar");
    }
    if w1_idx.is_empty() {
        return bad("window w1 contains no nodes");
    }
    if w2_idx.is_empty() {
        return bad("window w2 contains no nodes");
    }

    Ok(Grid {
        box_lo,
        box_hi,
        n_nodes,
        h,
        omega_lo,
        omega_hi,
        omega,
        w1: w1_idx,
        w2: w2_idx,
    })
}

impl Grid {
    pub fn x(&self, i: usize) -> f64 {
        self.box_lo + i as f64 * self.h
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|i| self.x(i)).collect()
    }

    pub fn omega_coords(&self) -> Vec<f64> {
        self.omega.iter().map(|&i| self.x(i)).collect()
    }

    pub fn window(&self, w: Window) -> &[usize] {
        match w {
            Window::W1 => &self.w1,
            Window::W2 => &self.w2,
        }
    }

    pub fn role(&self, i: usize) -> NodeRole {
        if self.omega.binary_search(&i).is_ok() {
            NodeRole::Omega
        } else if self.w1.binary_search(&i).is_ok() {
            NodeRole::Window(Window::W1)
        } else if self.w2.binary_search(&i).is_ok() {
            NodeRole::Window(Window::W2)
        } else {
            NodeRole::Collar
        }
    }

    pub fn is_omega(&self, i: usize) -> bool {
        self.omega.binary_search(&i).is_ok()
    }

    /// All nodes outside omega, in increasing order.
    pub fn exterior(&self) -> Vec<usize> {
        (0..self.n_nodes).filter(|&i| !self.is_omega(i)).collect()
    }

    /// Position of node `i` within the omega index list.
    pub fn omega_position(&self, i: usize) -> Option<usize> {
        self.omega.binary_search(&i).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_grid() -> Result<Grid> {
        build_grid(
            -1.0,
            2.0,
            61,
            0.0,
            1.0,
            Interval::new(-0.8, -0.2),
            Interval::new(1.2, 1.8),
        )
    }

    #[test]
    fn spec_grid_counts() {
        let g = spec_grid().unwrap();
        assert!((g.h - 0.05).abs() < 1e-15);
        // direct enumeration of -1 + 0.05 i inside the open unit interval
        let count = (0..61)
            .map(|i| -1.0 + 0.05 * i as f64)
            .filter(|x| *x > 1e-9 && *x < 1.0 - 1e-9)
            .count();
        assert_eq!(count, 19);
        assert_eq!(g.omega.len(), 19);
        assert_eq!(g.w1.len(), 12);
        assert_eq!(g.w2.len(), 12);
    }

    #[test]
    fn index_sets_disjoint() {
        let g = spec_grid().unwrap();
        for i in 0..g.n_nodes {
            let hits = [g.is_omega(i), g.w1.contains(&i), g.w2.contains(&i)]
                .iter()
                .filter(|b| **b)
                .count();
            assert!(hits <= 1);
        }
    }

    #[test]
    fn overlapping_windows_rejected() {
        let e = build_grid(
            -1.0,
            2.0,
            61,
            0.0,
            1.0,
            Interval::new(-0.8, -0.2),
            Interval::new(-0.5, -0.1),
        )
        .unwrap_err();
        assert!(e.to_string().contains("windows overlap"));
    }

    #[test]
    fn omega_touching_box_rejected() {
        let e = build_grid(
            -1.0,
            1.0,
            61,
            0.0,
            1.0,
            Interval::new(-0.8, -0.2),
            Interval::new(-0.1, -0.05),
        )
        .unwrap_err();
        assert!(e.to_string().contains("no exterior collar"));
    }

    #[test]
    fn window_in_omega_rejected() {
        let e = build_grid(
            -1.0,
            2.0,
            61,
            0.0,
            1.0,
            Interval::new(0.2, 0.4),
            Interval::new(1.2, 1.8),
        )
        .unwrap_err();
        assert!(e.to_string().contains("closure of omega"));
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(build_grid(
            -1.0,
            2.0,
            10,
            0.0,
            1.0,
            Interval::new(-0.8, -0.2),
            Interval::new(1.2, 1.8)
        )
        .is_err());
    }
}
