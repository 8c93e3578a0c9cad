use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodal values on the time grid, stored row-major as `time x node`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    pub n_times: usize,
    pub n_nodes: usize,
    pub data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(n_times: usize, n_nodes: usize) -> Self {
        Self {
            n_times,
            n_nodes,
            data: vec![0.0; n_times * n_nodes],
        }
    }

    pub fn from_fn(n_times: usize, n_nodes: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_times * n_nodes);
        for n in 0..n_times {
            for i in 0..n_nodes {
                data.push(f(n, i));
            }
        }
        Self {
            n_times,
            n_nodes,
            data,
        }
    }

    /// Repeats one spatial profile at every time node.
    pub fn constant_in_time(n_times: usize, profile: &[f64]) -> Self {
        Self::from_fn(n_times, profile.len(), |_, i| profile[i])
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_times = rows.len();
        let n_nodes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_nodes) {
            return Err(Error::Mismatch("ragged field rows".into()));
        }
        Ok(Self {
            n_times,
            n_nodes,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.data[n * self.n_nodes + i]
    }

    pub fn set(&mut self, n: usize, i: usize, value: f64) {
        self.data[n * self.n_nodes + i] = value;
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_nodes..(n + 1) * self.n_nodes]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.n_nodes..(n + 1) * self.n_nodes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_nodes.max(1))
    }

    pub fn same_shape(&self, other: &SpaceTimeField) -> bool {
        self.n_times == other.n_times && self.n_nodes == other.n_nodes
    }

    pub fn check_shape(&self, n_times: usize, n_nodes: usize, what: &str) -> Result<()> {
        if self.n_times != n_times || self.n_nodes != n_nodes {
            return Err(Error::Mismatch(format!(
                "{what} has shape {}x{}, expected {n_times}x{n_nodes}",
                self.n_times, self.n_nodes
            )));
        }
        Ok(())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Reverses the time index.
    pub fn reversed(&self) -> Self {
        let last = self.n_times.saturating_sub(1);
        Self::from_fn(self.n_times, self.n_nodes, |n, i| self.get(last - n, i))
    }

    pub fn is_time_constant(&self) -> bool {
        self.rows().all(|r| r == self.row(0))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            n_times: self.n_times,
            n_nodes: self.n_nodes,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    pub fn zip_with(&self, other: &SpaceTimeField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.same_shape(other), "field shapes differ");
        Self {
            n_times: self.n_times,
            n_nodes: self.n_nodes,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn add(&self, other: &SpaceTimeField) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpaceTimeField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverse_is_involution() {
        let f = SpaceTimeField::from_fn(5, 3, |n, i| (n * 3 + i) as f64);
        assert_eq!(f.reversed().reversed(), f);
    }

    #[test]
    fn reverse_of_ramp() {
        let dt = 0.25;
        let f = SpaceTimeField::from_fn(5, 1, |n, _| n as f64 * dt);
        let r = f.reversed();
        for n in 0..5 {
            assert_eq!(r.get(n, 0), 1.0 - n as f64 * dt);
        }
    }

    #[test]
    fn constant_field_unchanged_by_reverse() {
        let f = SpaceTimeField::constant_in_time(7, &[1.0, -2.0, 3.5]);
        assert!(f.is_time_constant());
        assert_eq!(f.reversed(), f);
    }
}
