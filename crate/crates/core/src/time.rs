use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_n = n dt`, `n = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::Domain(format!(
                "t_final must be positive, got {t_final}"
            )));
        }
        let steps = (t_final / dt).round();
        if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
            return Err(Error::Domain(format!(
                "t_final = {t_final} is not a whole number of steps dt = {dt}"
            )));
        }
        Ok(Self {
            dt,
            n_steps: steps as usize,
        })
    }

    pub fn n_times(&self) -> usize {
        self.n_steps + 1
    }

    pub fn t_final(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_times()).map(|n| self.t(n)).collect()
    }

    /// Trapezoid weight of node `n`, excluding the factor `dt`.
    pub fn weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.n_steps {
            0.5
        } else {
            1.0
        }
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps && self.dt == other.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count() {
        let tg = TimeGrid::new(0.01, 0.3).unwrap();
        assert_eq!(tg.n_steps, 30);
        assert_eq!(tg.n_times(), 31);
    }

    #[test]
    fn rejects_fractional_steps() {
        assert!(TimeGrid::new(0.3, 1.0).is_err());
        assert!(TimeGrid::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let tg = TimeGrid::new(0.125, 1.0).unwrap();
        let integral: f64 = (0..tg.n_times())
            .map(|n| tg.weight(n) * tg.dt * (3.0 * tg.t(n) + 1.0))
            .sum();
        assert!((integral - 2.5).abs() < 1e-14);
    }
}
