//! Nonlocal viscous wave equations on a 1D grid, their partial
//! Dirichlet-to-Neumann maps, and inverse recovery of potentials and
//! power-law nonlinearities from those maps.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dnmap;
pub mod error;
pub mod field;
pub mod fraclap;
pub mod grid;
pub mod harness;
pub mod inversion;
pub mod nemytskii;
pub mod solver;
pub mod time;

pub use error::{Error, Result};
pub use field::SpaceTimeField;
pub use fraclap::{assemble_fraclap, dualnorm_hminus, norm_l2, seminorm_hs, FracLapOperator};
pub use grid::{build_grid, Grid, Interval, Window};
pub use nemytskii::{power_nonlinearity, Nonlinearity};
pub use solver::{ExteriorControl, NewtonOptions, Trajectory};
pub use time::TimeGrid;

#[cfg(test)]
pub(crate) mod test_util {
    use std::sync::Arc;

    use crate::fraclap::{assemble_fraclap, FracLapOperator};
    use crate::grid::{build_grid, Grid, Interval};

    pub fn grid61() -> Arc<Grid> {
        Arc::new(
            build_grid(
                -1.0,
                2.0,
                61,
                0.0,
                1.0,
                Interval::new(-0.8, -0.2),
                Interval::new(1.2, 1.8),
            )
            .unwrap(),
        )
    }

    pub fn op61(s: f64) -> FracLapOperator {
        assemble_fraclap(grid61(), s).unwrap()
    }
}
