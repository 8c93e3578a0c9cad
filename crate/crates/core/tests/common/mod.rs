#![allow(dead_code)]

use std::sync::Arc;

use fracwave::{assemble_fraclap, build_grid, FracLapOperator, Grid, Interval};

pub fn grid(n: usize) -> Arc<Grid> {
    Arc::new(
        build_grid(
            -1.0,
            2.0,
            n,
            0.0,
            1.0,
            Interval::new(-0.8, -0.2),
            Interval::new(1.2, 1.8),
        )
        .unwrap(),
    )
}

pub fn op(n: usize, s: f64) -> FracLapOperator {
    assemble_fraclap(grid(n), s).unwrap()
}

pub fn proptest_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}
