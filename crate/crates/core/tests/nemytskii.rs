mod common;

use fracwave::nemytskii::{apply, apply_derivative, certify_growth, linf_l2, lq_lp};
use fracwave::{power_nonlinearity, Interval, SpaceTimeField};
use proptest::prelude::*;

fn field(nt: usize, raw: &[f64]) -> SpaceTimeField {
    SpaceTimeField::from_fn(nt, 61, |n, i| raw[(n * 61 + i) % raw.len()])
}

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

proptest! {
    #![proptest_config(common::proptest_config(64))]

    #[test]
    fn homogeneity(
        r in prop_oneof![Just(1.0), Just(2.0), 0.1f64..3.0],
        coeff in -2.0f64..2.0,
        tau in -5.0f64..5.0,
    ) {
        let f = power_nonlinearity(vec![coeff; 61], r).unwrap();
        for lambda in [0.5, 2.0, 10.0] {
            let lhs = f.value(30, lambda * tau);
            let rhs = lambda.powf(r + 1.0) * f.value(30, tau);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn frechet_remainder_is_second_order(
        r in prop_oneof![Just(1.0), Just(2.0)],
        u_raw in prop::collection::vec(0.2f64..1.5, 61),
        h_raw in prop::collection::vec(-1.0f64..1.0, 61),
    ) {
        let grid = common::grid(61);
        let coeff: Vec<f64> = (0..61).map(|i| 1.0 + 0.01 * i as f64).collect();
        let f = power_nonlinearity(coeff, r).unwrap();
        let u = field(3, &u_raw);
        let h = field(3, &h_raw);
        let fu = apply(&f, &grid, &u).unwrap();
        let eps = [1e-1, 1e-2, 1e-3];
        let ratios: Vec<f64> = eps.iter().map(|&e| {
            let hh = h.scaled(e);
            let rem = apply(&f, &grid, &u.add(&hh)).unwrap()
                .sub(&fu)
                .sub(&apply_derivative(&f, &grid, &u, &hh).unwrap());
            linf_l2(&grid, &rem) / linf_l2(&grid, &hh)
        }).collect();
        let slope = loglog_slope(&eps, &ratios);
        prop_assert!((slope - 1.0).abs() <= 0.1, "slope {}", slope);
    }

    #[test]
    fn continuity_along_sequences(
        r in 0.5f64..2.0,
        u_raw in prop::collection::vec(-1.0f64..1.0, 30..61),
        w_raw in prop::collection::vec(-1.0f64..1.0, 30..61),
    ) {
        let grid = common::grid(61);
        let f = power_nonlinearity(vec![1.0; 61], r).unwrap();
        let (u, w) = (field(5, &u_raw), field(5, &w_raw));
        let fu = apply(&f, &grid, &u).unwrap();
        let dt = 0.25;
        let p = r + 2.0;
        let mut last = f64::INFINITY;
        for k in 1..8 {
            let uk = u.add(&w.scaled(0.5f64.powi(k)));
            let dist = lq_lp(&grid, &apply(&f, &grid, &uk).unwrap().sub(&fu), dt, 2.0, p / (r + 1.0));
            prop_assert!(dist <= last * (1.0 + 1e-12));
            last = dist;
        }
        prop_assert!(last < 0.1 * lq_lp(&grid, &w, dt, 2.0, p).max(1e-300) + 1e-14);
    }
}

#[test]
fn power_law_growth_is_certified() {
    for r in [1.0, 2.0] {
        let f = power_nonlinearity(vec![1.5; 61], r).unwrap();
        let rep = certify_growth(&f, &[30], Interval::new(-3.0, 3.0), 401).unwrap();
        assert!(rep.max_violation <= 0.0, "{rep:?}");
        // |d_tau f| = (r + 1) 1.5 |tau|^r exactly
        assert!(rep.a.abs() < 1e-12);
        assert!((rep.b - (r + 1.0) * 1.5).abs() < 1e-9, "{rep:?}");
    }
}
