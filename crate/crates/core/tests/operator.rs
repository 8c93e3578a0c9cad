mod common;

use fracwave::fraclap::{norm_l2, seminorm_hs, stencil_symbol};
use proptest::prelude::*;

fn omega_vector(op: &fracwave::FracLapOperator, raw: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; op.n_nodes()];
    for (k, &i) in op.grid.omega.iter().enumerate() {
        v[i] = raw[k % raw.len()];
    }
    v
}

proptest! {
    #![proptest_config(common::proptest_config(32))]

    #[test]
    fn symmetric_with_nonpositive_offdiagonals(s in 0.05f64..0.95, n in 20usize..90) {
        let op = common::op(n, s);
        let m = &op.matrix;
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
                if i != j {
                    prop_assert!(m[(i, j)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn omega_block_positive_definite(s in 0.05f64..0.95, n in 20usize..90) {
        let op = common::op(n, s);
        prop_assert!(op.omega_spectrum()[0] > 0.0);
    }

    #[test]
    fn poincare_inequality(s in 0.05f64..0.95, raw in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let op = common::op(61, s);
        let v = omega_vector(&op, &raw);
        let c = op.poincare_constant();
        let l2 = norm_l2(&op.grid, &v);
        let hs = seminorm_hs(&op, &v);
        prop_assert!(l2 * l2 <= c * hs * hs * (1.0 + 1e-10) + 1e-300);
    }

    #[test]
    fn parallelogram_law(
        s in 0.05f64..0.95,
        a in prop::collection::vec(-1.0f64..1.0, 19),
        b in prop::collection::vec(-1.0f64..1.0, 19),
    ) {
        let op = common::op(61, s);
        let (v, w) = (omega_vector(&op, &a), omega_vector(&op, &b));
        let sum: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x + y).collect();
        let diff: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x - y).collect();
        let n2 = |x: &[f64]| seminorm_hs(&op, x).powi(2);
        let lhs = n2(&sum) + n2(&diff);
        let rhs = 2.0 * (n2(&v) + n2(&w));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1e-300));
    }

    #[test]
    fn bilinear_form_symmetric(
        s in 0.05f64..0.95,
        a in prop::collection::vec(-1.0f64..1.0, 61),
        b in prop::collection::vec(-1.0f64..1.0, 61),
    ) {
        let op = common::op(61, s);
        let (x, y) = (op.form(&a, &b), op.form(&b, &a));
        prop_assert!((x - y).abs() <= 1e-12 * (x.abs() + 1.0));
    }
}

#[test]
fn symbol_error_shrinks_with_h() {
    let xi = 2.0 * std::f64::consts::PI;
    for s in [0.3, 0.5, 0.8] {
        let errs: Vec<f64> = [0.01, 0.005, 0.0025]
            .iter()
            .map(|&h| (stencil_symbol(s, h, xi) / xi.powf(2.0 * s) - 1.0).abs())
            .collect();
        let order = (errs[1] / errs[2]).log2();
        eprintln!("s {s}: errors {errs:?}, observed order {order:.3}");
        assert!(errs[1] < errs[0] && errs[2] < errs[1]);
    }
}
