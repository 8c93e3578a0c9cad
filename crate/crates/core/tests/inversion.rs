mod common;

use fracwave::dnmap::{dn_matrix_linear, TimeReverse};
use fracwave::inversion::{
    estimate_homogeneity_exponent, ground_state_target, normalized_drives,
    recover_linear_potential, synthesize_control, window_basis, LinearInversionConfig,
    NonlinearModel, RungeProblem, TimeWindow,
};
use fracwave::solver::ForwardProblem;
use fracwave::{power_nonlinearity, NewtonOptions, SpaceTimeField, TimeGrid, Window};
use proptest::prelude::*;

fn omega_profile(op: &fracwave::FracLapOperator, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..op.n_nodes())
        .map(|i| {
            if op.grid.is_omega(i) {
                f(op.grid.x(i))
            } else {
                0.0
            }
        })
        .collect()
}

fn windows(t_final: f64, k: usize) -> Vec<TimeWindow> {
    let w = t_final / (k + 1) as f64;
    (1..=k)
        .map(|j| TimeWindow {
            center: j as f64 * w,
            half_width: w,
        })
        .collect()
}

#[test]
fn recovery_is_exact_for_synthetic_identity_data() {
    let op = common::op(61, 0.7);
    let time = TimeGrid::new(0.01, 0.3).unwrap();
    let nt = time.n_times();
    let g = &op.grid;
    let controls = window_basis(g, &time, Window::W1, 8).unwrap();
    let probes = window_basis(g, &time, Window::W2, 8).unwrap();
    let zero = SpaceTimeField::zeros(nt, 61);
    let background = dn_matrix_linear(&op, &zero, &controls, &probes, time).unwrap();
    let qp = omega_profile(&op, |x| 0.3 + (3.0 * x).sin());
    // right sides sum q u_a (u_b)* built from background states only
    let interior = |c: &fracwave::ExteriorControl| {
        let u = ForwardProblem::new(&op, time).control(c).solve().unwrap().u;
        SpaceTimeField::from_fn(nt, 61, |n, i| if g.is_omega(i) { u.get(n, i) } else { 0.0 })
    };
    let ua: Vec<SpaceTimeField> = controls.iter().map(interior).collect();
    let ub: Vec<SpaceTimeField> = probes
        .iter()
        .map(|p| interior(&p.time_reverse()).time_reverse())
        .collect();
    let mut data = background.clone();
    for (a, row) in data.pairings.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for n in 0..nt {
                let s: f64 = g
                    .omega
                    .iter()
                    .map(|&i| qp[i] * ua[a].get(n, i) * ub[b].get(n, i))
                    .sum();
                acc += time.weight(n) * s;
            }
            *v += acc * time.dt * g.h;
        }
    }
    let truth = SpaceTimeField::constant_in_time(nt, &qp);
    let cfg = LinearInversionConfig {
        targets: windows(0.3, 1),
        alpha_runge: 1e-8,
        alpha_inv: 1e-12,
        time_knots: 1,
    };
    let rec = recover_linear_potential(&data, &background, &op, &cfg).unwrap();
    // the floor is set by the conditioning of the kernel, not by modelling error
    let err = rec.relative_error(&truth, &time);
    assert!(err < 2e-3, "relative error {err}");
}

#[test]
fn reversed_potential_gives_reversed_estimate() {
    let op = common::op(61, 0.7);
    let time = TimeGrid::new(0.01, 0.3).unwrap();
    let nt = time.n_times();
    let g = &op.grid;
    let controls = window_basis(g, &time, Window::W1, 8).unwrap();
    let probes = window_basis(g, &time, Window::W2, 8).unwrap();
    let zero = SpaceTimeField::zeros(nt, 61);
    let background = dn_matrix_linear(&op, &zero, &controls, &probes, time).unwrap();
    let gx = omega_profile(&op, |x| 0.5 * (-50.0 * (x - 0.5f64).powi(2)).exp());
    let q = SpaceTimeField::from_fn(nt, 61, |n, i| gx[i] * time.t(n) / 0.3);
    let cfg = LinearInversionConfig {
        targets: windows(0.3, 2),
        alpha_runge: 1e-8,
        alpha_inv: 1e-6,
        time_knots: 2,
    };
    let est = |q: &SpaceTimeField| {
        let data = dn_matrix_linear(&op, q, &controls, &probes, time).unwrap();
        recover_linear_potential(&data, &background, &op, &cfg)
            .unwrap()
            .field(61, &time)
    };
    let (a, b) = (est(&q), est(&q.time_reverse()));
    let diff = a.sub(&b.time_reverse()).max_abs();
    assert!(diff <= 0.1 * a.max_abs(), "{diff} vs {}", a.max_abs());
}

#[test]
fn runge_error_nonincreasing_on_nested_bases() {
    let op = common::op(61, 0.5);
    let time = TimeGrid::new(0.01, 1.0).unwrap();
    let zero = SpaceTimeField::zeros(time.n_times(), 61);
    let target = ground_state_target(&op, &time);
    let mut last = f64::INFINITY;
    for m in [4, 8, 16] {
        let prob = RungeProblem {
            target: target.clone(),
            window: Window::W1,
            alpha: 1e-12,
            time_intervals: m,
        };
        let r = synthesize_control(&op, &zero, &prob, time).unwrap();
        assert!(
            r.achieved_error <= last * (1.0 + 1e-9),
            "M {m}: {} > {last}",
            r.achieved_error
        );
        last = r.achieved_error;
    }
}

proptest! {
    #![proptest_config(common::proptest_config(4))]

    #[test]
    fn exponent_slope_invariant_under_coefficient_scaling(lambda in 0.2f64..5.0, r in prop_oneof![Just(1.0), Just(2.0)]) {
        let op = common::op(61, 0.7);
        let time = TimeGrid::new(0.01, 0.3).unwrap();
        let drives = normalized_drives(&op, &time, 3, 8).unwrap();
        let probes = window_basis(&op.grid, &time, Window::W2, 8).unwrap();
        let coeff = omega_profile(&op, |x| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * x).sin());
        let slope = |c: Vec<f64>| {
            let f = power_nonlinearity(c, r).unwrap();
            let model = NonlinearModel { op: &op, f: &f, time, newton: NewtonOptions::default() };
            estimate_homogeneity_exponent(&op, &model, &drives[1], &probes[7], &[0.1, 0.03, 0.01], time)
                .unwrap()
                .slope
        };
        let base = slope(coeff.clone());
        let scaled = slope(coeff.iter().map(|c| lambda * c).collect());
        prop_assert!((base - scaled).abs() <= 0.02, "{} vs {}", base, scaled);
    }
}
