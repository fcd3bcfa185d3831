use std::f64::consts::PI;
use std::sync::Arc;

use biflow::grid::{apply_semigroup, gradient, make_grid, Field, GridSpec, TensorField};
use biflow::initial::{generate, Params};
use biflow::snapshot;
use biflow::solver::{
    etd_solve, evaluate_f, lipschitz_constant, nonlinearities, perturbation_solve, picard_solve, solvers,
    trilinear_psi, Nonlinearity, NonlinearityKind, SolverConfig, Termination,
};
use biflow::trajectory::Trajectory;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn line() -> GridSpec {
    make_grid(1, 256, 8.0 * PI).unwrap()
}

fn cubic(name: &str) -> Arc<dyn Nonlinearity> {
    nonlinearities().get(name).unwrap()
}

fn small(grid: &GridSpec, seed: u64, amplitude: f64) -> Field {
    let p = Params::from([("amplitude".to_string(), amplitude), ("band".to_string(), 4.0)]);
    generate("noise", grid, &p, seed).unwrap()
}

fn constant_gradient(grid: &GridSpec, xi: &[f64]) -> TensorField {
    TensorField::new(grid, 1, xi.iter().map(|&c| Field::constant(grid, c)).collect()).unwrap()
}

#[test]
fn flux_at_sample_gradients() {
    let g = make_grid(2, 16, 1.0).unwrap();
    let f = evaluate_f(&constant_gradient(&g, &[2.0, 0.0]), cubic("cubic_coercive").as_ref(), false).unwrap();
    assert!((f.components()[0].values()[5] - 8.0).abs() < 1e-12);
    assert!(f.components()[1].sup_norm() < 1e-12);
    let power = NonlinearityKind::Power { sigma: -1.0, p: 3.0 }.build().unwrap();
    let f = evaluate_f(&constant_gradient(&g, &[0.0, 3.0]), power.as_ref(), false).unwrap();
    assert!((f.components()[1].values()[0] + 9.0).abs() < 1e-12);
    assert!(NonlinearityKind::Power { sigma: 0.5, p: 3.0 }.build().is_err());
    assert!(NonlinearityKind::Power { sigma: 1.0, p: 2.0 }.build().is_err());
}

#[test]
fn cubic_fluxes_satisfy_the_derivative_bound() {
    for name in ["cubic_coercive", "cubic_noncoercive"] {
        for dim in [1, 2, 3] {
            let c = lipschitz_constant(cubic(name).as_ref(), dim, 10_000, 10.0, 11);
            assert!(c <= 6.0, "{name} dim {dim}: {c}");
        }
    }
}

#[test]
fn zero_data_stays_zero() {
    let g = line();
    let cfg = SolverConfig::default();
    let zero = Field::zeros(&g);
    let (u, diag) = picard_solve(&zero, 1.0, cubic("cubic_coercive").as_ref(), &cfg).unwrap();
    assert_eq!(diag.termination, Termination::Converged);
    assert_eq!(diag.iterations, 1);
    assert!(u.fields().iter().all(|f| f.sup_norm() == 0.0));
    let v = etd_solve(&zero, 1.0, cubic("cubic_noncoercive"), &cfg).unwrap();
    assert!(v.fields().iter().all(|f| f.sup_norm() == 0.0));
}

#[test]
fn linear_flow_matches_the_semigroup() {
    let g = line();
    let a = small(&g, 4, 0.5);
    let u = etd_solve(&a, 0.5, nonlinearities().get("zero").unwrap(), &SolverConfig::default()).unwrap();
    for (t, f) in u.times().iter().zip(u.fields()) {
        assert!(f.max_abs_diff(&apply_semigroup(&a, *t).unwrap()) <= 1e-12, "t={t}");
    }
}

#[test]
fn picard_contracts_and_agrees_with_etd() {
    let g = line();
    let cfg = SolverConfig::default();
    let a = small(&g, 21, 0.05);
    let nl = cubic("cubic_coercive");
    let (u, diag) = picard_solve(&a, 1.0, nl.as_ref(), &cfg).unwrap();
    assert!(diag.converged() && diag.within_budget, "{diag:?}");
    assert!(diag.contraction_ratios.iter().all(|&r| r <= 0.5), "{:?}", diag.contraction_ratios);
    let v = etd_solve(&a, 1.0, nl, &cfg).unwrap();
    let gap = u.last().max_abs_diff(v.last());
    assert!(gap <= 10.0 * cfg.picard_tol, "gap {gap}");
}

#[test]
fn trilinear_operator_properties() {
    let g = line();
    let cfg = SolverConfig::default();
    let times = cfg.time_grid(&g, 0.5).unwrap();
    let traj = |seed| {
        let a = small(&g, seed, 0.2);
        Trajectory::new(times.clone(), times.iter().map(|&t| apply_semigroup(&a, t).unwrap()).collect()).unwrap()
    };
    let (f, h, k) = (traj(1), traj(2), traj(3));
    let zero = Trajectory::zeros(&g, times.clone()).unwrap();
    assert!(trilinear_psi(&zero, &h, &k, 0.5, &cfg).unwrap().sup_norm() == 0.0);
    let a = trilinear_psi(&f, &h, &k, 0.5, &cfg).unwrap();
    let b = trilinear_psi(&h, &f, &k, 0.5, &cfg).unwrap();
    assert!(a.sup_norm() > 0.0);
    assert!(a.max_abs_diff(&b) <= 1e-12 * (1.0 + a.sup_norm()));
    let other = Trajectory::zeros(&make_grid(1, 128, 8.0 * PI).unwrap(), times).unwrap();
    assert!(trilinear_psi(&f, &other, &k, 0.5, &cfg).is_err());
}

#[test]
fn unperturbed_data_has_zero_difference() {
    let g = line();
    let cfg = SolverConfig::default();
    let nl = cubic("cubic_noncoercive");
    let (u, _) = picard_solve(&small(&g, 5, 0.05), 0.5, nl.as_ref(), &cfg).unwrap();
    let (w, diag) = perturbation_solve(&u, &Field::zeros(&g), nl.as_ref(), &cfg).unwrap();
    assert!(diag.converged());
    assert!(w.fields().iter().all(|f| f.sup_norm() == 0.0));
}

#[test]
fn solvers_are_selected_by_name() {
    let g = make_grid(1, 64, 8.0 * PI).unwrap();
    let a = small(&g, 2, 0.02);
    for name in ["picard", "etd"] {
        let out = solvers().get(name).unwrap().solve(&a, 0.1, cubic("cubic_coercive"), &SolverConfig::default());
        let out = out.unwrap();
        assert!((out.trajectory.horizon() - 0.1).abs() < 1e-12);
    }
    assert!(solvers().get("rk4").is_err());
}

#[test]
fn invalid_solver_settings_are_rejected() {
    let g = make_grid(1, 64, 8.0 * PI).unwrap();
    let a = Field::zeros(&g);
    let nl = cubic("cubic_coercive");
    let bad = [
        SolverConfig { time_nodes: 8, ..SolverConfig::default() },
        SolverConfig { grading: 3.0, ..SolverConfig::default() },
        SolverConfig { picard_tol: 0.0, ..SolverConfig::default() },
        SolverConfig { duhamel_rule: "simpson".into(), ..SolverConfig::default() },
    ];
    for cfg in bad {
        assert!(picard_solve(&a, 1.0, nl.as_ref(), &cfg).is_err(), "{cfg:?}");
    }
}

#[test]
fn snapshot_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = make_grid(2, 32, 8.0 * PI).unwrap();
    let a = small(&g, 9, 1.0);
    let path = dir.path().join("a.bifl");
    snapshot::write(&path, &a).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"BIFL");
    assert_eq!(bytes.len(), 16 + 8 * g.len());
    let b = snapshot::read(&path).unwrap();
    assert_eq!(a.values(), b.values());
    assert!(snapshot::read(&dir.path().join("missing.bifl")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 16,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn encoding_is_lossless(seed in 0u64..10_000, two_d in any::<bool>()) {
        let g = if two_d { make_grid(2, 16, 3.0).unwrap() } else { make_grid(1, 64, 3.0).unwrap() };
        let a = small(&g, seed, 2.0);
        let b = snapshot::decode(&snapshot::encode(&a)).unwrap();
        prop_assert_eq!(a.values(), b.values());
        prop_assert_eq!(b.grid().dim(), g.dim());
    }

    #[test]
    fn flux_is_odd(seed in 0u64..10_000) {
        let g = make_grid(1, 64, 8.0 * PI).unwrap();
        let grad = gradient(&small(&g, seed, 1.0));
        let neg = TensorField::new(&g, 1, grad.components().iter().map(|c| c.scaled(-1.0)).collect()).unwrap();
        let nl = cubic("cubic_coercive");
        let f = evaluate_f(&grad, nl.as_ref(), false).unwrap();
        let fm = evaluate_f(&neg, nl.as_ref(), false).unwrap();
        prop_assert!(f.components()[0].max_abs_diff(&fm.components()[0].scaled(-1.0)) == 0.0);
    }
}
