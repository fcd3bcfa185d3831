use std::f64::consts::PI;

use approx::assert_relative_eq;
use biflow::grid::{apply_semigroup, make_grid, Field, GridSpec};
use biflow::initial::{generate, Params};
use biflow::norms::{
    carleson_bmo, energy, lpt_norm, morrey_norm, morrey_norm_with, oscillation_bmo, oscillation_bmo_with, xt_norm,
    BallFamily, NormSettings,
};
use biflow::solver::free_evolution;
use biflow::trajectory::{graded_times, Trajectory};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn noise(grid: &GridSpec, seed: u64) -> Field {
    generate("noise", grid, &Params::from([("band".to_string(), 6.0)]), seed).unwrap()
}

fn line() -> GridSpec {
    make_grid(1, 128, 8.0 * PI).unwrap()
}

/// Brute-force sup of mean oscillation over every center and the same radius ladder.
fn oscillation_oracle(field: &Field, radius: f64) -> f64 {
    let family = BallFamily::new(field.grid(), radius, 1).unwrap();
    let mut idx = Vec::new();
    let mut best = 0.0f64;
    for &c in family.centers() {
        for r in 0..family.radii().len() {
            family.ball_indices(c, r, &mut idx);
            if idx.len() < 8 {
                continue;
            }
            let v: Vec<f64> = idx.iter().map(|&j| field.values()[j]).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            best = best.max(v.iter().map(|x| (x - mean).abs()).sum::<f64>() / v.len() as f64);
        }
    }
    best
}

#[test]
fn constants_have_no_oscillation() {
    let g = line();
    let c = Field::constant(&g, 4.0);
    assert_eq!(oscillation_bmo(&c, g.box_length() / 4.0).unwrap(), 0.0);
    assert!(carleson_bmo(&c, 2.0).unwrap() < 1e-12);
    assert_eq!(energy(&Field::zeros(&g), 1.0), 0.0);
    assert_eq!(morrey_norm(&Field::zeros(&g), 2.0, 0.5).unwrap(), 0.0);
}

#[test]
fn oscillation_of_a_sine_matches_brute_force() {
    let g = make_grid(1, 256, 2.0 * PI).unwrap();
    let a = Field::from_fn(&g, |x| x[0].sin()).unwrap();
    let radius = g.box_length() / 4.0;
    let strided = oscillation_bmo(&a, radius).unwrap();
    let full = oscillation_bmo_with(&a, radius, &NormSettings::default().with_stride(1)).unwrap().value;
    assert_relative_eq!(full, oscillation_oracle(&a, radius), max_relative = 1e-12);
    assert!(full > 0.0 && strided <= full);
    assert!((full - strided) / full < 0.05);
}

#[test]
fn oscillation_is_monotone_in_the_radius() {
    let g = line();
    let a = noise(&g, 7);
    let mut last = 0.0;
    for r in [PI / 2.0, PI, 2.0 * PI] {
        let v = oscillation_bmo(&a, r).unwrap();
        assert!(v >= last, "R={r}: {v} < {last}");
        last = v;
    }
}

#[test]
fn single_mode_energy_matches_closed_form() {
    let l = 2.0 * PI * 3.0;
    let g = make_grid(1, 128, l).unwrap();
    let (amp, k) = (0.7, 2.0 * PI / l);
    let u = Field::from_fn(&g, |x| amp * (k * x[0]).sin()).unwrap();
    let bending = 0.5 * amp * amp * k.powi(4) * l / 2.0;
    let quartic = 0.25 * amp.powi(4) * k.powi(4) * 3.0 * l / 8.0;
    assert_relative_eq!(energy(&u, 1.0), bending + quartic, max_relative = 1e-12);
    assert_relative_eq!(energy(&u, -1.0), bending - quartic, max_relative = 1e-12);
}

#[test]
fn morrey_norm_of_a_constant() {
    let g = make_grid(2, 64, 16.0).unwrap();
    let c = Field::constant(&g, 0.5);
    let settings = NormSettings::default();
    let sup = morrey_norm_with(&c, 1.0, 0.0, 4.0, &settings).unwrap();
    let family = BallFamily::new(&g, 4.0, settings.stride).unwrap();
    let largest = family.radii().iter().cloned().fold(0.0, f64::max);
    let discrete = family.ball_size(family.radii().iter().position(|&r| r == largest).unwrap()) as f64;
    assert_relative_eq!(sup.value, 0.5 * discrete * g.cell_volume(), max_relative = 1e-12);
    assert_relative_eq!(sup.value, 0.5 * PI * largest * largest, max_relative = 0.05);
}

#[test]
fn lpt_norm_of_a_single_mode() {
    let l = 2.0 * PI;
    let g = make_grid(1, 64, l).unwrap();
    let amp = 0.3;
    let a = Field::from_fn(&g, |x| amp * x[0].sin()).unwrap();
    let times = graded_times(1.0, 16, 2.0, 1e-4).unwrap();
    let traj = Trajectory::new(times.clone(), vec![a.clone(); times.len()]).unwrap();
    let expected = (l / 2.0).sqrt() * amp * 3.0;
    assert_relative_eq!(lpt_norm(&traj, 2.0, 1.0).unwrap(), expected, max_relative = 1e-12);
    assert!(lpt_norm(&traj, 3.0, 1.0).is_err());
    let zero = Trajectory::zeros(&g, times).unwrap();
    assert_eq!(lpt_norm(&zero, 2.0, 1.0).unwrap(), 0.0);
}

#[test]
fn xt_norm_of_zero_and_time_shift() {
    let g = line();
    let times = graded_times(1.0, 32, 2.0, 1e-4).unwrap();
    let zero = xt_norm(&Trajectory::zeros(&g, times.clone()).unwrap(), 1.0).unwrap();
    assert_eq!(zero.total, 0.0);

    let u = free_evolution(&noise(&g, 3), &times).unwrap();
    let full = xt_norm(&u, 1.0).unwrap();
    let t0 = times[times.len() / 2];
    let shifted = u.shifted(t0).unwrap();
    let rest = shifted.horizon();
    let tail = xt_norm(&shifted, rest).unwrap();
    for k in [1usize, 2] {
        let bound = (1.0 - t0 / 1.0).powf(k as f64 / 4.0) * full.n_inf[&k];
        assert!(tail.n_inf[&k] <= bound * (1.0 + 1e-12), "k={k}: {} > {bound}", tail.n_inf[&k]);
    }
    assert!(xt_norm(&u, 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 12,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn seminorm_axioms(s1 in 0u64..500, s2 in 500u64..1000, lambda in -3.0f64..3.0) {
        let g = line();
        let (a, b) = (noise(&g, s1), noise(&g, s2));
        let r = 2.0;
        for norm in [oscillation_bmo, carleson_bmo] {
            let na = norm(&a, r).unwrap();
            let nb = norm(&b, r).unwrap();
            let scaled = norm(&a.scaled(lambda), r).unwrap();
            prop_assert!((scaled - lambda.abs() * na).abs() <= 1e-8 * na.max(1e-300) * lambda.abs().max(1.0));
            let sum = norm(&a.axpy(1.0, &b), r).unwrap();
            prop_assert!(sum <= (na + nb) * (1.0 + 1e-8));
        }
    }

    #[test]
    fn constants_are_invisible(seed in 0u64..1000, c in -50.0f64..50.0) {
        let g = line();
        let a = noise(&g, seed);
        let b = a.shifted(c);
        prop_assert!((oscillation_bmo(&a, 2.0).unwrap() - oscillation_bmo(&b, 2.0).unwrap()).abs() <= 1e-10);
        prop_assert!((carleson_bmo(&a, 2.0).unwrap() - carleson_bmo(&b, 2.0).unwrap()).abs() <= 1e-10);
        let times = graded_times(0.5, 16, 2.0, 1e-3).unwrap();
        let ua = xt_norm(&free_evolution(&a, &times).unwrap(), 0.5).unwrap();
        let ub = xt_norm(&free_evolution(&b, &times).unwrap(), 0.5).unwrap();
        prop_assert!((ua.total - ub.total).abs() <= 1e-10);
    }

    #[test]
    fn strided_supremum_tracks_the_full_scan(seed in 0u64..1000) {
        let g = make_grid(1, 256, 8.0 * PI).unwrap();
        let a = apply_semigroup(&noise(&g, seed), 0.05).unwrap();
        let full = oscillation_bmo_with(&a, 4.0, &NormSettings::default().with_stride(1)).unwrap().value;
        let coarse = oscillation_bmo(&a, 4.0).unwrap();
        prop_assert!(coarse <= full * (1.0 + 1e-12));
        prop_assert!((full - coarse) / full <= 0.05, "{} vs {}", coarse, full);
    }
}
