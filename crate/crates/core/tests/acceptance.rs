//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use biflow::experiments::{
    dissipation_run, decay_run, scaling_check, smoothing_exponents, stability_run, static_residual, DecaySettings,
    RadialProfile, SmoothingSettings, Tolerances, Verdict,
};
use biflow::grid::{make_grid, GridSpec};
use biflow::initial::{generate, Params};
use biflow::kernel::{kernel_derivative_l1, moment_check};
use biflow::norms::{carleson_bmo, oscillation_bmo, xt_norm_with};
use biflow::solver::{
    etd_solve, free_evolution, nonlinearities, picard_solve, trilinear_psi_trajectory, Nonlinearity, SolverConfig,
};
use biflow::Field;

const L: f64 = 8.0 * PI;

fn verdict(n: usize, title: &str, pass: bool, detail: String) {
    println!("criterion {n:>2}: {} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({title}) failed: {detail}");
}

fn params(pairs: &[(&str, f64)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn grid1(n: usize) -> GridSpec {
    make_grid(1, n, L).unwrap()
}

fn cubic(name: &str) -> Arc<dyn Nonlinearity> {
    nonlinearities().get(name).unwrap()
}

fn extension_norm(a: &Field, horizon: f64, cfg: &SolverConfig) -> f64 {
    let times = cfg.time_grid(a.grid(), horizon).unwrap();
    xt_norm_with(&free_evolution(a, &times).unwrap(), horizon, &cfg.norm_settings()).unwrap().total
}

/// `a` rescaled so that `‖S(·)a‖_{X_T}` equals `target`.
fn with_extension(a: &Field, target: f64, horizon: f64, cfg: &SolverConfig) -> Field {
    a.scaled(target / extension_norm(a, horizon, cfg))
}

#[test]
fn criterion_01_kernel_moments() {
    let start = Instant::now();
    let mut worst = [0.0f64; 2];
    for (i, dim) in [1usize, 2].into_iter().enumerate() {
        for t in [0.1, 1.0, 10.0] {
            let m = moment_check(t, dim).unwrap();
            worst[i] = worst[i].max((m.mass - 1.0).abs()).max(m.grad_moment.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "kernel moments",
        worst[0] <= 1e-6 && worst[1] <= 1e-5 && secs <= 30.0,
        format!("max error n=1 {:.2e} (≤ 1e-6), n=2 {:.2e} (≤ 1e-5), {secs:.1} s (≤ 30 s)", worst[0], worst[1]),
    );
}

#[test]
fn criterion_02_kernel_scaling() {
    let mut worst = 0.0f64;
    for k in 0..=3usize {
        let v: Vec<f64> = [0.25f64, 1.0, 4.0]
            .iter()
            .map(|&t| t.powf(k as f64 / 4.0) * kernel_derivative_l1(k, t, 1).unwrap())
            .collect();
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        worst = worst.max(hi / lo - 1.0);
    }
    verdict(2, "kernel L¹ scaling", worst <= 0.01, format!("max relative spread {worst:.2e} (≤ 1e-2)"));
}

#[test]
fn criterion_03_smoothing_exponents() {
    let start = Instant::now();
    let g = grid1(256);
    let draws: Vec<Field> = (0..5).map(|s| generate("step_noise", &g, &Params::new(), s).unwrap()).collect();
    let r = smoothing_exponents(&draws, &SmoothingSettings::default(), &Tolerances::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let slope = r.check("slope_relative_error").map_or(f64::NAN, |c| c.value);
    verdict(
        3,
        "smoothing exponents",
        r.verdict == Verdict::Pass && slope <= 0.05 && secs <= 10.0,
        format!("worst |slope/(−k/4) − 1| = {slope:.3e} (≤ 5e-2) over 5 draws, {secs:.1} s (≤ 10 s)"),
    );
}

fn bmo_scaling_worst(n: usize) -> f64 {
    let g = grid1(n);
    let radius = L / 16.0;
    (0..5)
        .map(|seed| {
            let a = generate("noise", &g, &Params::new(), seed).unwrap();
            let a2 = biflow::experiments::rescaled(&a, 2.0).unwrap();
            let lhs = carleson_bmo(&a2, radius).unwrap();
            let rhs = carleson_bmo(&a, 2.0 * radius).unwrap();
            (lhs - rhs).abs() / rhs
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_04_bmo_scaling_identity() {
    let worst = bmo_scaling_worst(256);
    verdict(4, "BMO scaling identity", worst <= 0.02, format!("max relative gap {worst:.2e} (≤ 2e-2), 5 fields"));
}

/// `C = max carleson(a,R)/osc(a,2R)` and the largest deviation of single ratios from their mean.
fn domination(grid: &GridSpec, radius: f64) -> (f64, f64) {
    let ratios: Vec<f64> = (0..10)
        .map(|seed| {
            let a = generate("step_noise", grid, &Params::new(), seed).unwrap();
            carleson_bmo(&a, radius).unwrap() / oscillation_bmo(&a, 2.0 * radius).unwrap()
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let c = ratios.iter().cloned().fold(0.0, f64::max);
    let dev = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
    (c, dev)
}

#[test]
fn criterion_05_carleson_domination() {
    let (c1, d1) = domination(&grid1(256), 2.0);
    let (c2, d2) = domination(&make_grid(2, 128, L).unwrap(), 2.0);
    verdict(
        5,
        "Carleson domination",
        d1 <= 0.2 && d2 <= 0.2,
        format!("1D C = {c1:.4} (deviation {d1:.2e}), 2D C = {c2:.4} (deviation {d2:.2e}), ≤ 0.2"),
    );
}

fn contraction_data(g: &GridSpec, cfg: &SolverConfig) -> Vec<(String, Field)> {
    let base = [
        ("gaussian", params(&[("amplitude", 0.05)])),
        ("bumps", params(&[("width", 1.5)])),
        ("step_noise", Params::new()),
    ];
    base.iter()
        .map(|(name, p)| {
            let a = generate(name, g, p, 1).unwrap();
            let ext = extension_norm(&a, 1.0, cfg);
            let a = if ext > 0.1 { with_extension(&a, 0.09, 1.0, cfg) } else { a };
            (name.to_string(), a)
        })
        .collect()
}

/// `(worst ratio, most iterations, all converged, seconds)` for the contraction data.
fn contraction_stats(n: usize, cfg: &SolverConfig) -> (f64, usize, bool, f64) {
    let g = grid1(n);
    let nl = cubic("cubic_coercive");
    let mut worst = 0.0f64;
    let mut iters = 0;
    let mut ok = true;
    let mut secs = 0.0f64;
    for (_, a) in contraction_data(&g, cfg) {
        let start = Instant::now();
        let (_, d) = picard_solve(&a, 1.0, nl.as_ref(), cfg).unwrap();
        secs = secs.max(start.elapsed().as_secs_f64());
        assert!(d.extension_norm <= 0.1);
        worst = worst.max(d.max_ratio());
        iters = iters.max(d.iterations);
        ok &= d.converged();
    }
    (worst, iters, ok, secs)
}

#[test]
fn criterion_06_picard_contraction() {
    let (worst, iters, ok, secs) = contraction_stats(256, &SolverConfig::default());
    verdict(
        6,
        "Picard contraction",
        ok && worst <= 0.55 && iters <= 12 && secs <= 60.0,
        format!("max ratio {worst:.3e} (≤ 0.55), max iterations {iters} (≤ 12), slowest run {secs:.2} s (≤ 60 s)"),
    );
}

fn oracle_case(g: &GridSpec, i: u64, cfg: &SolverConfig) -> Field {
    let names = ["gaussian", "bumps", "noise", "step_noise", "single_mode"];
    let a = generate(names[i as usize % names.len()], g, &Params::new(), 100 + i).unwrap();
    let target = 0.01 + 0.08 * ((i as f64 * 0.618_033_988_75).fract());
    with_extension(&a, target, 1.0, cfg)
}

#[test]
fn criterion_07_oracle_equivalence() {
    let cfg = SolverConfig::default();
    let mut worst = [0.0f64; 2];
    for (d, g) in [grid1(256), make_grid(2, 128, L).unwrap()].iter().enumerate() {
        for i in 0..10 {
            let a = oracle_case(g, i, &cfg);
            let nl = cubic(if i % 2 == 0 { "cubic_coercive" } else { "cubic_noncoercive" });
            let (u, diag) = picard_solve(&a, 1.0, nl.as_ref(), &cfg).unwrap();
            assert!(diag.converged(), "case {i}: {:?}", diag.termination);
            let v = etd_solve(&a, 1.0, Arc::clone(&nl), &cfg).unwrap();
            worst[d] = worst[d].max(u.last().max_abs_diff(v.last()));
        }
    }
    let limit = 10.0 * cfg.picard_tol;
    verdict(
        7,
        "Picard/ETD oracle equivalence",
        worst[0] <= limit && worst[1] <= limit,
        format!("max sup difference 1D {:.2e}, 2D {:.2e} (≤ {limit:.0e}), 10 cases each", worst[0], worst[1]),
    );
}

#[test]
fn criterion_08_solver_scaling_equivariance() {
    let g = grid1(256);
    let a = generate("bumps", &g, &params(&[("amplitude", 0.05), ("width", 1.5)]), 2).unwrap();
    let nl = cubic("cubic_coercive");
    let r = scaling_check(&a, 2.0, L / 16.0, 1.0, nl.as_ref(), &SolverConfig::default(), &Tolerances::default())
        .unwrap();
    let eq = r.check("solver_equivariance").map_or(f64::NAN, |c| c.value);
    verdict(
        8,
        "solver scaling equivariance",
        r.verdict == Verdict::Pass && eq <= 0.02,
        format!("relative sup gap {eq:.2e} (≤ 2e-2) at λ = 2"),
    );
}

#[test]
fn criterion_09_energy_dissipation() {
    let g = grid1(256);
    let cases = [
        ("gaussian", params(&[("amplitude", 1.0)])),
        ("bumps", params(&[("amplitude", 0.5), ("width", 1.0)])),
        ("noise", params(&[("amplitude", 0.3), ("band", 8.0)])),
        ("gaussian", params(&[("amplitude", 0.0)])),
    ];
    let cfg = SolverConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, p) in &cases {
        let u0 = generate(name, &g, p, 4).unwrap();
        let r = dissipation_run(&u0, cubic("cubic_coercive"), 1.0, &cfg, &DecaySettings::default(), &Tolerances::default())
            .unwrap();
        let inc = r.metric("max_energy_increase").unwrap_or(f64::NAN);
        let l4 = r.metric("grad_l4_excess").unwrap_or(f64::NAN);
        ok &= r.verdict == Verdict::Pass;
        lines.push(format!("{name}: max ΔE {inc:.1e}, L⁴ excess {l4:.1e}"));
    }
    verdict(9, "energy dissipation", ok, format!("{} (slack 1e-8 / 1e-6)", lines.join("; ")));
}

#[test]
fn criterion_10_decay() {
    let g = grid1(256);
    let u0 = generate("gaussian", &g, &params(&[("amplitude", 0.05)]), 0).unwrap();
    let cfg = SolverConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["cubic_coercive", "cubic_noncoercive"] {
        let start = Instant::now();
        let r = decay_run(&u0, cubic(name), &cfg, &DecaySettings::default(), &Tolerances::default()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let red = r.check("reduction").map_or(f64::NAN, |c| c.value);
        ok &= r.verdict == Verdict::Pass && red >= 10.0 && secs <= 300.0;
        lines.push(format!("{name}: peak/final {red:.1} (≥ 10), {secs:.1} s"));
    }
    verdict(10, "decay to T = 1e3", ok, lines.join("; "));
}

#[test]
fn criterion_11_static_solution() {
    let tol = Tolerances::default();
    let res = |f: &dyn Fn(f64) -> f64| {
        let p = RadialProfile::sample(4, 1000, 0.5, 50.0, f).unwrap();
        static_residual(&p, &tol).unwrap()
    };
    let plus = res(&|r| 2.0 * r.ln());
    let minus = res(&|r| -2.0 * r.ln());
    let square = res(&|r| r * r);
    let (rp, rm, rs) = (plus.metric("residual").unwrap(), minus.metric("residual").unwrap(), square.metric("residual").unwrap());
    let floor = rp.max(rm).max(1e-6);
    verdict(
        11,
        "static solution residual",
        rp <= 1e-6 && rm <= 1e-6 && rs >= 1e3 * floor && square.verdict == Verdict::Fail,
        format!("±2 ln r: {rp:.2e} / {rm:.2e} (≤ 1e-6); r²: {rs:.3e} (≥ 1e3 × {floor:.0e})"),
    );
}

#[test]
fn criterion_12_stability_linear_response() {
    let g = grid1(256);
    let u0 = generate("gaussian", &g, &params(&[("amplitude", 0.05)]), 0).unwrap();
    let d = generate("bumps", &g, &params(&[("amplitude", 0.01), ("width", 1.5)]), 5).unwrap();
    let v0 = &u0 + &d;
    let cfg = SolverConfig::default();
    let r = stability_run(&u0, &v0, cubic("cubic_coercive").as_ref(), 1.0, 3, &cfg, &Tolerances::default()).unwrap();
    let dev = r.check("ratio_deviation").map_or(f64::NAN, |c| c.value);
    let gap = r.check("consistency").map_or(f64::NAN, |c| c.value);
    verdict(
        12,
        "stability linear response",
        r.verdict == Verdict::Pass && dev <= 0.5 && gap <= 10.0 * cfg.picard_tol,
        format!("ratio deviation {dev:.2e} (≤ 0.5) over δ, δ/2, δ/4; |v − (u − w)| {gap:.2e} (≤ 1e-5)"),
    );
}

#[test]
fn criterion_13_trilinear_identity() {
    let g = grid1(256);
    let u0 = generate("bumps", &g, &params(&[("amplitude", 0.05), ("width", 1.5)]), 7).unwrap();
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    for name in ["cubic_coercive", "cubic_noncoercive"] {
        let nl = cubic(name);
        let (u, diag) = picard_solve(&u0, 1.0, nl.as_ref(), &cfg).unwrap();
        assert!(diag.converged());
        let free = free_evolution(&u0, u.times()).unwrap();
        let psi = trilinear_psi_trajectory(&u, &u, &u, &cfg).unwrap();
        for ((a, b), c) in u.fields().iter().zip(free.fields()).zip(psi.fields()) {
            worst = worst.max(a.max_abs_diff(&b.axpy(nl.sigma(), c)));
        }
    }
    let limit = 10.0 * cfg.picard_tol;
    verdict(
        13,
        "trilinear identity",
        worst <= limit,
        format!("max over nodes and signs of |u − S u₀ ∓ Ψ(u,u,u)| = {worst:.2e} (≤ {limit:.0e})"),
    );
}

#[test]
fn criterion_14_discretization_robustness() {
    let bmo = bmo_scaling_worst(512);
    let (c1, d1) = domination(&grid1(512), 2.0);
    let (c2, d2) = domination(&make_grid(2, 256, L).unwrap(), 2.0);
    let cfg = SolverConfig { time_nodes: 96, ..SolverConfig::default() };
    let (worst, iters, ok, secs) = contraction_stats(512, &cfg);
    let pass4 = bmo <= 0.02;
    let pass5 = d1 <= 0.2 && d2 <= 0.2;
    let pass6 = ok && worst <= 0.55 && iters <= 12 && secs <= 60.0;
    verdict(
        14,
        "discretization robustness (2N, 2× time nodes)",
        pass4 && pass5 && pass6,
        format!(
            "[4] gap {bmo:.2e}; [5] C 1D {c1:.4} (dev {d1:.2e}), 2D {c2:.4} (dev {d2:.2e}); \
             [6] ratio {worst:.3e}, {iters} iterations, {secs:.2} s"
        ),
    );
}
