//! Mild solutions of `∂t u + Δ²u = ∇·F(∇u)`.
//!
//! Two independent solvers are provided. The Picard solver iterates
//! `u_{j+1} = S(t)u_0 + G(u_j)` on a geometrically graded time grid, where
//! `G(u)(t) = ∫₀^t S(t−s)∇·F(∇u(s)) ds` is evaluated mode by mode with a
//! [`DuhamelRule`]. The exponential time-differencing solver (ETD1) steps the
//! equation with a fixed step and halves it until successive runs agree.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_semigroup, Field, GridSpec, TensorField, MAX_DIM};
use crate::norms::{xt_norm_with, NormSettings};
use crate::registry::Registry;
use crate::trajectory::{graded_times, Trajectory, MAX_GRADING};

// ---------------------------------------------------------------------------
// Nonlinearities

/// Pointwise flux `F: ℝⁿ → ℝⁿ`.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    /// Sign `σ` of the flux (`+1` coercive, `−1` non-coercive).
    fn sigma(&self) -> f64;
    fn flux(&self, xi: &[f64], out: &mut [f64]);
    /// True for `F(ξ) = σ|ξ|²ξ`.
    fn is_cubic(&self) -> bool {
        false
    }
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug)]
struct Cubic {
    sigma: f64,
}

impl Nonlinearity for Cubic {
    fn name(&self) -> String {
        if self.sigma > 0.0 { "cubic_coercive" } else { "cubic_noncoercive" }.to_string()
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn flux(&self, xi: &[f64], out: &mut [f64]) {
        let s = self.sigma * xi.iter().map(|x| x * x).sum::<f64>();
        for (o, x) in out.iter_mut().zip(xi) {
            *o = s * x;
        }
    }

    fn is_cubic(&self) -> bool {
        true
    }
}

#[derive(Debug)]
struct Power {
    sigma: f64,
    p: f64,
}

impl Nonlinearity for Power {
    fn name(&self) -> String {
        format!("power(sigma={}, p={})", self.sigma, self.p)
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn flux(&self, xi: &[f64], out: &mut [f64]) {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        let s = if r2 == 0.0 { 0.0 } else { self.sigma * r2.powf(0.5 * (self.p - 2.0)) };
        for (o, x) in out.iter_mut().zip(xi) {
            *o = s * x;
        }
    }
}

#[derive(Debug)]
struct Zero;

impl Nonlinearity for Zero {
    fn name(&self) -> String {
        "zero".to_string()
    }

    fn sigma(&self) -> f64 {
        1.0
    }

    fn flux(&self, _xi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// Parameter-free nonlinearities by name.
pub fn nonlinearities() -> &'static Registry<dyn Nonlinearity> {
    static REG: OnceLock<Registry<dyn Nonlinearity>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn Nonlinearity> = Registry::new("nonlinearity");
        r.register("cubic_coercive", Arc::new(Cubic { sigma: 1.0 }))
            .register("cubic_noncoercive", Arc::new(Cubic { sigma: -1.0 }))
            .register("zero", Arc::new(Zero));
        r
    })
}

/// Configuration form of a nonlinearity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityKind {
    CubicCoercive,
    CubicNoncoercive,
    Power { sigma: f64, p: f64 },
    Zero,
}

impl NonlinearityKind {
    pub fn build(&self) -> Result<Arc<dyn Nonlinearity>> {
        match self {
            Self::CubicCoercive => nonlinearities().get("cubic_coercive"),
            Self::CubicNoncoercive => nonlinearities().get("cubic_noncoercive"),
            Self::Zero => nonlinearities().get("zero"),
            Self::Power { sigma, p } => {
                if (sigma.abs() - 1.0).abs() > 0.0 {
                    return Err(Error::config(format!("power nonlinearity needs sigma = ±1, got {sigma}")));
                }
                if !(*p > 2.0 && p.is_finite()) {
                    return Err(Error::config(format!("power nonlinearity needs p > 2, got {p}")));
                }
                Ok(Arc::new(Power { sigma: *sigma, p: *p }))
            }
        }
    }
}

/// `F(∇u)` pointwise; `dealias_output` projects every component with the two-thirds rule.
pub fn evaluate_f(grad: &TensorField, nl: &dyn Nonlinearity, dealias_output: bool) -> Result<TensorField> {
    if grad.order() != 1 {
        return Err(Error::config(format!("F acts on gradients (order 1), got order {}", grad.order())));
    }
    let grid = grad.grid();
    let dim = grid.dim();
    let mut out = vec![vec![0.0; grid.len()]; dim];
    let mut xi = [0.0; MAX_DIM];
    let mut f = [0.0; MAX_DIM];
    for p in 0..grid.len() {
        for a in 0..dim {
            xi[a] = grad.components()[a].values()[p];
        }
        nl.flux(&xi[..dim], &mut f[..dim]);
        for a in 0..dim {
            out[a][p] = f[a];
        }
    }
    let comps = out
        .into_iter()
        .map(|v| {
            let field = Field::new(grid, v)?;
            Ok(if dealias_output { crate::grid::dealias(&field) } else { field })
        })
        .collect::<Result<Vec<_>>>()?;
    TensorField::new(grid, 1, comps)
}

/// Largest observed `|F′(ξ₁) − F′(ξ₂)| / ((|ξ₁| + |ξ₂|)|ξ₁ − ξ₂|)` over random pairs
/// in the ball `|ξ| ≤ radius` of `ℝ^dim`, with central-difference Jacobians
/// measured in the Frobenius norm.
pub fn lipschitz_constant(nl: &dyn Nonlinearity, dim: usize, pairs: usize, radius: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = || loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..radius)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
            return v;
        }
    };
    let jacobian = |xi: &[f64]| {
        let mut jac = vec![0.0; dim * dim];
        let mut plus = vec![0.0; dim];
        let mut minus = vec![0.0; dim];
        for b in 0..dim {
            let h = 1e-5 * (1.0 + xi[b].abs());
            let mut x = xi.to_vec();
            x[b] += h;
            nl.flux(&x, &mut plus);
            x[b] -= 2.0 * h;
            nl.flux(&x, &mut minus);
            for a in 0..dim {
                jac[a * dim + b] = (plus[a] - minus[a]) / (2.0 * h);
            }
        }
        jac
    };
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (x1, x2) = (sample(), sample());
        let (j1, j2) = (jacobian(&x1), jacobian(&x2));
        let lhs = j1.iter().zip(&j2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let n1 = x1.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n2 = x2.iter().map(|x| x * x).sum::<f64>().sqrt();
        let d = x1.iter().zip(&x2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rhs = (n1 + n2) * d;
        if rhs > 1e-6 {
            worst = worst.max(lhs / rhs);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Configuration and diagnostics

/// Solver settings; unspecified keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Minimum number of positive Picard time nodes.
    pub time_nodes: usize,
    /// Largest ratio between neighbouring positive nodes.
    pub grading: f64,
    /// First positive node; defaults to `0.01 / k_max⁴` of the dealiased grid.
    pub first_node: Option<f64>,
    pub max_picard_iters: usize,
    /// Tolerance on the `X_T` norm of successive Picard differences.
    pub picard_tol: f64,
    pub dealias: bool,
    /// Threshold on `t^{1/4}‖∇u‖_∞` that counts as blow-up.
    pub blowup_threshold: f64,
    /// `‖S(·)u₀‖_{X_T}` below which the contraction certificate applies.
    pub smallness_budget: f64,
    /// Name of the Duhamel quadrature rule.
    pub duhamel_rule: String,
    pub etd_min_steps: usize,
    /// Sup-norm agreement between successive step halvings.
    pub etd_tol: f64,
    pub etd_max_halvings: usize,
    /// Center stride of the ball scans inside `X_T` norms.
    pub norm_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_nodes: 48,
            grading: 2.0,
            first_node: None,
            max_picard_iters: 30,
            picard_tol: 1e-6,
            dealias: true,
            blowup_threshold: 1e3,
            smallness_budget: 0.1,
            duhamel_rule: "exp_linear".to_string(),
            etd_min_steps: 1000,
            etd_tol: 1e-6,
            etd_max_halvings: 6,
            norm_stride: 4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.time_nodes < 16 {
            return Err(Error::config(format!("time_nodes must be ≥ 16, got {}", self.time_nodes)));
        }
        if !(self.grading > 1.0 && self.grading <= MAX_GRADING) {
            return Err(Error::config(format!("grading must lie in (1, 2], got {}", self.grading)));
        }
        if !(self.picard_tol > 0.0) || !(self.etd_tol > 0.0) {
            return Err(Error::config("picard_tol and etd_tol must be positive"));
        }
        if !(self.blowup_threshold > 0.0) || !(self.smallness_budget > 0.0) {
            return Err(Error::config("blowup_threshold and smallness_budget must be positive"));
        }
        if self.max_picard_iters == 0 {
            return Err(Error::config("max_picard_iters must be positive"));
        }
        if self.etd_min_steps < 1000 {
            return Err(Error::config(format!("etd_min_steps must be ≥ 1000, got {}", self.etd_min_steps)));
        }
        if let Some(t) = self.first_node {
            if !(t > 0.0) {
                return Err(Error::config("first_node must be positive"));
            }
        }
        if self.norm_stride == 0 {
            return Err(Error::config("norm_stride must be positive"));
        }
        duhamel_rules().get(&self.duhamel_rule)?;
        Ok(())
    }

    /// Graded Picard nodes on `[0, horizon]`.
    pub fn time_grid(&self, grid: &GridSpec, horizon: f64) -> Result<Vec<f64>> {
        let first = self.first_node.unwrap_or_else(|| 0.01 / grid.k_max_dealiased().powi(4));
        graded_times(horizon, self.time_nodes, self.grading, first)
    }

    pub fn norm_settings(&self) -> NormSettings {
        NormSettings::default().with_stride(self.norm_stride)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Blowup,
    Diverged,
}

/// Per-iterate record of a fixed-point solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    /// `‖u_j‖_{X_T}`, starting with the free evolution `u_1 = S(·)u₀`.
    pub iterate_norms: Vec<f64>,
    /// `‖u_{j+1} − u_j‖_{X_T}`.
    pub difference_norms: Vec<f64>,
    /// `difference_norms[j+1] / difference_norms[j]`.
    pub contraction_ratios: Vec<f64>,
    pub termination: Termination,
    pub iterations: usize,
    /// `‖S(·)u₀‖_{X_T}` (or `‖S(·)w₀‖_{X_T}` for perturbations).
    pub extension_norm: f64,
    pub within_budget: bool,
    pub time_nodes: usize,
    pub horizon: f64,
}

impl SolveDiagnostics {
    fn new(extension_norm: f64, budget: f64, time_nodes: usize, horizon: f64) -> Self {
        Self {
            iterate_norms: vec![extension_norm],
            difference_norms: Vec::new(),
            contraction_ratios: Vec::new(),
            termination: Termination::MaxIters,
            iterations: 0,
            extension_norm,
            within_budget: extension_norm <= budget,
            time_nodes,
            horizon,
        }
    }

    fn push_difference(&mut self, diff: f64) {
        if let Some(&last) = self.difference_norms.last() {
            if last > 0.0 {
                self.contraction_ratios.push(diff / last);
            }
        }
        self.difference_norms.push(diff);
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn max_ratio(&self) -> f64 {
        self.contraction_ratios.iter().cloned().fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Spectral machinery

/// Per-grid tables: masked derivative symbols `i k_a` and the decay rates `|k|⁴`.
#[derive(Clone)]
struct Spectral {
    grid: GridSpec,
    ik: Vec<Vec<Complex64>>,
    lambda: Vec<f64>,
}

impl Spectral {
    fn new(grid: &GridSpec, dealias: bool) -> Self {
        let dim = grid.dim();
        let ik = (0..dim)
            .map(|a| {
                let mut alpha = [0usize; MAX_DIM];
                alpha[a] = 1;
                (0..grid.len())
                    .map(|i| {
                        if dealias && !grid.is_resolved_mode(i) {
                            Complex64::default()
                        } else {
                            grid.derivative_symbol(i, &alpha[..dim])
                        }
                    })
                    .collect()
            })
            .collect();
        let lambda = grid.k_squared().iter().map(|k2| k2 * k2).collect();
        Self { grid: grid.clone(), ik, lambda }
    }

    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn gradient(&self, u_hat: &[Complex64]) -> Vec<Vec<f64>> {
        self.ik
            .iter()
            .map(|sym| {
                let c: Vec<Complex64> = u_hat.iter().zip(sym).map(|(u, s)| u * s).collect();
                self.grid.inverse(&c)
            })
            .collect()
    }

    fn divergence(&self, flux: &[Vec<f64>]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.grid.len()];
        for (comp, sym) in flux.iter().zip(&self.ik) {
            let c = self.grid.forward(comp);
            for ((o, c), s) in out.iter_mut().zip(&c).zip(sym) {
                *o += c * s;
            }
        }
        out
    }

    /// `∇·F(∇u)` in Fourier space, plus `‖∇u‖_∞`.
    fn source(&self, u_hat: &[Complex64], nl: &dyn Nonlinearity) -> (Vec<Complex64>, f64) {
        let grad = self.gradient(u_hat);
        let dim = self.dim();
        let len = self.grid.len();
        let mut gsup = 0.0f64;
        let mut flux = vec![vec![0.0; len]; dim];
        let mut xi = [0.0; MAX_DIM];
        let mut f = [0.0; MAX_DIM];
        for p in 0..len {
            let mut r2 = 0.0;
            for a in 0..dim {
                xi[a] = grad[a][p];
                r2 += xi[a] * xi[a];
            }
            gsup = gsup.max(r2);
            nl.flux(&xi[..dim], &mut f[..dim]);
            for a in 0..dim {
                flux[a][p] = f[a];
            }
        }
        let gsup = gsup.sqrt();
        if nl.is_zero() {
            return (vec![Complex64::default(); len], gsup);
        }
        (self.divergence(&flux), gsup)
    }
}

fn field_of(grid: &GridSpec, coeffs: Vec<Complex64>) -> Result<Field> {
    let f = Field::from_spectral(grid, coeffs);
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Blowup("non-finite samples".into()));
    }
    Ok(f)
}

/// `(1 − e^{−z})/z`, by series for small `z`.
pub fn phi1_neg(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// `(1 − e^{−z}(1 + z))/z²`.
fn psi(z: f64) -> f64 {
    if z.abs() < 0.5 {
        // Σ (−z)^n (n+1)/(n+2)!
        let mut sum = 0.0;
        let mut pow = 1.0;
        let mut fact = 2.0;
        for n in 0..24 {
            sum += pow * (n + 1) as f64 / fact;
            pow *= -z;
            fact *= (n + 3) as f64;
        }
        sum
    } else {
        (1.0 - (-z).exp() * (1.0 + z)) / (z * z)
    }
}

fn phi1_neg_series(z: f64) -> f64 {
    if z.abs() < 0.5 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 0..24 {
            sum += term;
            term *= -z / (n + 2) as f64;
        }
        sum
    } else {
        phi1_neg(z)
    }
}

// ---------------------------------------------------------------------------
// Duhamel quadrature

/// One-step update `G(t+h) = e^{−λh} G(t) + w_old N(t) + w_new N(t+h)` for the
/// mode with decay rate `λ`.
pub trait DuhamelRule: Send + Sync {
    fn describe(&self) -> &'static str;
    /// `(w_old, w_new)` for decay rate `lambda` and step `h`.
    fn weights(&self, lambda: f64, h: f64) -> (f64, f64);
}

struct ExpLinear;

impl DuhamelRule for ExpLinear {
    fn describe(&self) -> &'static str {
        "source linear between nodes, semigroup factor integrated exactly"
    }

    fn weights(&self, lambda: f64, h: f64) -> (f64, f64) {
        let z = lambda * h;
        let old = h * psi(z);
        (old, h * phi1_neg_series(z) - old)
    }
}

struct Trapezoid;

impl DuhamelRule for Trapezoid {
    fn describe(&self) -> &'static str {
        "trapezoid on the graded nodes"
    }

    fn weights(&self, lambda: f64, h: f64) -> (f64, f64) {
        (0.5 * h * (-lambda * h).exp(), 0.5 * h)
    }
}

pub fn duhamel_rules() -> &'static Registry<dyn DuhamelRule> {
    static REG: OnceLock<Registry<dyn DuhamelRule>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn DuhamelRule> = Registry::new("Duhamel rule");
        r.register("exp_linear", Arc::new(ExpLinear)).register("trapezoid", Arc::new(Trapezoid));
        r
    })
}

/// `G` at every node from source spectra at every node; `G(0) = 0`.
fn duhamel_series(
    spec: &Spectral,
    times: &[f64],
    sources: &[Vec<Complex64>],
    rule: &dyn DuhamelRule,
) -> Vec<Vec<Complex64>> {
    let len = spec.grid.len();
    let mut out = Vec::with_capacity(times.len());
    let mut g = vec![Complex64::default(); len];
    out.push(g.clone());
    for j in 0..times.len() - 1 {
        let h = times[j + 1] - times[j];
        let (old, new) = (&sources[j], &sources[j + 1]);
        g.par_iter_mut().enumerate().for_each(|(i, gi)| {
            let lam = spec.lambda[i];
            let (wo, wn) = rule.weights(lam, h);
            *gi = *gi * (-lam * h).exp() + old[i] * wo + new[i] * wn;
        });
        out.push(g.clone());
    }
    out
}

fn sources_of(spec: &Spectral, traj: &Trajectory, nl: &dyn Nonlinearity) -> (Vec<Vec<Complex64>>, Vec<f64>) {
    traj.fields().par_iter().map(|f| spec.source(f.spectral(), nl)).unzip()
}

fn fields_of(grid: &GridSpec, series: Vec<Vec<Complex64>>) -> Result<Vec<Field>> {
    series.into_par_iter().map(|c| field_of(grid, c)).collect()
}

/// `G(u)` at every node of `source`.
pub fn duhamel_trajectory(source: &Trajectory, nl: &dyn Nonlinearity, cfg: &SolverConfig) -> Result<Trajectory> {
    let rule = duhamel_rules().get(&cfg.duhamel_rule)?;
    let spec = Spectral::new(source.grid(), cfg.dealias);
    let (sources, _) = sources_of(&spec, source, nl);
    let series = duhamel_series(&spec, source.times(), &sources, rule.as_ref());
    Trajectory::new_ungraded(source.times().to_vec(), fields_of(source.grid(), series)?)
}

/// `∫₀^t S(t−s)∇·F(∇u(s)) ds`; `t` must be a node of `source`.
pub fn duhamel(source: &Trajectory, t: f64, nl: &dyn Nonlinearity, cfg: &SolverConfig) -> Result<Field> {
    let idx = node_or_err(source, t)?;
    let head = source.truncated(source.times()[idx])?;
    Ok(duhamel_trajectory(&head, nl, cfg)?.last().clone())
}

fn node_or_err(traj: &Trajectory, t: f64) -> Result<usize> {
    traj.ensure_covers(t)?;
    traj.node_index(t).ok_or_else(|| {
        Error::domain(format!("t = {t} is not a trajectory node; Duhamel integrals are evaluated at nodes"))
    })
}

/// `S(t_j)u₀` at every node.
pub fn free_evolution(u0: &Field, times: &[f64]) -> Result<Trajectory> {
    let fields = times.par_iter().map(|&t| apply_semigroup(u0, t)).collect::<Result<Vec<_>>>()?;
    Trajectory::new_ungraded(times.to_vec(), fields)
}

/// `max_j t_j^{1/4} ‖∇u(t_j)‖_∞` from precomputed gradient sups.
fn scale_invariant_gradient(times: &[f64], gsup: &[f64]) -> f64 {
    times.iter().zip(gsup).map(|(t, g)| t.powf(0.25) * g).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Picard iteration

/// Iterate `u_{j+1} = S(·)u₀ + G(u_j)` on the graded grid of `[0, horizon]`.
pub fn picard_solve(
    u0: &Field,
    horizon: f64,
    nl: &dyn Nonlinearity,
    cfg: &SolverConfig,
) -> Result<(Trajectory, SolveDiagnostics)> {
    cfg.validate()?;
    let times = cfg.time_grid(u0.grid(), horizon)?;
    let rule = duhamel_rules().get(&cfg.duhamel_rule)?;
    let spec = Spectral::new(u0.grid(), cfg.dealias);
    let settings = cfg.norm_settings();
    let free = Trajectory::new(times.clone(), free_evolution(u0, &times)?.fields().to_vec())?;
    let ext = xt_norm_with(&free, horizon, &settings)?.total;
    let mut diag = SolveDiagnostics::new(ext, cfg.smallness_budget, times.len() - 1, horizon);
    let mut u = free.clone();
    for it in 1..=cfg.max_picard_iters {
        let (sources, gsup) = sources_of(&spec, &u, nl);
        if scale_invariant_gradient(&times, &gsup) > cfg.blowup_threshold {
            diag.termination = Termination::Blowup;
            break;
        }
        let series = duhamel_series(&spec, &times, &sources, rule.as_ref());
        let g = match fields_of(u0.grid(), series) {
            Ok(g) => g,
            Err(Error::Blowup(_)) => {
                diag.termination = Termination::Blowup;
                break;
            }
            Err(e) => return Err(e),
        };
        let fields: Vec<Field> = free.fields().iter().zip(&g).map(|(a, b)| a + b).collect();
        let next = Trajectory::new(times.clone(), fields)?;
        let diff = xt_norm_with(&next.axpy(-1.0, &u)?, horizon, &settings)?.total;
        diag.push_difference(diff);
        diag.iterations = it;
        u = next;
        diag.iterate_norms.push(xt_norm_with(&u, horizon, &settings)?.total);
        if diff <= cfg.picard_tol {
            diag.termination = Termination::Converged;
            break;
        }
        if !diff.is_finite() || (it > 2 && diff > 1e3 * diag.difference_norms[0].max(cfg.picard_tol)) {
            diag.termination = Termination::Diverged;
            break;
        }
    }
    Ok((u, diag))
}

// ---------------------------------------------------------------------------
// Trilinear operator and the perturbation equation

/// `coef · (∇f·∇g)∇h` added into `out`.
fn add_trilinear(coef: f64, f: &[Vec<f64>], g: &[Vec<f64>], h: &[Vec<f64>], out: &mut [Vec<f64>]) {
    let dim = f.len();
    for p in 0..out[0].len() {
        let dot: f64 = (0..dim).map(|a| f[a][p] * g[a][p]).sum();
        for a in 0..dim {
            out[a][p] += coef * dot * h[a][p];
        }
    }
}

fn check_shared(trajs: &[&Trajectory]) -> Result<()> {
    if trajs.windows(2).all(|w| w[0].same_nodes(w[1])) {
        Ok(())
    } else {
        Err(Error::domain("trilinear arguments must share grid and time nodes"))
    }
}

/// `Ψ(f,g,h)` at every node: `∫₀^t S(t−s)∇·((∇f·∇g)∇h) ds`.
pub fn trilinear_psi_trajectory(
    f: &Trajectory,
    g: &Trajectory,
    h: &Trajectory,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_shared(&[f, g, h])?;
    let rule = duhamel_rules().get(&cfg.duhamel_rule)?;
    let spec = Spectral::new(f.grid(), cfg.dealias);
    let sources: Vec<Vec<Complex64>> = (0..f.len())
        .into_par_iter()
        .map(|j| {
            let gf = spec.gradient(f.fields()[j].spectral());
            let gg = spec.gradient(g.fields()[j].spectral());
            let gh = spec.gradient(h.fields()[j].spectral());
            let mut flux = vec![vec![0.0; f.grid().len()]; spec.dim()];
            add_trilinear(1.0, &gf, &gg, &gh, &mut flux);
            spec.divergence(&flux)
        })
        .collect();
    let series = duhamel_series(&spec, f.times(), &sources, rule.as_ref());
    Trajectory::new_ungraded(f.times().to_vec(), fields_of(f.grid(), series)?)
}

/// `Ψ(f,g,h)(t)`; `t` must be a shared node.
pub fn trilinear_psi(f: &Trajectory, g: &Trajectory, h: &Trajectory, t: f64, cfg: &SolverConfig) -> Result<Field> {
    check_shared(&[f, g, h])?;
    let idx = node_or_err(f, t)?;
    let t = f.times()[idx];
    let psi = trilinear_psi_trajectory(&f.truncated(t)?, &g.truncated(t)?, &h.truncated(t)?, cfg)?;
    Ok(psi.last().clone())
}

/// Solve `w = S(·)w₀ + ℒ_{u,u}w − B_u(w,w) + σΨ(w,w,w)` for the difference
/// `w = u − v` between the solution `u` and the solution `v` with data `u₀ − w₀`.
///
/// `ℒ_{a,b}f = σ(Ψ(f,a,b) + Ψ(a,b,f) + Ψ(b,f,a))` and `B_a(f,f) = ℒ_{a,f}f`.
pub fn perturbation_solve(
    u: &Trajectory,
    w0: &Field,
    nl: &dyn Nonlinearity,
    cfg: &SolverConfig,
) -> Result<(Trajectory, SolveDiagnostics)> {
    cfg.validate()?;
    if !nl.is_cubic() {
        return Err(Error::config("the perturbation equation is defined for cubic nonlinearities"));
    }
    if *w0.grid() != *u.grid() {
        return Err(Error::domain("w0 and the base trajectory live on different grids"));
    }
    let sigma = nl.sigma();
    let horizon = u.horizon();
    let rule = duhamel_rules().get(&cfg.duhamel_rule)?;
    let spec = Spectral::new(u.grid(), cfg.dealias);
    let settings = cfg.norm_settings();
    let z = free_evolution(w0, u.times())?;
    let ext = xt_norm_with(&z, horizon, &settings)?.total;
    let mut diag = SolveDiagnostics::new(ext, cfg.smallness_budget, u.len() - 1, horizon);
    let grad_u: Vec<Vec<Vec<f64>>> = u.fields().par_iter().map(|f| spec.gradient(f.spectral())).collect();
    let mut w = z.clone();
    for it in 1..=cfg.max_picard_iters {
        let sources: Vec<Vec<Complex64>> = (0..w.len())
            .into_par_iter()
            .map(|j| {
                let gu = &grad_u[j];
                let gw = spec.gradient(w.fields()[j].spectral());
                let mut flux = vec![vec![0.0; u.grid().len()]; spec.dim()];
                // ℒ_{u,u} w
                add_trilinear(sigma, &gw, gu, gu, &mut flux);
                add_trilinear(sigma, gu, gu, &gw, &mut flux);
                add_trilinear(sigma, gu, &gw, gu, &mut flux);
                // −B_u(w, w) = −ℒ_{u,w} w
                add_trilinear(-sigma, &gw, gu, &gw, &mut flux);
                add_trilinear(-sigma, gu, &gw, &gw, &mut flux);
                add_trilinear(-sigma, &gw, &gw, gu, &mut flux);
                // σΨ(w, w, w)
                add_trilinear(sigma, &gw, &gw, &gw, &mut flux);
                spec.divergence(&flux)
            })
            .collect();
        let series = duhamel_series(&spec, u.times(), &sources, rule.as_ref());
        let g = match fields_of(u.grid(), series) {
            Ok(g) => g,
            Err(Error::Blowup(_)) => {
                diag.termination = Termination::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let fields: Vec<Field> = z.fields().iter().zip(&g).map(|(a, b)| a + b).collect();
        let next = Trajectory::new_ungraded(u.times().to_vec(), fields)?;
        let diff = xt_norm_with(&next.axpy(-1.0, &w)?, horizon, &settings)?.total;
        diag.push_difference(diff);
        diag.iterations = it;
        w = next;
        diag.iterate_norms.push(xt_norm_with(&w, horizon, &settings)?.total);
        if diff <= cfg.picard_tol {
            diag.termination = Termination::Converged;
            break;
        }
        if !diff.is_finite() || (it > 2 && diff > 1e3 * diag.difference_norms[0].max(cfg.picard_tol)) {
            diag.termination = Termination::Diverged;
            break;
        }
    }
    Ok((w, diag))
}

// ---------------------------------------------------------------------------
// Exponential time differencing

/// Sup-norm beyond which an ETD run is declared blown up.
pub const ETD_SUP_LIMIT: f64 = 1e6;

/// ETD1 stepper: `û ← e^{−Δt|k|⁴}û + Δt φ₁(−Δt|k|⁴) \widehat{∇·F(∇u)}`.
pub struct EtdIntegrator {
    spec: Spectral,
    nl: Arc<dyn Nonlinearity>,
    u_hat: Vec<Complex64>,
    time: f64,
    steps: usize,
    grad_sup: f64,
    cached: Option<(f64, Vec<f64>, Vec<f64>)>,
}

impl EtdIntegrator {
    pub fn new(u0: &Field, nl: Arc<dyn Nonlinearity>, dealias: bool) -> Self {
        let spec = Spectral::new(u0.grid(), dealias);
        let grad_sup = spec.gradient_sup(u0.spectral());
        Self { spec, nl, u_hat: u0.spectral().to_vec(), time: 0.0, steps: 0, grad_sup, cached: None }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `‖∇u‖_∞` at the current state.
    pub fn grad_sup(&self) -> f64 {
        self.grad_sup
    }

    pub fn field(&self) -> Result<Field> {
        field_of(&self.spec.grid, self.u_hat.clone())
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let (source, _) = self.spec.source(&self.u_hat, self.nl.as_ref());
        if self.cached.as_ref().map(|c| c.0) != Some(dt) {
            let decay = self.spec.lambda.iter().map(|l| (-l * dt).exp()).collect();
            let phi = self.spec.lambda.iter().map(|l| dt * phi1_neg(l * dt)).collect();
            self.cached = Some((dt, decay, phi));
        }
        let (_, decay, phi) = self.cached.as_ref().expect("cached above");
        for (((u, s), d), p) in self.u_hat.iter_mut().zip(&source).zip(decay).zip(phi) {
            *u = *u * d + s * p;
        }
        self.time += dt;
        self.steps += 1;
        self.grad_sup = self.spec.gradient_sup(&self.u_hat);
        if !self.grad_sup.is_finite() {
            return Err(Error::Blowup(format!("non-finite gradient at t = {}", self.time)));
        }
        Ok(())
    }
}

impl Spectral {
    fn gradient_sup(&self, u_hat: &[Complex64]) -> f64 {
        let grad = self.gradient(u_hat);
        let mut m = 0.0f64;
        for p in 0..self.grid.len() {
            let r2: f64 = grad.iter().map(|g| g[p] * g[p]).sum();
            m = m.max(r2);
        }
        m.sqrt()
    }
}

/// Called after every accepted-run step.
pub trait StepObserver {
    fn observe(&mut self, integrator: &EtdIntegrator) -> Result<()>;
}

impl StepObserver for () {
    fn observe(&mut self, _integrator: &EtdIntegrator) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtdReport {
    pub steps: usize,
    pub halvings: usize,
    /// Sup-norm difference at the horizon between the last two step sizes.
    pub last_difference: f64,
}

/// Output step indices `1, 2, 4, …` plus the final step.
fn output_steps(m: usize) -> Vec<usize> {
    let mut idx = Vec::new();
    let mut j = 1;
    while j < m {
        idx.push(j);
        j *= 2;
    }
    idx.push(m);
    idx
}

fn etd_run<O: StepObserver>(
    u0: &Field,
    horizon: f64,
    nl: &Arc<dyn Nonlinearity>,
    cfg: &SolverConfig,
    steps: usize,
    observer: &mut O,
) -> Result<Trajectory> {
    let dt = horizon / steps as f64;
    let mut integ = EtdIntegrator::new(u0, Arc::clone(nl), cfg.dealias);
    let outputs = output_steps(steps);
    let mut times = vec![0.0];
    let mut fields = vec![u0.clone()];
    let mut next = 0;
    observer.observe(&integ)?;
    for j in 1..=steps {
        integ.step(dt)?;
        observer.observe(&integ)?;
        if outputs[next] == j {
            let f = integ.field()?;
            if f.sup_norm() > ETD_SUP_LIMIT {
                return Err(Error::Blowup(format!("sup norm {} at t = {}", f.sup_norm(), j as f64 * dt)));
            }
            times.push(if j == steps { horizon } else { j as f64 * dt });
            fields.push(f);
            next += 1;
        }
        let t = j as f64 * dt;
        if t.powf(0.25) * integ.grad_sup() > cfg.blowup_threshold {
            return Err(Error::Blowup(format!(
                "t^(1/4)‖∇u‖_∞ = {} exceeds {} at t = {t}",
                t.powf(0.25) * integ.grad_sup(),
                cfg.blowup_threshold
            )));
        }
    }
    Trajectory::new(times, fields)
}

/// ETD1 with step halving until successive runs agree to `etd_tol` at the horizon.
pub fn etd_solve(u0: &Field, horizon: f64, nl: Arc<dyn Nonlinearity>, cfg: &SolverConfig) -> Result<Trajectory> {
    Ok(etd_solve_observed(u0, horizon, nl, cfg, || ())?.0)
}

/// As [`etd_solve`], returning the observer of the accepted run.
pub fn etd_solve_observed<O: StepObserver>(
    u0: &Field,
    horizon: f64,
    nl: Arc<dyn Nonlinearity>,
    cfg: &SolverConfig,
    make_observer: impl Fn() -> O,
) -> Result<(Trajectory, EtdReport, O)> {
    cfg.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    let mut steps = cfg.etd_min_steps;
    let mut obs = make_observer();
    let mut prev = etd_run(u0, horizon, &nl, cfg, steps, &mut obs)?;
    let mut last = f64::INFINITY;
    for halving in 1..=cfg.etd_max_halvings {
        steps *= 2;
        let mut cur_obs = make_observer();
        let cur = etd_run(u0, horizon, &nl, cfg, steps, &mut cur_obs)?;
        last = prev.last().max_abs_diff(cur.last());
        if last <= cfg.etd_tol {
            return Ok((cur, EtdReport { steps, halvings: halving, last_difference: last }, cur_obs));
        }
        prev = cur;
        obs = cur_obs;
    }
    drop(obs);
    Err(Error::resolution(format!(
        "ETD step halving did not reach {} after {} halvings (last difference {last:e})",
        cfg.etd_tol, cfg.etd_max_halvings
    )))
}

// ---------------------------------------------------------------------------
// Blow-up probe

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// First horizon; later horizons double up to `t_max`.
    pub t_start: f64,
    pub t_max: f64,
    /// Step limit `dt ≤ cfl / ‖∇u‖_∞⁴`.
    pub cfl: f64,
    /// Largest step.
    pub dt_max: f64,
    /// Smallest step before the run is declared blown up.
    pub dt_min: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { t_start: 1e-3, t_max: 10.0, cfl: 0.02, dt_max: 1e-3, dt_min: 1e-14 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowupReport {
    pub detected: bool,
    /// First time the scale-invariant gradient crossed the threshold.
    pub t_star: Option<f64>,
    pub t_max: f64,
    pub threshold: f64,
    /// `(t, t^{1/4}‖∇u‖_∞)` at the end of every horizon and at detection.
    pub curve: Vec<(f64, f64)>,
    pub steps: usize,
    pub note: String,
}

/// Adaptive ETD run over doubling horizons watching `t^{1/4}‖∇u‖_∞`.
pub fn blowup_probe(u0: &Field, nl: Arc<dyn Nonlinearity>, cfg: &SolverConfig, probe: &ProbeConfig) -> Result<BlowupReport> {
    cfg.validate()?;
    if !(nl.sigma() < 0.0) || nl.is_zero() {
        return Err(Error::config("the blow-up probe needs a non-coercive nonlinearity"));
    }
    if !(probe.t_start > 0.0 && probe.t_max >= probe.t_start && probe.cfl > 0.0 && probe.dt_max > 0.0) {
        return Err(Error::config("probe needs 0 < t_start ≤ t_max and positive cfl and dt_max"));
    }
    let mut integ = EtdIntegrator::new(u0, nl, cfg.dealias);
    let mut report = BlowupReport {
        detected: false,
        t_star: None,
        t_max: probe.t_max,
        threshold: cfg.blowup_threshold,
        curve: Vec::new(),
        steps: 0,
        note: String::new(),
    };
    let mut horizon = probe.t_start;
    loop {
        while integ.time() < horizon * (1.0 - 1e-14) {
            let g = integ.grad_sup();
            let limit = if g > 0.0 { probe.cfl / g.powi(4) } else { f64::INFINITY };
            let dt = probe.dt_max.min(limit).min(horizon - integ.time());
            if dt < probe.dt_min && integ.time() + dt < horizon {
                report.detected = true;
                report.t_star = Some(integ.time());
                report.note = format!("step size collapsed below {}", probe.dt_min);
                break;
            }
            let stepped = integ.step(dt);
            let t = integ.time();
            let s = t.powf(0.25) * integ.grad_sup();
            if stepped.is_err() || !s.is_finite() || s > cfg.blowup_threshold {
                report.detected = true;
                report.t_star = Some(t);
                report.curve.push((t, s));
                report.note = "threshold crossed".to_string();
                break;
            }
        }
        report.steps = integ.steps();
        if report.detected {
            break;
        }
        report.curve.push((integ.time(), integ.time().powf(0.25) * integ.grad_sup()));
        if horizon >= probe.t_max {
            report.note = format!("no blow-up detected up to {}", probe.t_max);
            break;
        }
        horizon = (2.0 * horizon).min(probe.t_max);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Solver registry

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum Diagnostics {
    Picard(SolveDiagnostics),
    Etd(EtdReport),
}

pub struct SolveOutcome {
    pub trajectory: Trajectory,
    pub diagnostics: Diagnostics,
}

/// A method producing a trajectory on `[0, horizon]`.
pub trait Solver: Send + Sync {
    fn describe(&self) -> &'static str;
    fn solve(&self, u0: &Field, horizon: f64, nl: Arc<dyn Nonlinearity>, cfg: &SolverConfig) -> Result<SolveOutcome>;
}

struct PicardSolver;

impl Solver for PicardSolver {
    fn describe(&self) -> &'static str {
        "Picard iteration of the Duhamel formula on a graded time grid"
    }

    fn solve(&self, u0: &Field, horizon: f64, nl: Arc<dyn Nonlinearity>, cfg: &SolverConfig) -> Result<SolveOutcome> {
        let (trajectory, diag) = picard_solve(u0, horizon, nl.as_ref(), cfg)?;
        Ok(SolveOutcome { trajectory, diagnostics: Diagnostics::Picard(diag) })
    }
}

struct EtdSolver;

impl Solver for EtdSolver {
    fn describe(&self) -> &'static str {
        "first-order exponential time differencing with step halving"
    }

    fn solve(&self, u0: &Field, horizon: f64, nl: Arc<dyn Nonlinearity>, cfg: &SolverConfig) -> Result<SolveOutcome> {
        let (trajectory, report, ()) = etd_solve_observed(u0, horizon, nl, cfg, || ())?;
        Ok(SolveOutcome { trajectory, diagnostics: Diagnostics::Etd(report) })
    }
}

pub fn solvers() -> &'static Registry<dyn Solver> {
    static REG: OnceLock<Registry<dyn Solver>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn Solver> = Registry::new("solver");
        r.register("picard", Arc::new(PicardSolver)).register("etd", Arc::new(EtdSolver));
        r
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gradient, make_grid};

    #[test]
    fn flux_examples() {
        let coercive = NonlinearityKind::CubicCoercive.build().unwrap();
        let mut out = [0.0; 2];
        coercive.flux(&[2.0, 0.0], &mut out);
        assert_eq!(out, [8.0, 0.0]);
        let power = NonlinearityKind::Power { sigma: -1.0, p: 3.0 }.build().unwrap();
        power.flux(&[0.0, 3.0], &mut out);
        assert_eq!(out, [0.0, -9.0]);
        assert!(NonlinearityKind::Power { sigma: 1.0, p: 2.0 }.build().is_err());
        assert!(NonlinearityKind::Power { sigma: 0.5, p: 3.0 }.build().is_err());
    }

    #[test]
    fn evaluate_f_on_zero_gradient() {
        let g = make_grid(2, 16, 1.0).unwrap();
        let nl = NonlinearityKind::CubicNoncoercive.build().unwrap();
        let out = evaluate_f(&gradient(&Field::zeros(&g)), nl.as_ref(), true).unwrap();
        assert_eq!(out.sup_norm(), 0.0);
    }

    #[test]
    fn weight_series_match_closed_forms() {
        for z in [1e-3f64, 0.1, 0.49] {
            // the closed form loses digits to cancellation like 1/z²
            let closed = (1.0 - (-z).exp() * (1.0 + z)) / (z * z);
            assert!((psi(z) - closed).abs() < 1e-15 / (z * z) + 1e-14);
            assert!((phi1_neg_series(z) - (1.0 - (-z).exp()) / z).abs() < 1e-13);
        }
        assert!((psi(0.5 - 1e-12) - psi(0.5)).abs() < 1e-12);
    }

    #[test]
    fn exp_linear_rule_is_exact_for_linear_sources() {
        // ∫₀^h e^{−λ(h−s)} (a + b s) ds
        let (lam, h, a, b) = (3.0f64, 0.4f64, 1.5f64, -2.0f64);
        let exact = a * (1.0 - (-lam * h).exp()) / lam
            + b * (h / lam - (1.0 - (-lam * h).exp()) / (lam * lam));
        let (wo, wn) = ExpLinear.weights(lam, h);
        assert!((wo * a + wn * (a + b * h) - exact).abs() < 1e-14);
    }

    #[test]
    fn output_steps_are_graded() {
        assert_eq!(output_steps(1000).last(), Some(&1000));
        assert_eq!(output_steps(8), vec![1, 2, 4, 8]);
    }
}
