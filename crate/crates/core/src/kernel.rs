//! Direct evaluation of the biharmonic heat kernel
//! `b(x,t) = t^{-n/4} g(x / t^{1/4})` with the mass-one profile
//! `g(x) = (2π)^{-n} ∫ e^{ix·ξ - |ξ|⁴} dξ`.
//!
//! The profile is computed by panel Gauss–Legendre quadrature of its radial
//! Fourier integral (cosine transform for `n = 1`, order-zero Hankel transform
//! for `n = 2`). Panel widths follow the oscillation period `2π/r`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{bessel_j0, bessel_j1, bessel_j1_over_z, bessel_third_combo, GaussLegendre};

/// Radius beyond which the cached profile is treated as zero.
pub const PROFILE_CUTOFF: f64 = 50.0;
const DENSE_MIN_RADIUS: f64 = 1e-3;
const DENSE_POINTS: usize = 4000;

/// Truncation of the frequency integral: `e^{-ξ⁴} <= 1e-18` beyond it.
fn default_xi_max() -> f64 {
    (18.0 * std::f64::consts::LN_10).powf(0.25)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureMeta {
    pub nodes_per_panel: usize,
    pub xi_max: f64,
    /// Panels never exceed this width; oscillating integrands use `π/r`.
    pub max_panel_width: f64,
    pub panel_budget: usize,
}

impl Default for QuadratureMeta {
    fn default() -> Self {
        Self { nodes_per_panel: 16, xi_max: default_xi_max(), max_panel_width: 0.25, panel_budget: 20_000 }
    }
}

impl QuadratureMeta {
    /// Twice the nodes per panel, half the panel width, and a longer truncation.
    pub fn refined(&self) -> Self {
        Self {
            nodes_per_panel: self.nodes_per_panel * 2,
            xi_max: self.xi_max * 1.1,
            max_panel_width: self.max_panel_width / 2.0,
            panel_budget: self.panel_budget * 2,
        }
    }
}

/// `g` and its first three radial derivatives at one radius.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProfileSample {
    pub g: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl ProfileSample {
    /// Radial derivative of order `k` (`k <= 3`).
    pub fn derivative(&self, k: usize) -> f64 {
        match k {
            0 => self.g,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3,
        }
    }
}

/// Evaluator for the radial profile integral.
#[derive(Clone, Debug)]
pub struct ProfileQuadrature {
    dim: usize,
    meta: QuadratureMeta,
    rule: GaussLegendre,
}

impl ProfileQuadrature {
    pub fn new(dim: usize, meta: QuadratureMeta) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { dim, meta, rule: GaussLegendre::new(meta.nodes_per_panel) })
    }

    pub fn meta(&self) -> &QuadratureMeta {
        &self.meta
    }

    pub fn evaluate(&self, r: f64) -> Result<ProfileSample> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::domain(format!("profile radius must be finite and >= 0, got {r}")));
        }
        let width = if r > 0.0 { self.meta.max_panel_width.min(PI / r) } else { self.meta.max_panel_width };
        let panels = (self.meta.xi_max / width).ceil() as usize;
        if panels > self.meta.panel_budget {
            return Err(Error::resolution(format!(
                "radius {r} needs {panels} quadrature panels, budget is {}",
                self.meta.panel_budget
            )));
        }
        let h = self.meta.xi_max / panels as f64;
        let mut acc = [0.0f64; 4];
        for p in 0..panels {
            let a = p as f64 * h;
            for (xi, w) in self.rule.mapped(a, a + h) {
                let damp = w * (-xi.powi(4)).exp();
                let terms = match self.dim {
                    1 => {
                        let (s, c) = (r * xi).sin_cos();
                        [c, -xi * s, -xi * xi * c, xi.powi(3) * s]
                    }
                    _ => {
                        let z = r * xi;
                        let j0 = bessel_j0(z);
                        let j1 = bessel_j1(z);
                        let rho2 = xi * xi;
                        [
                            j0 * xi,
                            -j1 * rho2,
                            -rho2 * xi * (j0 - bessel_j1_over_z(z)),
                            rho2 * rho2 * (j1 - bessel_third_combo(z)),
                        ]
                    }
                };
                for (a, t) in acc.iter_mut().zip(terms) {
                    *a += damp * t;
                }
            }
        }
        let c = if self.dim == 1 { 1.0 / PI } else { 1.0 / (2.0 * PI) };
        Ok(ProfileSample { g: c * acc[0], d1: c * acc[1], d2: c * acc[2], d3: c * acc[3] })
    }

    /// Frobenius norm of `∇^k g` at radius `r` (for `n = 1` the absolute derivative).
    pub fn derivative_norm(&self, k: usize, r: f64) -> Result<f64> {
        let s = self.evaluate(r)?;
        Ok(derivative_norm(self.dim, k, r, &s))
    }
}

/// `|∇^k f|` for a radial function in one or two dimensions.
pub(crate) fn derivative_norm(dim: usize, k: usize, r: f64, s: &ProfileSample) -> f64 {
    if dim == 1 || k <= 1 {
        return s.derivative(k).abs();
    }
    // In the radial frame ∇²f has eigenvalues f'' and f'/r; ∇³f has f''' once
    // and (f'' - f'/r)/r three times.
    let r = r.max(1e-12);
    match k {
        2 => (s.d2 * s.d2 + (s.d1 / r).powi(2)).sqrt(),
        _ => {
            let c = (s.d2 - s.d1 / r) / r;
            (s.d3 * s.d3 + 3.0 * c * c).sqrt()
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::config(format!("kernel evaluation supports n = 1 or 2, got {dim}")))
    }
}

/// Sampled profile `g(r)` with derivatives.
#[derive(Clone, Debug, Serialize)]
pub struct KernelProfile {
    pub dim: usize,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub third: Vec<f64>,
    pub quadrature_meta: QuadratureMeta,
}

impl KernelProfile {
    /// CSV with columns `r,g,g',g''` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,g,g',g''")?;
        for i in 0..self.radii.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.radii[i], self.values[i], self.first[i], self.second[i]
            )?;
        }
        Ok(())
    }
}

/// Profile `g` at the given radii (strictly ascending, `>= 0`).
pub fn profile_g(radii: &[f64], dim: usize) -> Result<KernelProfile> {
    profile_g_with(radii, dim, QuadratureMeta::default())
}

pub fn profile_g_with(radii: &[f64], dim: usize, meta: QuadratureMeta) -> Result<KernelProfile> {
    let quad = ProfileQuadrature::new(dim, meta)?;
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("profile radii must be strictly ascending"));
    }
    let mut profile = KernelProfile {
        dim,
        radii: radii.to_vec(),
        values: Vec::with_capacity(radii.len()),
        first: Vec::with_capacity(radii.len()),
        second: Vec::with_capacity(radii.len()),
        third: Vec::with_capacity(radii.len()),
        quadrature_meta: meta,
    };
    for &r in radii {
        let s = quad.evaluate(r)?;
        profile.values.push(s.g);
        profile.first.push(s.d1);
        profile.second.push(s.d2);
        profile.third.push(s.d3);
    }
    Ok(profile)
}

/// Dense cached profile on `{0} ∪ [1e-3, 50]` (geometric), cubic Hermite interpolation.
#[derive(Debug)]
struct DenseProfile {
    radii: Vec<f64>,
    g: Vec<f64>,
    dg: Vec<f64>,
}

impl DenseProfile {
    fn build(dim: usize) -> Self {
        let ratio = (PROFILE_CUTOFF / DENSE_MIN_RADIUS).powf(1.0 / (DENSE_POINTS - 1) as f64);
        let mut radii = vec![0.0];
        radii.extend((0..DENSE_POINTS).map(|i| DENSE_MIN_RADIUS * ratio.powi(i as i32)));
        *radii.last_mut().unwrap() = PROFILE_CUTOFF;
        let quad = ProfileQuadrature::new(dim, QuadratureMeta::default()).expect("dimension checked");
        let samples: Vec<ProfileSample> =
            radii.iter().map(|&r| quad.evaluate(r).expect("dense radii are within budget")).collect();
        Self {
            g: samples.iter().map(|s| s.g).collect(),
            dg: samples.iter().map(|s| s.d1).collect(),
            radii,
        }
    }

    fn interpolate(&self, r: f64) -> f64 {
        if r >= PROFILE_CUTOFF {
            return 0.0;
        }
        let i = self.radii.partition_point(|&x| x <= r).saturating_sub(1).min(self.radii.len() - 2);
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let h = r1 - r0;
        let s = (r - r0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.g[i] + h10 * h * self.dg[i] + h01 * self.g[i + 1] + h11 * h * self.dg[i + 1]
    }
}

fn dense_profile(dim: usize) -> &'static DenseProfile {
    static ONE: OnceLock<DenseProfile> = OnceLock::new();
    static TWO: OnceLock<DenseProfile> = OnceLock::new();
    match dim {
        1 => ONE.get_or_init(|| DenseProfile::build(1)),
        _ => TWO.get_or_init(|| DenseProfile::build(2)),
    }
}

/// `b(x, t)` from the cached profile.
pub fn kernel_value(x: &[f64], t: f64, dim: usize) -> Result<f64> {
    check_dim(dim)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("kernel needs t > 0, got {t}")));
    }
    if x.len() != dim {
        return Err(Error::config(format!("point has {} coordinates, expected {dim}", x.len())));
    }
    let scale = t.powf(0.25);
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt() / scale;
    Ok(dense_profile(dim).interpolate(r) / scale.powi(dim as i32))
}

/// Integral of a non-negative radial density `f(r)` against the `n`-dimensional
/// radial measure on `[0, r_max]`, with panels split at the supplied breakpoints.
fn radial_integral(
    dim: usize,
    r_max: f64,
    panel: f64,
    breakpoints: &[f64],
    rule: &GaussLegendre,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let mut cuts = vec![0.0];
    cuts.extend(breakpoints.iter().cloned().filter(|&b| b > 0.0 && b < r_max));
    cuts.push(r_max);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = ((b - a) / panel).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        for p in 0..pieces {
            let lo = a + p as f64 * h;
            for (r, wt) in rule.mapped(lo, lo + h) {
                let measure = if dim == 1 { 2.0 } else { 2.0 * PI * r };
                total += wt * measure * f(r)?;
            }
        }
    }
    Ok(total)
}

/// Sign changes of `f` on `(0, r_max)` located by scanning and bisection.
fn roots_of(r_max: f64, step: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Vec<f64>> {
    let mut roots = Vec::new();
    let mut a = step * 1e-3;
    let mut fa = f(a)?;
    while a < r_max {
        let b = (a + step).min(r_max);
        let fb = f(b)?;
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid)?;
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    Ok(roots)
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("kernel needs t > 0, got {t}")))
    }
}

/// `‖∇^k b(·,t)‖_{L¹}` by direct quadrature of the differentiated profile.
pub fn kernel_derivative_l1(k: usize, t: f64, dim: usize) -> Result<f64> {
    check_dim(dim)?;
    check_time(t)?;
    if k > 3 {
        return Err(Error::config(format!("kernel derivative order must be <= 3, got {k}")));
    }
    let quad = ProfileQuadrature::new(dim, QuadratureMeta::default())?;
    let scale = t.powf(0.25);
    let amplitude = scale.powi(-((dim + k) as i32));
    let r_max = PROFILE_CUTOFF * scale;
    // Breakpoints where |·| has kinks: zeros of the signed radial derivative.
    let breakpoints = if dim == 1 || k <= 1 {
        roots_of(r_max, 0.05 * scale, |r| Ok(quad.evaluate(r / scale)?.derivative(k)))?
    } else {
        Vec::new()
    };
    let integrate = |panel: f64, rule: &GaussLegendre| {
        radial_integral(dim, r_max, panel, &breakpoints, rule, |r| {
            Ok(amplitude * quad.derivative_norm(k, r / scale)?)
        })
    };
    let coarse = integrate(0.5 * scale, &GaussLegendre::new(16))?;
    let fine = integrate(0.25 * scale, &GaussLegendre::new(16))?;
    if (fine - coarse).abs() > 1e-7 * fine.abs().max(1.0) {
        return Err(Error::resolution(format!(
            "L1 quadrature of the order-{k} kernel derivative did not settle ({coarse} vs {fine})"
        )));
    }
    Ok(fine)
}

/// Mass `∫ b(·,t)` and first-derivative integral `∫ ∂_1 b(·,t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mass: f64,
    pub grad_moment: f64,
}

pub fn moment_check(t: f64, dim: usize) -> Result<Moments> {
    check_dim(dim)?;
    check_time(t)?;
    let quad = ProfileQuadrature::new(dim, QuadratureMeta::default())?;
    let rule = GaussLegendre::new(16);
    let scale = t.powf(0.25);
    let r_max = PROFILE_CUTOFF * scale;
    let panel = 0.25 * scale;
    let pieces = (r_max / panel).ceil() as usize;
    let h = r_max / pieces as f64;
    let mut mass = 0.0;
    let mut grad = 0.0;
    match dim {
        1 => {
            // full line [-r_max, r_max], symmetric nodes
            for p in 0..2 * pieces {
                let lo = -r_max + p as f64 * h;
                for (x, w) in rule.mapped(lo, lo + h) {
                    let s = quad.evaluate(x.abs() / scale)?;
                    mass += w * s.g / scale;
                    grad += w * s.d1 * x.signum() / (scale * scale);
                }
            }
        }
        _ => {
            let angles = 64;
            for p in 0..pieces {
                let lo = p as f64 * h;
                for (r, w) in rule.mapped(lo, lo + h) {
                    let s = quad.evaluate(r / scale)?;
                    mass += w * 2.0 * PI * r * s.g / scale.powi(2);
                    let dtheta = 2.0 * PI / angles as f64;
                    let ring: f64 = (0..angles).map(|j| (j as f64 * dtheta).cos() * dtheta).sum();
                    grad += w * r * ring * s.d1 / scale.powi(3);
                }
            }
        }
    }
    Ok(Moments { mass, grad_moment: grad })
}

/// `max_x |∇^k b(x,t)| (t^{1/4} + |x|)^{n+k}` over `|x| <= x_max` for each `t`.
pub fn pointwise_bound_scan(dim: usize, k: usize, times: &[f64], x_max: f64, samples: usize) -> Result<Vec<f64>> {
    check_dim(dim)?;
    let quad = ProfileQuadrature::new(dim, QuadratureMeta::default())?;
    times
        .iter()
        .map(|&t| {
            check_time(t)?;
            let scale = t.powf(0.25);
            let mut best = 0.0f64;
            for i in 0..=samples {
                let r = x_max * i as f64 / samples as f64;
                let val = quad.derivative_norm(k, r / scale)? * scale.powi(-((dim + k) as i32));
                best = best.max(val * (scale + r).powi((dim + k) as i32));
            }
            Ok(best)
        })
        .collect()
}
