//! Gauss–Legendre panels, Bessel functions of order 0 and 1, and a small
//! least-squares line fit.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_a^b f` with a single panel.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, w * half))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

const SERIES_LIMIT: f64 = 14.0;

/// Bessel function `J_0`.
pub fn bessel_j0(z: f64) -> f64 {
    let z = z.abs();
    if z <= SERIES_LIMIT {
        bessel_series(0, z)
    } else {
        bessel_asymptotic(0, z)
    }
}

/// Bessel function `J_1`.
pub fn bessel_j1(z: f64) -> f64 {
    let s = z.signum();
    let z = z.abs();
    s * if z <= SERIES_LIMIT { bessel_series(1, z) } else { bessel_asymptotic(1, z) }
}

/// `J_1(z)/z`, regular at the origin.
pub fn bessel_j1_over_z(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        let q = z * z / 4.0;
        0.5 * (1.0 - q / 2.0 + q * q / 12.0)
    } else {
        bessel_j1(z) / z
    }
}

/// `(2 J_1(z) - z J_0(z)) / z²`, regular at the origin (`≈ z/8`).
pub fn bessel_third_combo(z: f64) -> f64 {
    if z.abs() < 0.5 {
        // Σ_{m≥1} (-1)^{m+1} m z^{2m-1} / (4^m m! (m+1)!)
        let mut sum = 0.0;
        let mut fact_m = 1.0;
        let mut fact_m1 = 1.0;
        let mut pow4 = 1.0;
        for m in 1..12 {
            fact_m *= m as f64;
            fact_m1 *= (m + 1) as f64;
            pow4 *= 4.0;
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * m as f64 * z.powi(2 * m as i32 - 1) / (pow4 * fact_m * fact_m1);
        }
        sum
    } else {
        (2.0 * bessel_j1(z) - z * bessel_j0(z)) / (z * z)
    }
}

fn bessel_series(order: u32, z: f64) -> f64 {
    let q = -z * z / 4.0;
    let mut term = if order == 0 { 1.0 } else { z / 2.0 };
    let mut sum = term;
    for m in 1..200 {
        term *= q / (m as f64 * (m + order as usize) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && m > 4 {
            break;
        }
    }
    sum
}

fn bessel_asymptotic(order: u32, z: f64) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * z);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = z - (order as f64 * 0.5 + 0.25) * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Least-squares line `y = slope·x + intercept` and its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 0.0 };
    LineFit { slope, intercept, r_squared }
}
