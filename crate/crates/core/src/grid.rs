//! Periodic pseudospectral engine.
//!
//! The whole space is replaced by a torus of side `L` sampled on `N^dim`
//! points. Fields carry their samples plus lazily computed Fourier
//! coefficients; derivatives, the biharmonic semigroup `e^{-tΔ²}` and the
//! dealiasing projection are all diagonal Fourier multipliers.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Sub};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;
const MIN_POINTS: usize = 16;
const MAX_DERIVATIVE_ORDER: usize = 4;

struct FftPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Validated discretization of the periodic box `[0, L)^dim`.
#[derive(Clone)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    length: f64,
    wavenumbers: Arc<[f64]>,
    modes: Arc<[i64]>,
    k_squared: Arc<[f64]>,
    plans: Arc<FftPlans>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("dim", &self.dim)
            .field("points_per_axis", &self.n)
            .field("box_length", &self.length)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

/// Build a grid, checking that `points_per_axis` is a power of two `>= 16`,
/// `box_length > 0` and `dim` is 1, 2 or 3.
pub fn make_grid(dim: usize, points_per_axis: usize, box_length: f64) -> Result<GridSpec> {
    GridSpec::new(dim, points_per_axis, box_length)
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::config(format!("unsupported dimension {dim} (expected 1, 2 or 3)")));
        }
        if n < MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::config(format!(
                "points per axis must be a power of two >= {MIN_POINTS}, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::config(format!("box length must be positive, got {length}")));
        }
        let modes: Arc<[i64]> = (0..n)
            .map(|j| if j < n / 2 { j as i64 } else { j as i64 - n as i64 })
            .collect();
        let wavenumbers: Arc<[f64]> = modes.iter().map(|&m| 2.0 * PI * m as f64 / length).collect();
        let total = n.pow(dim as u32);
        let k_squared: Arc<[f64]> = (0..total)
            .map(|flat| {
                (0..dim)
                    .map(|axis| {
                        let k = wavenumbers[axis_index(flat, axis, dim, n)];
                        k * k
                    })
                    .sum()
            })
            .collect();
        let mut planner = FftPlanner::new();
        let plans = Arc::new(FftPlans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        });
        Ok(Self { dim, n, length, wavenumbers, modes, k_squared, plans })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.length
    }

    /// Total number of samples, `N^dim`.
    pub fn len(&self) -> usize {
        self.k_squared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_squared.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Angular wavenumbers `2πm/L` along one axis, in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Integer mode numbers `m ∈ {-N/2, ..., N/2-1}` along one axis, in FFT order.
    pub fn modes(&self) -> &[i64] {
        &self.modes
    }

    /// `|k|²` for every flat spectral index.
    pub fn k_squared(&self) -> &[f64] {
        &self.k_squared
    }

    /// Largest wavevector norm on the grid.
    pub fn k_max(&self) -> f64 {
        self.k_squared.iter().cloned().fold(0.0, f64::max).sqrt()
    }

    /// Largest wavevector norm that survives the two-thirds dealiasing projection.
    pub fn k_max_dealiased(&self) -> f64 {
        let m = (self.n / 3) as f64;
        2.0 * PI * m / self.length * (self.dim as f64).sqrt()
    }

    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        axis_index(flat, axis, self.dim, self.n)
    }

    /// Flat row-major index of a multi-index (last axis fastest), wrapping periodically.
    pub fn flat_index(&self, idx: &[i64]) -> usize {
        let n = self.n as i64;
        idx.iter().fold(0usize, |acc, &i| acc * self.n + i.rem_euclid(n) as usize)
    }

    /// Physical coordinates of a sample; unused trailing entries are zero.
    pub fn coordinates(&self, flat: usize) -> [f64; MAX_DIM] {
        let h = self.spacing();
        let mut x = [0.0; MAX_DIM];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.axis_index(flat, axis) as f64 * h;
        }
        x
    }

    /// True when every axis mode satisfies `|m| <= N/3`.
    pub fn is_resolved_mode(&self, flat: usize) -> bool {
        let cutoff = (self.n / 3) as i64;
        (0..self.dim).all(|axis| self.modes[self.axis_index(flat, axis)].abs() <= cutoff)
    }

    /// The same sample layout on a box contracted by `factor` (side `L / factor`).
    pub fn contracted(&self, factor: f64) -> Result<Self> {
        Self::new(self.dim, self.n, self.length / factor)
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    /// Inverse transform, normalized, keeping the real part.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.transform(&mut data, true);
        let scale = 1.0 / data.len() as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(data.len(), self.len());
        let plan = if inverse { &self.plans.inverse } else { &self.plans.forward };
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // Last axis is contiguous: all lines at once.
        plan.process_with_scratch(data, &mut scratch);
        let n = self.n;
        let total = data.len();
        let mut lines = vec![Complex64::default(); total];
        for axis in 0..self.dim - 1 {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let bases: Vec<usize> = (0..total).filter(|&f| (f / stride) % n == 0).collect();
            for (l, &base) in bases.iter().enumerate() {
                for j in 0..n {
                    lines[l * n + j] = data[base + j * stride];
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            for (l, &base) in bases.iter().enumerate() {
                for j in 0..n {
                    data[base + j * stride] = lines[l * n + j];
                }
            }
        }
    }

    /// `Π_a (i k_a)^{α_a}` at a flat spectral index; Nyquist modes vanish on odd-order axes.
    pub fn derivative_symbol(&self, flat: usize, alpha: &[usize]) -> Complex64 {
        let nyquist = -(self.n as i64) / 2;
        let mut symbol = Complex64::new(1.0, 0.0);
        for (axis, &order) in alpha.iter().enumerate() {
            if order == 0 {
                continue;
            }
            let j = self.axis_index(flat, axis);
            if order % 2 == 1 && self.modes[j] == nyquist {
                return Complex64::default();
            }
            symbol *= i_pow(order) * self.wavenumbers[j].powi(order as i32);
        }
        symbol
    }
}

fn axis_index(flat: usize, axis: usize, dim: usize, n: usize) -> usize {
    (flat / n.pow((dim - 1 - axis) as u32)) % n
}

fn i_pow(p: usize) -> Complex64 {
    match p % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Real scalar samples on a grid with cached Fourier coefficients.
///
/// Fields are immutable; every operation returns a new field.
#[derive(Clone)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
    spectral: OnceLock<Vec<Complex64>>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("sup", &self.sup_norm())
            .finish()
    }
}

impl Field {
    pub fn new(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(format!(
                "field has {} samples, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite sample at index {i}")));
        }
        Ok(Self { grid: grid.clone(), values, spectral: OnceLock::new() })
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let dim = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.coordinates(i)[..dim])).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()], spectral: OnceLock::new() }
    }

    /// Field from Hermitian-symmetric coefficients; the coefficients are kept as the cache.
    pub(crate) fn from_spectral(grid: &GridSpec, coeffs: Vec<Complex64>) -> Self {
        let values = grid.inverse(&coeffs);
        let spectral = OnceLock::new();
        let _ = spectral.set(coeffs);
        Self { grid: grid.clone(), values, spectral }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spectral(&self) -> &[Complex64] {
        self.spectral.get_or_init(|| self.grid.forward(&self.values))
    }

    /// Multiply every Fourier coefficient by `symbol(flat_index)`.
    pub fn apply_multiplier(&self, symbol: impl Fn(usize) -> Complex64) -> Field {
        let coeffs = self.spectral().iter().enumerate().map(|(i, &c)| c * symbol(i)).collect();
        Field::from_spectral(&self.grid, coeffs)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect(), spectral: OnceLock::new() }
    }

    pub fn scaled(&self, s: f64) -> Field {
        let spectral = OnceLock::new();
        if let Some(c) = self.spectral.get() {
            let _ = spectral.set(c.iter().map(|z| z * s).collect());
        }
        Field { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect(), spectral }
    }

    pub fn shifted(&self, c: f64) -> Field {
        self.map(|v| v + c)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        Field { grid: self.grid.clone(), values, spectral: OnceLock::new() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Riemann-sum `L^p` norm with cell-volume weight; `p = ∞` gives the grid maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_of(&self.values, p, self.grid.cell_volume())
    }

    /// Sample-space `ℓ²` norm (no cell weight).
    pub fn l2_samples(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub(crate) fn lp_norm_of(values: &[f64], p: f64, cell: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cell).powf(1.0 / p)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.axpy(-1.0, rhs)
    }
}

/// `∇^k` of a field: `dim^k` components indexed by `(i_1, ..., i_k)` in base-`dim` order.
#[derive(Clone, Debug)]
pub struct TensorField {
    grid: GridSpec,
    order: usize,
    components: Vec<Field>,
}

impl TensorField {
    pub fn new(grid: &GridSpec, order: usize, components: Vec<Field>) -> Result<Self> {
        let expected = grid.dim().pow(order as u32);
        if components.len() != expected {
            return Err(Error::config(format!(
                "order-{order} tensor needs {expected} components, got {}",
                components.len()
            )));
        }
        Ok(Self { grid: grid.clone(), order, components })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, index: &[usize]) -> &Field {
        let dim = self.grid.dim();
        let flat = index.iter().fold(0, |acc, &i| acc * dim + i);
        &self.components[flat]
    }

    /// Pointwise Frobenius norm `|∇^k u|(x)`.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        self.pointwise_norm_squared().into_iter().map(f64::sqrt).collect()
    }

    pub fn pointwise_norm_squared(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for c in &self.components {
            for (o, v) in out.iter_mut().zip(c.values()) {
                *o += v * v;
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norm_squared().iter().fold(0.0f64, |m, &v| m.max(v)).sqrt()
    }
}

fn multi_index_of(tuple: &[usize], dim: usize) -> [usize; MAX_DIM] {
    let mut alpha = [0; MAX_DIM];
    for &i in tuple {
        alpha[i] += 1;
    }
    let _ = dim;
    alpha
}

/// Partial derivative `∂^α`; `multi_index` has one entry per axis.
pub fn derivative(field: &Field, multi_index: &[usize]) -> Result<Field> {
    let grid = field.grid();
    if multi_index.len() != grid.dim() {
        return Err(Error::config(format!(
            "multi-index has {} entries on a {}-dimensional grid",
            multi_index.len(),
            grid.dim()
        )));
    }
    let order: usize = multi_index.iter().sum();
    if order > MAX_DERIVATIVE_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    if order == 0 {
        return Ok(field.clone());
    }
    Ok(field.apply_multiplier(|i| grid.derivative_symbol(i, multi_index)))
}

/// `S(t) = e^{-tΔ²}`, the Fourier multiplier `e^{-t|k|⁴}`.
pub fn apply_semigroup(field: &Field, t: f64) -> Result<Field> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("semigroup time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(field.clone());
    }
    let k2 = field.grid().k_squared();
    Ok(field.apply_multiplier(|i| Complex64::new((-t * k2[i] * k2[i]).exp(), 0.0)))
}

/// `∇^k S(t) field` for `t > 0`, `k ∈ {1, 2, 3}`.
pub fn semigroup_derivative(field: &Field, t: f64, k: usize) -> Result<TensorField> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("derivative of the semigroup needs t > 0, got {t}")));
    }
    if !(1..=3).contains(&k) {
        return Err(Error::config(format!("semigroup derivative order must be 1, 2 or 3, got {k}")));
    }
    derivative_tensor(field, k, Some(t))
}

/// `∇^k field`, optionally composed with `S(t)`.
pub fn derivative_tensor(field: &Field, order: usize, t: Option<f64>) -> Result<TensorField> {
    if order > MAX_DERIVATIVE_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let grid = field.grid();
    let dim = grid.dim();
    let count = dim.pow(order as u32);
    let k2 = grid.k_squared();
    let mut cache: Vec<([usize; MAX_DIM], Field)> = Vec::new();
    let mut components = Vec::with_capacity(count);
    for flat in 0..count {
        let mut tuple = vec![0; order];
        let mut rest = flat;
        for slot in tuple.iter_mut().rev() {
            *slot = rest % dim;
            rest /= dim;
        }
        let alpha = multi_index_of(&tuple, dim);
        if let Some((_, f)) = cache.iter().find(|(a, _)| *a == alpha) {
            components.push(f.clone());
            continue;
        }
        let a = &alpha[..dim];
        let comp = match t {
            Some(t) => field.apply_multiplier(|i| {
                grid.derivative_symbol(i, a) * (-t * k2[i] * k2[i]).exp()
            }),
            None => field.apply_multiplier(|i| grid.derivative_symbol(i, a)),
        };
        cache.push((alpha, comp.clone()));
        components.push(comp);
    }
    TensorField::new(grid, order, components)
}

pub fn gradient(field: &Field) -> TensorField {
    derivative_tensor(field, 1, None).expect("order 1 is supported")
}

pub fn hessian(field: &Field) -> TensorField {
    derivative_tensor(field, 2, None).expect("order 2 is supported")
}

/// Two-thirds projection: zero every coefficient with some `|m_a| > N/3`.
pub fn dealias(field: &Field) -> Field {
    let grid = field.grid();
    field.apply_multiplier(|i| {
        if grid.is_resolved_mode(i) {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sine(grid: &GridSpec) -> Field {
        let l = grid.box_length();
        Field::from_fn(grid, |x| (2.0 * PI * x[0] / l).sin()).unwrap()
    }

    #[test]
    fn wavenumbers_are_integral_on_two_pi_box() {
        let g = make_grid(1, 128, 2.0 * PI).unwrap();
        let mut ks: Vec<i64> = g.wavenumbers().iter().map(|k| k.round() as i64).collect();
        for (k, r) in g.wavenumbers().iter().zip(&ks) {
            assert_abs_diff_eq!(*k, *r as f64, epsilon = 1e-12);
        }
        ks.sort();
        assert_eq!(ks.first(), Some(&-64));
        assert_eq!(ks.last(), Some(&63));
    }

    #[test]
    fn grid_2d_size_and_max_wavenumber() {
        let g = make_grid(2, 64, 10.0).unwrap();
        assert_eq!(g.len(), 4096);
        let kmax = g.wavenumbers().iter().fold(0.0f64, |m, k| m.max(k.abs()));
        assert_abs_diff_eq!(kmax, 64.0 * PI / 10.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(matches!(make_grid(1, 100, 1.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(1, 8, 1.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(4, 16, 1.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(2, 32, 0.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(2, 32, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = make_grid(2, 32, 5.0).unwrap();
        let c = Field::constant(&g, 3.5);
        for alpha in [[1, 0], [0, 2], [2, 2], [1, 3]] {
            assert!(derivative(&c, &alpha).unwrap().sup_norm() < 1e-12);
        }
    }

    #[test]
    fn first_and_fourth_derivative_of_resolved_mode() {
        let g = make_grid(1, 64, 3.0).unwrap();
        let k = 2.0 * PI / 3.0;
        let u = sine(&g);
        let du = derivative(&u, &[1]).unwrap();
        let expected = Field::from_fn(&g, |x| k * (k * x[0]).cos()).unwrap();
        assert!(du.max_abs_diff(&expected) <= 1e-10);
        let d4 = derivative(&u, &[4]).unwrap();
        let err4 = d4.max_abs_diff(&u.scaled(k.powi(4)));
        // high-mode rounding noise is amplified by k⁴
        assert!(err4 <= 1e-9 * k.powi(4), "err {err4}");
    }

    #[test]
    fn order_above_four_is_unsupported() {
        let g = make_grid(2, 16, 1.0).unwrap();
        let u = Field::zeros(&g);
        assert!(matches!(derivative(&u, &[3, 2]), Err(Error::UnsupportedOrder(5))));
        assert!(matches!(derivative(&u, &[1]), Err(Error::Config(_))));
    }

    #[test]
    fn semigroup_special_cases() {
        let g = make_grid(1, 64, 2.0 * PI).unwrap();
        let u = sine(&g);
        assert_eq!(apply_semigroup(&u, 0.0).unwrap().values(), u.values());
        let c = Field::constant(&g, 2.25);
        assert!(apply_semigroup(&c, 3.0).unwrap().max_abs_diff(&c) < 1e-14);
        let s1 = apply_semigroup(&u, 1.0).unwrap();
        let expected = u.scaled((-1.0f64).exp());
        assert!(s1.max_abs_diff(&expected) <= 1e-10 * expected.sup_norm());
        assert!(matches!(apply_semigroup(&u, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn semigroup_derivative_cases() {
        let g = make_grid(1, 64, 2.0 * PI).unwrap();
        let c = Field::constant(&g, 1.0);
        assert!(semigroup_derivative(&c, 1.0, 1).unwrap().sup_norm() < 1e-14);
        let u = sine(&g);
        let t = 0.3;
        let d2 = semigroup_derivative(&u, t, 2).unwrap();
        let expected = u.scaled(-(-t).exp());
        assert!(d2.components()[0].max_abs_diff(&expected) < 1e-12);
        assert!(matches!(semigroup_derivative(&u, 0.0, 1), Err(Error::Domain(_))));
        assert!(matches!(semigroup_derivative(&u, 1.0, 4), Err(Error::Config(_))));
    }

    #[test]
    fn dealias_cases() {
        let g = make_grid(1, 96usize.next_power_of_two(), 2.0 * PI).unwrap();
        let n = g.points_per_axis();
        let low = Field::from_fn(&g, |x| (5.0 * x[0]).cos() + (((n / 3) as f64) * x[0]).sin()).unwrap();
        assert!(dealias(&low).max_abs_diff(&low) < 1e-12);
        let m = (n / 2 - 1) as f64;
        let high = Field::from_fn(&g, |x| (m * x[0]).cos()).unwrap();
        assert!(dealias(&high).sup_norm() < 1e-12);
    }

    #[test]
    fn tensor_components_are_symmetric() {
        let g = make_grid(2, 32, 2.0 * PI).unwrap();
        let u = Field::from_fn(&g, |x| (x[0] + 2.0 * x[1]).sin() * x[1].cos()).unwrap();
        let h = hessian(&u);
        assert_eq!(h.components().len(), 4);
        assert!(h.component(&[0, 1]).max_abs_diff(h.component(&[1, 0])) < 1e-12);
        let t3 = derivative_tensor(&u, 3, None).unwrap();
        assert!(t3.component(&[0, 1, 1]).max_abs_diff(t3.component(&[1, 1, 0])) < 1e-12);
    }

    #[test]
    fn multi_axis_transform_round_trip() {
        let g = make_grid(3, 16, 4.0).unwrap();
        let u = Field::from_fn(&g, |x| (x[0] * 1.3).sin() + x[1] * x[2] - 0.5 * x[2]).unwrap();
        let back = g.inverse(u.spectral());
        let err: f64 = back.iter().zip(u.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-12 * u.l2_samples());
    }
}
