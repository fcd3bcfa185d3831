//! Seminorms on fields and trajectories: mean-oscillation BMO, the
//! semigroup-extension (Carleson) BMO, the solution norm `X_T`, the auxiliary
//! `L_T^p` norm, the Morrey norm and the energy.
//!
//! Suprema over balls run over a [`BallFamily`]: strided grid centers and a
//! dyadic ladder of radii. Balls are sets of grid points within periodic
//! Euclidean distance `r` of the center and averages are plain sample means.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{derivative_tensor, lp_norm_of, Field, GridSpec, MAX_DIM};
use crate::trajectory::Trajectory;

/// Tuning knobs shared by every ball scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormSettings {
    /// Center subsampling stride along every axis.
    pub stride: usize,
    /// Balls with fewer grid points are skipped and counted.
    pub min_ball_points: usize,
    /// Log-uniform time cells per factor 16 in `t` (one radius halving).
    pub cells_per_halving: usize,
    /// Smallest ladder time as a multiple of `1/k_max⁴`.
    pub floor_factor: f64,
}

impl Default for NormSettings {
    fn default() -> Self {
        Self { stride: 4, min_ball_points: 8, cells_per_halving: 20, floor_factor: 1e-2 }
    }
}

impl NormSettings {
    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }
}

/// Ball center and radius attaining a supremum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallWitness {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// A supremum over balls with its witness and the number of skipped balls.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Supremum {
    pub value: f64,
    pub witness: Option<BallWitness>,
    pub skipped_balls: usize,
}

impl Supremum {
    fn empty(skipped: usize) -> Self {
        Self { value: 0.0, witness: None, skipped_balls: skipped }
    }
}

/// Strided centers and a dyadic radius ladder `R, R/2, …` down to two grid spacings.
#[derive(Clone, Debug)]
pub struct BallFamily {
    grid: GridSpec,
    stride: usize,
    centers: Vec<usize>,
    radii: Vec<f64>,
    stencils: Vec<Vec<[i64; MAX_DIM]>>,
}

impl BallFamily {
    /// Ladder with at least three radii, all at most `L/4`.
    pub fn new(grid: &GridSpec, radius: f64, stride: usize) -> Result<Self> {
        let family = Self::ladder(grid, radius, stride)?;
        if family.radii.len() < 3 {
            return Err(Error::config(format!(
                "radius {radius} gives {} dyadic radii above two grid spacings (h = {}); at least 3 are required",
                family.radii.len(),
                grid.spacing()
            )));
        }
        Ok(family)
    }

    /// Ladder without the minimum-length requirement; may be empty.
    pub fn ladder(grid: &GridSpec, radius: f64, stride: usize) -> Result<Self> {
        let quarter = grid.box_length() / 4.0;
        if !(radius > 0.0) || radius > quarter * (1.0 + 1e-12) {
            return Err(Error::config(format!("ball radius must lie in (0, L/4 = {quarter}], got {radius}")));
        }
        if stride == 0 {
            return Err(Error::config("center stride must be positive"));
        }
        let h = grid.spacing();
        let mut radii = Vec::new();
        let mut r = radius;
        while r >= 2.0 * h * (1.0 - 1e-12) {
            radii.push(r);
            r *= 0.5;
        }
        let n = grid.points_per_axis();
        let dim = grid.dim();
        let centers = (0..grid.len())
            .filter(|&f| (0..dim).all(|a| grid.axis_index(f, a) % stride == 0))
            .collect();
        let stencils = radii.iter().map(|&r| stencil(dim, r / h, n)).collect();
        Ok(Self { grid: grid.clone(), stride, centers, radii, stencils })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Number of grid points in a ball of the `i`-th radius.
    pub fn ball_size(&self, radius_index: usize) -> usize {
        self.stencils[radius_index].len()
    }

    /// Flat indices of the ball around `center` with the `i`-th radius.
    pub fn ball_indices(&self, center: usize, radius_index: usize, out: &mut Vec<usize>) {
        out.clear();
        let dim = self.grid.dim();
        let mut c = [0i64; MAX_DIM];
        for (a, ca) in c.iter_mut().enumerate().take(dim) {
            *ca = self.grid.axis_index(center, a) as i64;
        }
        for off in &self.stencils[radius_index] {
            let mut idx = [0i64; MAX_DIM];
            for a in 0..dim {
                idx[a] = c[a] + off[a];
            }
            out.push(self.grid.flat_index(&idx[..dim]));
        }
    }

    /// `sup` over admissible balls of `eval(radius_index, ball_indices)`.
    ///
    /// Ties resolve to the first ball in (radius, center) order, so the result is
    /// independent of thread scheduling.
    pub fn supremum<F>(&self, min_points: usize, eval: F) -> Supremum
    where
        F: Fn(usize, &[usize]) -> f64 + Sync,
    {
        let admissible: Vec<usize> =
            (0..self.radii.len()).filter(|&i| self.stencils[i].len() >= min_points).collect();
        let skipped = (self.radii.len() - admissible.len()) * self.centers.len();
        let jobs: Vec<(usize, usize)> =
            admissible.iter().flat_map(|&i| (0..self.centers.len()).map(move |c| (i, c))).collect();
        let best = jobs
            .par_iter()
            .enumerate()
            .map_init(Vec::new, |buf, (order, &(i, c))| {
                self.ball_indices(self.centers[c], i, buf);
                (eval(i, buf), order)
            })
            .reduce(
                || (f64::NEG_INFINITY, usize::MAX),
                |a, b| {
                    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                        b
                    } else {
                        a
                    }
                },
            );
        if best.1 == usize::MAX {
            return Supremum::empty(skipped);
        }
        let (i, c) = jobs[best.1];
        let x = self.grid.coordinates(self.centers[c]);
        Supremum {
            value: best.0,
            witness: Some(BallWitness { center: x[..self.grid.dim()].to_vec(), radius: self.radii[i] }),
            skipped_balls: skipped,
        }
    }
}

fn stencil(dim: usize, rad_cells: f64, n: usize) -> Vec<[i64; MAX_DIM]> {
    let reach = (rad_cells.floor() as i64).min(n as i64 / 2);
    let limit = rad_cells * rad_cells * (1.0 + 1e-12);
    let mut out = Vec::new();
    let span = |a: usize| if a < dim { -reach..=reach } else { 0..=0 };
    for i in span(0) {
        for j in span(1) {
            for k in span(2) {
                if ((i * i + j * j + k * k) as f64) <= limit {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

fn ball_mean(values: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
}

/// `sup_{x, r ≤ R} avg_{B(x,r)} |a − a_{x,r}|` with default settings.
pub fn oscillation_bmo(field: &Field, radius: f64) -> Result<f64> {
    Ok(oscillation_bmo_with(field, radius, &NormSettings::default())?.value)
}

pub fn oscillation_bmo_with(field: &Field, radius: f64, settings: &NormSettings) -> Result<Supremum> {
    let family = BallFamily::new(field.grid(), radius, settings.stride)?;
    Ok(oscillation_over(&family, field, settings.min_ball_points))
}

pub fn oscillation_over(family: &BallFamily, field: &Field, min_points: usize) -> Supremum {
    let v = field.values();
    family.supremum(min_points, |_, idx| {
        let m = ball_mean(v, idx);
        idx.iter().map(|&i| (v[i] - m).abs()).sum::<f64>() / idx.len() as f64
    })
}

/// Time-ladder metadata of a Carleson evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderMeta {
    pub radii: Vec<f64>,
    pub stride: usize,
    pub centers: usize,
    pub time_cells: usize,
    pub t_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlesonReport {
    pub value: f64,
    /// Suprema for `k = 1` and `k = 2`.
    pub per_order: Vec<Supremum>,
    pub ladder: LadderMeta,
}

/// `Σ_{k=1,2} sup_{x, r ≤ R} (∫₀^{r⁴} avg_{B(x,r)} t^{(2k−4)/4} |∇^k S(t)a|² dt)^{1/2}`.
pub fn carleson_bmo(field: &Field, radius: f64) -> Result<f64> {
    Ok(carleson_bmo_with(field, radius, &NormSettings::default())?.value)
}

pub fn carleson_bmo_with(field: &Field, radius: f64, settings: &NormSettings) -> Result<CarlesonReport> {
    let family = BallFamily::new(field.grid(), radius, settings.stride)?;
    let grid = field.grid();
    let cells = settings.cells_per_halving.max(1);
    let q = 16f64.powf(1.0 / cells as f64);
    let t_top = radius.powi(4);
    let t_floor = settings.floor_factor / grid.k_max().powi(4);
    let n_cells = ((t_top / t_floor).ln() / q.ln()).ceil().max(1.0) as usize;
    let e_bottom = t_top * q.powi(-(n_cells as i32));
    let nr = family.radii().len();

    let mut per_order = Vec::with_capacity(2);
    for k in 1..=2usize {
        let half_k = k as f64 / 2.0;
        let base = derivative_tensor(field, k, None)?.pointwise_norm_squared();
        // ∫₀^e t^{k/2-1} dt |∇^k a|², since S(t)a ≈ a below the ladder
        let mut cum: Vec<f64> = base.iter().map(|v| v * e_bottom.powf(half_k) / half_k).collect();
        let mut snapshots: Vec<Option<Vec<f64>>> = vec![None; nr];
        for (i, snap) in snapshots.iter_mut().enumerate() {
            if cells * i >= n_cells {
                let r4 = family.radii()[i].powi(4);
                *snap = Some(base.iter().map(|v| v * r4.powf(half_k) / half_k).collect());
            }
        }
        for j in (0..n_cells).rev() {
            let hi = t_top * q.powi(-(j as i32));
            let mid = hi / q.sqrt();
            let w = mid.powf(half_k) * q.ln();
            let sq = derivative_tensor(field, k, Some(mid))?.pointwise_norm_squared();
            for (c, s) in cum.iter_mut().zip(&sq) {
                *c += w * s;
            }
            if j % cells == 0 && j / cells < nr {
                snapshots[j / cells] = Some(cum.clone());
            }
        }
        let snapshots: Vec<Vec<f64>> = snapshots.into_iter().map(|s| s.expect("every radius is covered")).collect();
        let mut sup = family.supremum(settings.min_ball_points, |i, idx| ball_mean(&snapshots[i], idx));
        sup.value = sup.value.max(0.0).sqrt();
        per_order.push(sup);
    }
    let value = per_order.iter().map(|s| s.value).sum();
    Ok(CarlesonReport {
        value,
        per_order,
        ladder: LadderMeta {
            radii: family.radii().to_vec(),
            stride: family.stride(),
            centers: family.centers().len(),
            time_cells: n_cells,
            t_floor,
        },
    })
}

/// Time node attaining a weighted sup norm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeWitness {
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormArgmax {
    pub inf: BTreeMap<usize, Option<TimeWitness>>,
    pub carleson: BTreeMap<usize, Option<BallWitness>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XtLadder {
    pub radii: Vec<f64>,
    pub stride: usize,
    pub centers: usize,
    /// True when `T^{1/4}` exceeded `L/4` and the radii were capped.
    pub radius_clamped: bool,
}

/// Components of the `X_T` norm with their witnesses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport {
    pub horizon: f64,
    pub n_inf: BTreeMap<usize, f64>,
    pub n_carleson: BTreeMap<usize, f64>,
    pub argmax: NormArgmax,
    pub total: f64,
    pub ladder: XtLadder,
    pub skipped_balls: usize,
}

/// `Σ_{k=1,2} N_{k,∞,T}(u) + N_{k,c,T}(u)` with default settings.
pub fn xt_norm(trajectory: &Trajectory, horizon: f64) -> Result<NormReport> {
    xt_norm_with(trajectory, horizon, &NormSettings::default())
}

pub fn xt_norm_with(trajectory: &Trajectory, horizon: f64, settings: &NormSettings) -> Result<NormReport> {
    trajectory.ensure_covers(horizon)?;
    let grid = trajectory.grid();
    let times: Vec<f64> = trajectory.times().iter().cloned().take_while(|&t| t <= horizon * (1.0 + 1e-12)).collect();
    let quarter = grid.box_length() / 4.0;
    let r_top = horizon.powf(0.25);
    let radius_clamped = r_top > quarter;
    let family = BallFamily::ladder(grid, r_top.min(quarter), settings.stride)?;

    let mut report = NormReport {
        horizon,
        n_inf: BTreeMap::new(),
        n_carleson: BTreeMap::new(),
        argmax: NormArgmax { inf: BTreeMap::new(), carleson: BTreeMap::new() },
        total: 0.0,
        ladder: XtLadder {
            radii: family.radii().to_vec(),
            stride: family.stride(),
            centers: family.centers().len(),
            radius_clamped,
        },
        skipped_balls: 0,
    };
    for k in 1..=2usize {
        let exponent = 4.0 / k as f64;
        let densities: Vec<Vec<f64>> = trajectory.fields()[..times.len()]
            .par_iter()
            .map(|f| derivative_tensor(f, k, None).map(|d| d.pointwise_norm_squared()))
            .collect::<Result<_>>()?;

        let mut best = 0.0;
        let mut at = None;
        for (t, d) in times.iter().zip(&densities) {
            if *t > 0.0 {
                let v = t.powf(k as f64 / 4.0) * d.iter().fold(0.0f64, |m, &x| m.max(x)).sqrt();
                if v > best {
                    best = v;
                    at = Some(TimeWitness { time: *t });
                }
            }
        }
        report.n_inf.insert(k, best);
        report.argmax.inf.insert(k, at);

        let powered: Vec<Vec<f64>> =
            densities.iter().map(|d| d.iter().map(|&s| s.powf(exponent / 2.0)).collect()).collect();
        let integrals = time_integrals(&times, &powered, family.radii());
        let mut sup = family.supremum(settings.min_ball_points, |i, idx| ball_mean(&integrals[i], idx));
        sup.value = sup.value.max(0.0).powf(k as f64 / 4.0);
        report.n_carleson.insert(k, sup.value);
        report.argmax.carleson.insert(k, sup.witness);
        report.skipped_balls += sup.skipped_balls;
    }
    report.total = report.n_inf.values().sum::<f64>() + report.n_carleson.values().sum::<f64>();
    Ok(report)
}

/// Trapezoid integrals `∫₀^{r⁴} f(t) dt` at every grid point, one per radius,
/// with a linearly interpolated partial last segment.
fn time_integrals(times: &[f64], samples: &[Vec<f64>], radii: &[f64]) -> Vec<Vec<f64>> {
    let len = samples[0].len();
    radii
        .iter()
        .map(|r| {
            let top = r.powi(4);
            let mut acc = vec![0.0; len];
            for j in 0..times.len() - 1 {
                let (a, b) = (times[j], times[j + 1]);
                if a >= top {
                    break;
                }
                let end = b.min(top);
                let theta = (end - a) / (b - a);
                let w = 0.5 * (end - a);
                for (o, (fa, fb)) in acc.iter_mut().zip(samples[j].iter().zip(&samples[j + 1])) {
                    let fe = fa + theta * (fb - fa);
                    *o += w * (fa + fe);
                }
            }
            acc
        })
        .collect()
}

/// `sup_t ‖f‖_p + t^{1/4}‖∇f‖_p + t^{1/2}‖∇²f‖_p` over nodes in `[0, T]`.
pub fn lpt_norm(trajectory: &Trajectory, p: f64, horizon: f64) -> Result<f64> {
    let dim = trajectory.grid().dim() as f64;
    if !(p == 2.0 || p == 4.0 || p == dim || p.is_infinite() && p > 0.0) {
        return Err(Error::config(format!("L_T^p supports p ∈ {{2, 4, {dim}, ∞}}, got {p}")));
    }
    trajectory.ensure_covers(horizon)?;
    let cell = trajectory.grid().cell_volume();
    let mut best = 0.0f64;
    for (t, f) in trajectory.times().iter().zip(trajectory.fields()) {
        if *t > horizon * (1.0 + 1e-12) {
            break;
        }
        let g = derivative_tensor(f, 1, None)?.pointwise_norm();
        let h = derivative_tensor(f, 2, None)?.pointwise_norm();
        let v = lp_norm_of(f.values(), p, cell)
            + t.powf(0.25) * lp_norm_of(&g, p, cell)
            + t.sqrt() * lp_norm_of(&h, p, cell);
        best = best.max(v);
    }
    Ok(best)
}

/// `sup_{x, r ≤ L/4} (r^{−λ} ∫_{B(x,r)} |a|^p)^{1/p}`.
pub fn morrey_norm(field: &Field, p: f64, lambda: f64) -> Result<f64> {
    let radius = field.grid().box_length() / 4.0;
    Ok(morrey_norm_with(field, p, lambda, radius, &NormSettings::default())?.value)
}

pub fn morrey_norm_with(field: &Field, p: f64, lambda: f64, radius: f64, settings: &NormSettings) -> Result<Supremum> {
    let dim = field.grid().dim() as f64;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::config(format!("Morrey exponent p must be finite and ≥ 1, got {p}")));
    }
    if !(0.0..dim).contains(&lambda) {
        return Err(Error::config(format!("Morrey parameter λ must lie in [0, {dim}), got {lambda}")));
    }
    let family = BallFamily::new(field.grid(), radius, settings.stride)?;
    let cell = field.grid().cell_volume();
    let powered: Vec<f64> = field.values().iter().map(|v| v.abs().powf(p)).collect();
    let radii = family.radii().to_vec();
    let mut sup = family.supremum(settings.min_ball_points, |i, idx| {
        radii[i].powf(-lambda) * idx.iter().map(|&j| powered[j]).sum::<f64>() * cell
    });
    sup.value = sup.value.max(0.0).powf(1.0 / p);
    Ok(sup)
}

/// `∫ ½|∇²u|² + σ ¼|∇u|⁴`; `sigma` is `+1` (coercive) or `−1`.
pub fn energy(field: &Field, sigma: f64) -> f64 {
    let g = derivative_tensor(field, 1, None).expect("order 1").pointwise_norm_squared();
    let h = derivative_tensor(field, 2, None).expect("order 2").pointwise_norm_squared();
    let s = sigma.signum();
    let sum: f64 = g.iter().zip(&h).map(|(g2, h2)| 0.5 * h2 + 0.25 * s * g2 * g2).sum();
    sum * field.grid().cell_volume()
}
