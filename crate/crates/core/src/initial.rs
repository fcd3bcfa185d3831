//! Initial-data generators, registered by name.
//!
//! Every generator takes a flat map of real parameters (unknown keys are
//! rejected) and a seed; the same inputs always produce the same samples.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{dealias, Field, GridSpec};
pub use crate::params::Params;
use crate::params::{resolve, Resolved};
use crate::registry::Registry;

/// A named way of sampling initial data on a grid.
pub trait InitialData: Send + Sync {
    fn describe(&self) -> &'static str;
    /// Accepted keys with their defaults; `NaN` marks a grid-dependent default.
    fn defaults(&self) -> &'static [(&'static str, f64)];
    fn sample(&self, grid: &GridSpec, p: &Resolved, seed: u64) -> Result<Field>;
}

pub fn registry() -> &'static Registry<dyn InitialData> {
    static REG: OnceLock<Registry<dyn InitialData>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn InitialData> = Registry::new("initial-data generator");
        r.register("gaussian", Arc::new(Gaussian))
            .register("noise", Arc::new(BandNoise))
            .register("step_noise", Arc::new(StepNoise))
            .register("single_mode", Arc::new(SingleMode))
            .register("bumps", Arc::new(Bumps))
            .register("log_profile", Arc::new(LogProfile));
        r
    })
}

/// Sample the named generator.
pub fn generate(name: &str, grid: &GridSpec, params: &Params, seed: u64) -> Result<Field> {
    let gen = registry().get(name)?;
    let resolved = resolve(name, gen.defaults(), params)?;
    gen.sample(grid, &resolved, seed)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Minimum-image squared distance on the torus.
fn periodic_dist2(x: &[f64], c: &[f64], l: f64) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| {
            let d = a - b;
            let d = d - l * (d / l).round();
            d * d
        })
        .sum()
}

fn normalize_sup(field: Field, amplitude: f64) -> Field {
    let centred = field.shifted(-field.mean());
    let sup = centred.sup_norm();
    if sup == 0.0 {
        centred
    } else {
        centred.scaled(amplitude / sup)
    }
}

fn center_of(grid: &GridSpec, p: &Resolved) -> Vec<f64> {
    vec![p.or("center", grid.box_length() / 2.0); grid.dim()]
}

struct Gaussian;

impl InitialData for Gaussian {
    fn describe(&self) -> &'static str {
        "amplitude · exp(−|x − c|²/(2 width²))"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[("amplitude", 1.0), ("width", 1.0), ("center", f64::NAN)]
    }

    fn sample(&self, grid: &GridSpec, p: &Resolved, _seed: u64) -> Result<Field> {
        let (a, w) = (p.get("amplitude"), p.get("width"));
        if !(w > 0.0) {
            return Err(Error::config("gaussian width must be positive"));
        }
        let c = center_of(grid, p);
        let l = grid.box_length();
        Field::from_fn(grid, |x| a * (-periodic_dist2(x, &c, l) / (2.0 * w * w)).exp())
    }
}

struct BandNoise;

impl InitialData for BandNoise {
    fn describe(&self) -> &'static str {
        "seeded white noise projected onto modes |m| ≤ band, mean zero, sup = amplitude"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[("amplitude", 1.0), ("band", f64::NAN)]
    }

    fn sample(&self, grid: &GridSpec, p: &Resolved, seed: u64) -> Result<Field> {
        let n = grid.points_per_axis();
        let band = p.or("band", (n / 3) as f64);
        if !(band >= 1.0) {
            return Err(Error::config("noise band must be at least 1"));
        }
        let mut r = rng(seed);
        let white: Vec<f64> = (0..grid.len()).map(|_| r.sample(StandardNormal)).collect();
        let modes = grid.modes();
        let dim = grid.dim();
        let projected = Field::new(grid, white)?.apply_multiplier(|i| {
            let inside = (0..dim).all(|a| (modes[grid.axis_index(i, a)].abs() as f64) <= band);
            num_complex::Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
        });
        Ok(normalize_sup(projected, p.get("amplitude")))
    }
}

struct StepNoise;

impl InitialData for StepNoise {
    fn describe(&self) -> &'static str {
        "random levels on a randomly shifted lattice of cells of width ≥ cell, dealiased, mean zero, sup = amplitude"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[("amplitude", 1.0), ("cell", 2.0 * PI)]
    }

    fn sample(&self, grid: &GridSpec, p: &Resolved, seed: u64) -> Result<Field> {
        let l = grid.box_length();
        let cell = p.get("cell");
        if !(cell > 0.0 && cell <= l) {
            return Err(Error::config(format!("step_noise cell must lie in (0, L = {l}]")));
        }
        let per_axis = ((l / cell).floor() as usize).max(1);
        let width = l / per_axis as f64;
        let dim = grid.dim();
        let mut r = rng(seed);
        let offsets: Vec<f64> = (0..dim).map(|_| r.random_range(0.0..width)).collect();
        let levels: Vec<f64> = (0..per_axis.pow(dim as u32)).map(|_| r.sample(StandardNormal)).collect();
        let raw = Field::from_fn(grid, |x| {
            let flat = (0..dim).fold(0, |acc, a| {
                let s = (x[a] - offsets[a]).rem_euclid(l);
                acc * per_axis + ((s / width) as usize).min(per_axis - 1)
            });
            levels[flat]
        })?;
        Ok(normalize_sup(dealias(&raw), p.get("amplitude")))
    }
}

struct SingleMode;

impl InitialData for SingleMode {
    fn describe(&self) -> &'static str {
        "amplitude · sin(2π mode x_axis / L)"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[("amplitude", 1.0), ("mode", 1.0), ("axis", 0.0)]
    }

    fn sample(&self, grid: &GridSpec, p: &Resolved, _seed: u64) -> Result<Field> {
        let axis = p.get("axis");
        if axis < 0.0 || axis.fract() != 0.0 || axis as usize >= grid.dim() {
            return Err(Error::config(format!("single_mode axis must be an integer below {}", grid.dim())));
        }
        let m = p.get("mode");
        if m.fract() != 0.0 {
            return Err(Error::config("single_mode mode must be an integer"));
        }
        let (a, l, axis) = (p.get("amplitude"), grid.box_length(), axis as usize);
        Field::from_fn(grid, |x| a * (2.0 * PI * m * x[axis] / l).sin())
    }
}

struct Bumps;

impl InitialData for Bumps {
    fn describe(&self) -> &'static str {
        "sum of count Gaussians at seeded centers with seeded signs"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[("amplitude", 1.0), ("width", 1.0), ("count", 4.0)]
    }

    fn sample(&self, grid: &GridSpec, p: &Resolved, seed: u64) -> Result<Field> {
        let (a, w, count) = (p.get("amplitude"), p.get("width"), p.get("count"));
        if !(w > 0.0) || count < 1.0 || count.fract() != 0.0 {
            return Err(Error::config("bumps need a positive width and an integer count ≥ 1"));
        }
        let l = grid.box_length();
        let mut r = rng(seed);
        let bumps: Vec<(Vec<f64>, f64)> = (0..count as usize)
            .map(|_| {
                let c = (0..grid.dim()).map(|_| r.random_range(0.0..l)).collect();
                let s = if r.random::<bool>() { 1.0 } else { -1.0 };
                (c, s)
            })
            .collect();
        Field::from_fn(grid, |x| {
            bumps.iter().map(|(c, s)| s * a * (-periodic_dist2(x, c, l) / (2.0 * w * w)).exp()).sum()
        })
    }
}

struct LogProfile;

impl InitialData for LogProfile {
    fn describe(&self) -> &'static str {
        "amplitude · ln((|x − c|² + core²)^{1/2}), a regularized logarithm"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[("amplitude", 2.0), ("core", 0.5), ("center", f64::NAN)]
    }

    fn sample(&self, grid: &GridSpec, p: &Resolved, _seed: u64) -> Result<Field> {
        let (a, core) = (p.get("amplitude"), p.get("core"));
        if !(core > 0.0) {
            return Err(Error::config("log_profile core must be positive"));
        }
        let c = center_of(grid, p);
        let l = grid.box_length();
        Field::from_fn(grid, |x| 0.5 * a * (periodic_dist2(x, &c, l) + core * core).ln())
    }
}
