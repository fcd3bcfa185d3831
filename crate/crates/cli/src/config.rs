use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use biflow::experiments::{ExperimentContext, InitialSpec, Tolerances};
use biflow::grid::{make_grid, GridSpec};
use biflow::initial::Params;
use biflow::solver::{NonlinearityKind, ProbeConfig, SolverConfig};
use biflow::{snapshot, Error, Result};
use serde::{Deserialize, Serialize};

/// Top-level run configuration, read from TOML.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: NonlinearityKind,
    pub initial: InitialConfig,
    /// `v₀ − u₀` for stability experiments.
    #[serde(default)]
    pub perturbation: Option<InitialConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_nonlinearity() -> NonlinearityKind {
    NonlinearityKind::CubicCoercive
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub generator: Option<String>,
    #[serde(default)]
    pub params: Params,
    /// Stored field, relative to the config file.
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default = "default_method")]
    pub method: String,
    pub horizon: f64,
    /// Times whose nearest trajectory nodes are stored; empty keeps only the final state.
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

fn default_method() -> String {
    "picard".to_string()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for init in std::iter::once(&mut cfg.initial).chain(cfg.perturbation.as_mut()) {
            if let Some(p) = init.snapshot.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.nonlinearity.build()?;
        self.solver.validate()?;
        self.initial.validate()?;
        if let Some(p) = &self.perturbation {
            p.validate()?;
        }
        if let Some(s) = &self.solve {
            if !(s.horizon > 0.0 && s.horizon.is_finite()) {
                return Err(Error::config("solve.horizon must be positive"));
            }
            biflow::solver::solvers().get(&s.method)?;
            if s.snapshots.iter().any(|t| !(*t >= 0.0 && *t <= s.horizon)) {
                return Err(Error::config("solve.snapshots must lie in [0, horizon]"));
            }
        }
        if let Some(e) = &self.experiment {
            let exp = biflow::experiments::experiments().get(&e.name)?;
            biflow::params::resolve(&e.name, exp.defaults(), &e.params)?;
            if e.tolerances.values().any(|v| !v.is_finite()) {
                return Err(Error::config("experiment tolerances must be finite"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(self.grid.dim, self.grid.n, self.grid.length)
    }

    pub fn context(&self, tolerance_scale: f64) -> Result<ExperimentContext> {
        let grid = self.grid()?;
        let mut ctx = ExperimentContext::new(grid.clone(), self.initial.spec(&grid)?);
        ctx.nonlinearity = self.nonlinearity.clone();
        ctx.perturbation = self.perturbation.as_ref().map(|p| p.spec(&grid)).transpose()?;
        ctx.solver = self.solver.clone();
        ctx.probe = self.probe.clone();
        ctx.seed = self.seed;
        let mut tol = Tolerances::scaled(tolerance_scale);
        if let Some(e) = &self.experiment {
            ctx.params = e.params.clone();
            tol.overrides = e.tolerances.clone();
        }
        ctx.tolerances = tol;
        Ok(ctx)
    }
}

impl InitialConfig {
    fn validate(&self) -> Result<()> {
        match (&self.generator, &self.snapshot) {
            (Some(g), None) => biflow::initial::registry().get(g).map(|_| ()),
            (None, Some(_)) if self.params.is_empty() => Ok(()),
            (None, Some(_)) => Err(Error::config("initial params are not used with a snapshot")),
            _ => Err(Error::config("initial data needs exactly one of `generator` and `snapshot`")),
        }
    }

    fn spec(&self, grid: &GridSpec) -> Result<InitialSpec> {
        match (&self.generator, &self.snapshot) {
            (Some(g), _) => Ok(InitialSpec::Generated { generator: g.clone(), params: self.params.clone() }),
            (None, Some(path)) => {
                let field = snapshot::read(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
                let stored = field.grid();
                let same = stored.dim() == grid.dim()
                    && stored.points_per_axis() == grid.points_per_axis()
                    && (stored.box_length() - grid.box_length()).abs() <= 1e-6 * grid.box_length();
                if !same {
                    return Err(Error::config(format!("{} does not match the configured grid", path.display())));
                }
                Ok(InitialSpec::Given(biflow::Field::new(grid, field.into_values())?))
            }
            (None, None) => Err(Error::config("initial data needs a generator or a snapshot")),
        }
    }
}
