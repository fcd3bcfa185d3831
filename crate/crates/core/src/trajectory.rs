use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

/// Largest admissible ratio `t_{j+1}/t_j` between positive nodes.
pub const MAX_GRADING: f64 = 2.0;

/// Time-graded samples `(t_j, u(·, t_j))` with `t_0 = 0`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: GridSpec,
    times: Vec<f64>,
    fields: Vec<Field>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, fields: Vec<Field>) -> Result<Self> {
        let traj = Self::new_ungraded(times, fields)?;
        for w in traj.times.windows(2) {
            if w[0] > 0.0 && w[1] / w[0] > MAX_GRADING * (1.0 + 1e-9) {
                return Err(Error::config(format!(
                    "time nodes {} -> {} exceed the grading ratio {MAX_GRADING}",
                    w[0], w[1]
                )));
            }
        }
        Ok(traj)
    }

    /// Trajectory without the grading check (time-shifted windows, coarse output samples).
    pub fn new_ungraded(times: Vec<f64>, fields: Vec<Field>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(Error::config(format!(
                "trajectory needs matching non-empty times and fields ({} vs {})",
                times.len(),
                fields.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::domain(format!("trajectory must start at t = 0, got {}", times[0])));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("trajectory times must be strictly ascending"));
        }
        let grid = fields[0].grid().clone();
        if fields.iter().any(|f| *f.grid() != grid) {
            return Err(Error::config("trajectory fields must share one grid"));
        }
        Ok(Self { grid, times, fields })
    }

    /// Identically zero trajectory on the given nodes.
    pub fn zeros(grid: &GridSpec, times: Vec<f64>) -> Result<Self> {
        let fields = vec![Field::zeros(grid); times.len()];
        Self::new(times, fields)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn last(&self) -> &Field {
        self.fields.last().expect("non-empty")
    }

    /// Index of the node equal to `t` (relative tolerance `1e-12`).
    pub fn node_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1e-300))
    }

    /// Check that the nodes cover `(0, horizon]`.
    pub fn ensure_covers(&self, horizon: f64) -> Result<()> {
        if self.horizon() < horizon * (1.0 - 1e-12) {
            return Err(Error::domain(format!(
                "trajectory ends at {} but (0, {horizon}] was requested",
                self.horizon()
            )));
        }
        Ok(())
    }

    pub fn same_nodes(&self, other: &Trajectory) -> bool {
        self.grid == other.grid && self.times == other.times
    }

    /// Nodewise `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Trajectory) -> Result<Trajectory> {
        if !self.same_nodes(other) {
            return Err(Error::domain("trajectories do not share grid and time nodes"));
        }
        let fields = self.fields.iter().zip(&other.fields).map(|(a, b)| a.axpy(s, b)).collect();
        Ok(Trajectory { grid: self.grid.clone(), times: self.times.clone(), fields })
    }

    pub fn map_fields(&self, f: impl Fn(&Field) -> Field) -> Trajectory {
        Trajectory { grid: self.grid.clone(), times: self.times.clone(), fields: self.fields.iter().map(f).collect() }
    }

    /// `ũ(s) = u(t0 + s)`; `t0` must be a node.
    pub fn shifted(&self, t0: f64) -> Result<Trajectory> {
        let start = self
            .node_index(t0)
            .ok_or_else(|| Error::domain(format!("shift {t0} is not a trajectory node")))?;
        let times = self.times[start..].iter().map(|t| t - self.times[start]).collect();
        Self::new_ungraded(times, self.fields[start..].to_vec())
    }

    /// Nodes up to and including `horizon`.
    pub fn truncated(&self, horizon: f64) -> Result<Trajectory> {
        let end = self.times.partition_point(|&t| t <= horizon * (1.0 + 1e-12));
        Self::new_ungraded(self.times[..end].to_vec(), self.fields[..end].to_vec())
    }

    /// Sup-norm distance at every node.
    pub fn max_abs_diff(&self, other: &Trajectory) -> Result<f64> {
        if !self.same_nodes(other) {
            return Err(Error::domain("trajectories do not share grid and time nodes"));
        }
        Ok(self.fields.iter().zip(&other.fields).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max))
    }
}

/// `0` followed by geometric nodes from `first` to `horizon`.
///
/// At least `min_nodes` positive nodes are produced, more if needed to keep the
/// ratio between neighbours at most `max_ratio`.
pub fn graded_times(horizon: f64, min_nodes: usize, max_ratio: f64, first: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    if !(max_ratio > 1.0 && max_ratio <= MAX_GRADING) {
        return Err(Error::config(format!("grading ratio must lie in (1, {MAX_GRADING}], got {max_ratio}")));
    }
    if min_nodes < 2 {
        return Err(Error::config("at least two positive time nodes are required"));
    }
    let first = first.min(horizon / max_ratio);
    let span = (horizon / first).ln();
    let needed = (span / max_ratio.ln()).ceil() as usize + 1;
    let count = min_nodes.max(needed);
    let step = span / (count - 1) as f64;
    let mut times = vec![0.0];
    times.extend((0..count).map(|j| first * (step * j as f64).exp()));
    *times.last_mut().unwrap() = horizon;
    Ok(times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn graded_grid_respects_ratio_and_endpoints() {
        let t = graded_times(1.0, 16, 2.0, 1e-8).unwrap();
        assert_eq!(t[0], 0.0);
        assert_eq!(*t.last().unwrap(), 1.0);
        assert!((t[1] - 1e-8).abs() < 1e-20);
        assert!(t.windows(2).skip(1).all(|w| w[1] / w[0] <= 2.0 + 1e-12));
        assert!(t.len() >= 27);
        let dense = graded_times(1.0, 64, 2.0, 1e-8).unwrap();
        assert_eq!(dense.len(), 65);
    }

    #[test]
    fn trajectory_validation() {
        let g = make_grid(1, 16, 1.0).unwrap();
        let f = Field::zeros(&g);
        assert!(Trajectory::new(vec![0.0, 1.0, 3.0], vec![f.clone(); 3]).is_err());
        assert!(Trajectory::new(vec![0.1, 0.2], vec![f.clone(); 2]).is_err());
        assert!(Trajectory::new(vec![0.0, 0.2, 0.2], vec![f.clone(); 3]).is_err());
        let other = Field::zeros(&make_grid(1, 32, 1.0).unwrap());
        assert!(Trajectory::new(vec![0.0, 1.0], vec![f.clone(), other]).is_err());
        let ok = Trajectory::new(vec![0.0, 1.0, 2.0], vec![f; 3]).unwrap();
        assert!(ok.ensure_covers(2.0).is_ok());
        assert!(ok.ensure_covers(2.5).is_err());
        let s = ok.shifted(1.0).unwrap();
        assert_eq!(s.times(), &[0.0, 1.0]);
    }
}
