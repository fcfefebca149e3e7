//! Equidistant time grid `t_n = n T / N'`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::Config("time grid needs at least one interval".into()));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of intervals `N'`.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.horizon
        } else {
            self.horizon * n as f64 / self.n_steps as f64
        }
    }

    /// Grid index of time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let n = x.round();
        if n < 0.0 || n > self.n_steps as f64 || (x - n).abs() > 1e-9 * (1.0 + x.abs()) {
            return None;
        }
        Some(n as usize)
    }

    /// Indices `r N'/N` of `n_rebalance` equally spaced rebalancing dates, including 0
    /// and excluding maturity.
    pub fn rebalance_indices(&self, n_rebalance: usize) -> Result<Vec<usize>> {
        if n_rebalance == 0 || self.n_steps % n_rebalance != 0 {
            return Err(Error::Config(format!(
                "{n_rebalance} rebalancing dates do not divide the {}-step grid",
                self.n_steps
            )));
        }
        let stride = self.n_steps / n_rebalance;
        Ok((0..n_rebalance).map(|r| r * stride).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_and_lookup() {
        let g = TimeGrid::new(1.0, 20).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(20), 1.0);
        assert_eq!(g.index_of(0.25), Some(5));
        assert_eq!(g.index_of(0.26), None);
        assert_eq!(g.index_of(1.0), Some(20));
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn rebalance_dates_divide_grid() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        assert_eq!(g.rebalance_indices(5).unwrap(), vec![0, 20, 40, 60, 80]);
        assert!(g.rebalance_indices(3).is_err());
    }
}
