//! Time grids for tabulated fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Panels used when a grid has a single target time.
pub const DEFAULT_SUBPANELS: usize = 256;

/// Strictly increasing times `t_0 = u < t_1 < ... < t_M`.
///
/// The start time is always node 0 so that fields carry their initial
/// condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid on `[u, t]` with step close to `h`; the last node is
    /// exactly `t`.
    pub fn uniform(u: f64, t: f64, h: f64) -> Result<Self> {
        if !(t > u) || !u.is_finite() || !t.is_finite() {
            return Err(Error::Argument(format!("empty time interval [{u}, {t}]")));
        }
        if !(h > 0.0) {
            return Err(Error::Argument(format!("time step {h} must be positive")));
        }
        let panels = ((t - u) / h).round().max(1.0);
        if panels > 1e8 {
            return Err(Error::Argument(format!("step {h} gives too many panels")));
        }
        Ok(Self::with_panels(u, t, panels as usize))
    }

    /// Uniform grid on `[u, t]` with `panels` panels.
    pub fn with_panels(u: f64, t: f64, panels: usize) -> Self {
        let panels = panels.max(1);
        let mut times: Vec<f64> = (0..=panels).map(|k| u + (t - u) * k as f64 / panels as f64).collect();
        times[panels] = t;
        TimeGrid { times }
    }

    /// Grid through the given target times, with `u` prepended. A single
    /// target is refined to [`DEFAULT_SUBPANELS`] panels.
    pub fn through(u: f64, targets: &[f64]) -> Result<Self> {
        match targets {
            [] => Err(Error::Argument("no target times".into())),
            [t] => {
                if !(*t > u) {
                    return Err(Error::Argument(format!("target time {t} must exceed the start {u}")));
                }
                Ok(Self::with_panels(u, *t, DEFAULT_SUBPANELS))
            }
            _ => {
                let mut times = Vec::with_capacity(targets.len() + 1);
                times.push(u);
                times.extend_from_slice(targets);
                Self::from_times(times)
            }
        }
    }

    /// Uses `times` verbatim; node 0 is the start time.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Argument("a grid needs at least two nodes".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("grid times must be finite and strictly increasing".into()));
        }
        Ok(TimeGrid { times })
    }

    /// Parses `a:b:h` into a uniform grid.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let [a, b, h] = parts.as_slice() else {
            return Err(Error::Argument(format!("grid spec `{spec}` is not of the form a:b:h")));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Argument(format!("`{s}` in grid spec is not a number")))
        };
        Self::uniform(num(a)?, num(b)?, num(h)?)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Number of panels `M`.
    pub fn panels(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    pub fn max_step(&self) -> f64 {
        (0..self.panels()).map(|i| self.step(i)).fold(0.0, f64::max)
    }

    /// The common step when the grid is uniform to rounding.
    pub fn uniform_step(&self) -> Option<f64> {
        let h = (self.end() - self.start()) / self.panels() as f64;
        let tol = 1e-9 * h.max(self.end().abs() * f64::EPSILON);
        (0..self.panels()).all(|i| (self.step(i) - h).abs() <= tol.max(1e-12 * h)).then_some(h)
    }

    /// Index of the node equal to `t` up to rounding.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let scale = self.end().abs().max(1.0);
        let tol = 1e-9 * scale.min(self.max_step().max(f64::MIN_POSITIVE) * 1e3);
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    /// The first `len` nodes.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        Self::from_times(self.times[..len].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_hits_endpoints() {
        let g = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
        assert_eq!(g.panels(), 1000);
        assert_eq!(g.end(), 1.0);
        assert_eq!(g.index_of(0.5), Some(500));
        assert_eq!(g.index_of(0.5004), None);
        assert!(g.uniform_step().is_some());
    }

    #[test]
    fn single_target_is_refined() {
        let g = TimeGrid::through(0.0, &[2.0]).unwrap();
        assert_eq!(g.panels(), DEFAULT_SUBPANELS);
        let g = TimeGrid::through(0.0, &[0.5, 2.0]).unwrap();
        assert_eq!(g.times(), &[0.0, 0.5, 2.0]);
        assert!(g.uniform_step().is_none());
        assert!(TimeGrid::through(1.0, &[0.5]).is_err());
    }

    #[test]
    fn parse_spec() {
        let g = TimeGrid::parse_spec("0:2:0.5").unwrap();
        assert_eq!(g.times(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(TimeGrid::parse_spec("0:2").is_err());
        assert!(TimeGrid::parse_spec("0:x:1").is_err());
        assert!(TimeGrid::parse_spec("1:0:0.1").is_err());
    }
}
