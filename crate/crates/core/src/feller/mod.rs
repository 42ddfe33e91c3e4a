//! Feller's minimal transition function as a series of `n`-jump terms.
//!
//! Both recursions are available: [`Scheme::next_term`] integrates over the
//! time of the last jump, [`Scheme::next_backward_term`] over the time of
//! the first one. [`minimal_solution`] sums the forward form.

mod backward;
mod field;
mod scheme;
mod series;
#[cfg(test)]
mod tests;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use backward::{BackwardTerm, StartFamily, Variant};
pub use field::SolutionField;
pub use scheme::Scheme;
pub use series::{minimal_solution, term0, SeriesOptions, SeriesTerm, Summation};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::qfunction::QModel;
use crate::state::Truncation;

impl Scheme {
    /// Minimal solutions from `(t_0, y)` for every truncated state `y`.
    pub fn start_fields(&self, opts: &SeriesOptions) -> Result<Vec<SolutionField>> {
        (0..self.truncation().size)
            .into_par_iter()
            .map(|y| self.minimal_solution(y, opts))
            .collect()
    }
}

/// Chapman–Kolmogorov residual
/// `max_y' |P(u,x;t,{y'}) - Σ_y P(s,y;t,{y'}) P(u,x;s,{y})|`.
///
/// `mid[y]` is the field started at `(s, y)` for each truncated state `y`.
pub fn ck_residual(field: &SolutionField, mid: &[SolutionField], t: f64) -> Result<f64> {
    let k = field.size();
    if mid.len() != k || mid.iter().any(|f| f.size() != k) {
        return Err(Error::Argument("mid fields must cover the truncation of the outer field".into()));
    }
    let s = mid[0].u;
    if mid.iter().any(|f| f.u != s) {
        return Err(Error::Argument("mid fields must share one start time".into()));
    }
    if !(field.u < s && s < t) {
        return Err(Error::Argument(format!("need u < s < t, got {} < {s} < {t}", field.u)));
    }
    let missing = |what: &str, time: f64| Error::Argument(format!("time {time} is not on the {what} grid"));
    let is = field.node(s).ok_or_else(|| missing("outer", s))?;
    let it = field.node(t).ok_or_else(|| missing("outer", t))?;
    let mid_nodes = mid
        .iter()
        .map(|f| f.node(t).ok_or_else(|| missing("mid", t)))
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for target in 0..k {
        let composed: f64 = (0..k).map(|y| mid[y].value(mid_nodes[y], target) * field.value(is, y)).sum();
        worst = worst.max((field.value(it, target) - composed).abs());
    }
    Ok(worst)
}

/// Mass missing from a field at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub time: f64,
    /// `1 - P(u,x;t,truncation)`.
    pub defect: f64,
    pub truncation_outflow: f64,
    /// Defect not accounted for by the outflow bookkeeping.
    pub unexplained: f64,
}

/// `1 - P(u,x;t,states)` together with the truncation outflow.
///
/// Inside a truncation the scheme conserves mass, so the defect and the
/// outflow agree; telling explosion apart from truncation loss needs a
/// second truncation, see [`split_defect`].
pub fn regularity_defect(field: &SolutionField, t: f64) -> Result<DefectReport> {
    let i = field
        .node(t)
        .ok_or_else(|| Error::Argument(format!("time {t} is not on the field grid")))?;
    let initial: f64 = field.initial.iter().map(|e| e.1).sum();
    let defect = (initial - field.mass(i)).clamp(0.0, 1.0);
    Ok(DefectReport {
        time: field.times[i],
        defect,
        truncation_outflow: field.outflow[i],
        unexplained: defect - field.outflow[i],
    })
}

/// Defects at the last grid time under two nested truncations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplosionSplit {
    pub time: f64,
    pub inner: Truncation,
    pub outer: Truncation,
    pub defect_inner: f64,
    pub defect_outer: f64,
    /// The defect is stable under enlarging the truncation.
    pub explosive: bool,
}

impl ExplosionSplit {
    /// Defect attributed to explosion (zero when not explosive).
    pub fn explosion_mass(&self) -> f64 {
        if self.explosive {
            self.defect_outer
        } else {
            0.0
        }
    }
}

/// Smallest defect counted as explosion mass.
pub const EXPLOSION_FLOOR: f64 = 1e-8;
/// Required ratio between the defect and its change across truncations.
pub const TRUNCATION_STABILITY: f64 = 10.0;

/// Solves on `outer` and on a truncation three quarters its size; the
/// defect is explosive when it barely moves between the two.
pub fn split_defect(
    model: &QModel,
    u: f64,
    x: usize,
    grid: &TimeGrid,
    outer: Truncation,
    opts: &SeriesOptions,
) -> Result<ExplosionSplit> {
    let inner = Truncation::new((outer.size * 3 / 4).max(x + 1));
    if inner.size >= outer.size {
        return Err(Error::Argument(format!(
            "truncation of {} states is too small to compare against a smaller one",
            outer.size
        )));
    }
    let t = grid.end();
    let (a, b) = rayon::join(
        || minimal_solution(model, u, x, grid, inner, opts),
        || minimal_solution(model, u, x, grid, outer, opts),
    );
    let defect_inner = regularity_defect(&a?, t)?.defect;
    let defect_outer = regularity_defect(&b?, t)?.defect;
    let explosive =
        defect_outer > EXPLOSION_FLOOR && defect_outer > TRUNCATION_STABILITY * (defect_inner - defect_outer).abs();
    Ok(ExplosionSplit { time: t, inner, outer, defect_inner, defect_outer, explosive })
}
