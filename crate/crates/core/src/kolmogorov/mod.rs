//! Residual checks for the backward and forward equations in differential
//! and integral form, the marginal forward solver, and a non-minimal
//! "resurrected" solution.

mod marginal;
mod residuals;
mod resurrect;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use marginal::{marginal_solve, InitialLaw};
pub use residuals::{
    backward_residual, forward_integral_residual, forward_residual, forward_rhs_terms, minimal_integral_residual,
    ForwardRhs,
};
pub use resurrect::resurrected_solution;

/// Default tolerance of integral-form residuals.
pub const INTEGRAL_TOL: f64 = 1e-5;
/// Default tolerance of differential-form residuals.
pub const DIFFERENTIAL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EquationId {
    #[serde(rename = "backward")]
    Backward,
    #[serde(rename = "forward")]
    Forward,
    #[serde(rename = "forward-integral")]
    ForwardIntegral,
    #[serde(rename = "int-FKE")]
    IntFke,
    #[serde(rename = "marginal")]
    Marginal,
    #[serde(rename = "chapman-kolmogorov")]
    ChapmanKolmogorov,
}

impl fmt::Display for EquationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EquationId::Backward => "backward",
            EquationId::Forward => "forward",
            EquationId::ForwardIntegral => "forward-integral",
            EquationId::IntFke => "int-FKE",
            EquationId::Marginal => "marginal",
            EquationId::ChapmanKolmogorov => "chapman-kolmogorov",
        })
    }
}

/// Where the largest residual was found: a grid time and a state-set label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgMax {
    pub time: f64,
    pub set: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub equation_id: EquationId,
    pub max_residual: f64,
    pub argmax_point: ArgMax,
    pub grid_step: f64,
    pub tolerance_used: f64,
    /// Residual of the boundary condition, for the differential forms.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_residual: Option<f64>,
}

impl ResidualReport {
    pub(crate) fn new(equation_id: EquationId, grid_step: f64, tolerance: f64) -> Self {
        ResidualReport {
            equation_id,
            max_residual: 0.0,
            argmax_point: ArgMax { time: f64::NAN, set: String::new() },
            grid_step,
            tolerance_used: tolerance,
            boundary_residual: None,
        }
    }

    pub(crate) fn record(&mut self, residual: f64, time: f64, set: &str) {
        if residual > self.max_residual || self.argmax_point.time.is_nan() || residual.is_nan() {
            self.max_residual = residual;
            self.argmax_point = ArgMax { time, set: set.to_string() };
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance_used = tolerance;
        self
    }

    /// Residual and boundary residual both within tolerance.
    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance_used && self.boundary_residual.is_none_or(|b| b <= self.tolerance_used)
    }
}

/// Derivative at interior node `i` of a function sampled on a possibly
/// non-uniform grid (second order).
pub(crate) fn central_difference(t: &[f64], f: &[f64], i: usize) -> f64 {
    let h1 = t[i] - t[i - 1];
    let h2 = t[i + 1] - t[i];
    (-h2 / (h1 * (h1 + h2))) * f[i - 1] + ((h2 - h1) / (h1 * h2)) * f[i] + (h1 / (h2 * (h1 + h2))) * f[i + 1]
}
