use serde::{Deserialize, Serialize};

use super::{central_difference, EquationId, ResidualReport, DIFFERENTIAL_TOL, INTEGRAL_TOL};
use crate::error::{Error, Result};
use crate::feller::{SolutionField, StartFamily};
use crate::qfunction::{detect_qs_bounded, QModel};
use crate::quadrature::{phi1, psi};
use crate::state::StateSet;

/// Backward equation `∂_u P(u,x;t,B) = q(x,u)P(u,x;t,B) - Σ_y q(x,u,{y})P(u,y;t,B)`
/// at the interior start times of `family`, for start states in `probe`.
///
/// The boundary residual extrapolates the family linearly to `u = t` and
/// compares it with `I{x ∈ B}`.
pub fn backward_residual(model: &QModel, family: &StartFamily, probe: &StateSet) -> Result<ResidualReport> {
    let t = &family.times;
    if t.len() < 3 {
        return Err(Error::Argument("backward residual needs at least three start times".into()));
    }
    let size = family.size();
    if probe.iter().any(|x| x >= size) {
        return Err(Error::Argument("probe states must lie inside the truncation".into()));
    }
    let m = t.len() - 1;
    let step = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut report = ResidualReport::new(EquationId::Backward, step, DIFFERENTIAL_TOL);
    let label = family.set.label();
    for x in probe.iter() {
        let column: Vec<f64> = (0..=m).map(|k| family.value(k, x)).collect();
        for k in 1..m {
            let u = t[k];
            let lhs = central_difference(t, &column, k);
            let jumps: f64 = model
                .kernel(x, u)
                .iter()
                .filter(|&&(y, _)| y != x && y < size)
                .map(|&(y, r)| r * family.value(k, y))
                .sum();
            let rhs = model.rate(x, u) * column[k] - jumps;
            report.record((lhs - rhs).abs(), u, &format!("x={x}, B={label}"));
        }
    }
    let boundary = probe
        .iter()
        .map(|x| {
            let extrapolated = 2.0 * family.value(m - 1, x) - family.value(m - 2, x);
            let target = if family.set.contains(x) { 1.0 } else { 0.0 };
            (extrapolated - target).abs()
        })
        .fold(0.0, f64::max);
    report.boundary_residual = Some(boundary);
    Ok(report)
}

/// The two sums on the right side of the forward equation at node `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardRhs {
    /// `∫_B q(y,t) P(u,x;t,dy)`.
    pub loss: f64,
    /// `Σ_y q(y,t,B∖{y}) P(u,x;t,{y})` over the truncation.
    pub gain: f64,
}

impl ForwardRhs {
    pub fn value(&self) -> f64 {
        self.gain - self.loss
    }
}

pub fn forward_rhs_terms(model: &QModel, field: &SolutionField, set: &StateSet, i: usize) -> ForwardRhs {
    let t = field.times[i];
    let row = field.row(i);
    let loss = set.iter().filter(|&y| y < row.len()).map(|y| model.rate(y, t) * row[y]).sum();
    let gain = row
        .iter()
        .enumerate()
        .filter(|(_, &p)| p != 0.0)
        .map(|(y, &p)| model.kernel_to_set(y, t, set) * p)
        .sum();
    ForwardRhs { loss, gain }
}

fn require_bounded(model: &QModel, field: &SolutionField, set: &StateSet, s: f64, bound: f64) -> Result<()> {
    if field.times.last().is_some_and(|&end| end > s) {
        return Err(Error::Argument(format!("field grid extends beyond s = {s}")));
    }
    let b = detect_qs_bounded(model, s, bound, set);
    if let Some((state, time, rate)) = b.witness {
        return Err(Error::NotBounded { state, time, rate, bound });
    }
    Ok(())
}

/// Forward equation `∂_t P(u,x;t,B) = -∫_B q P + Σ_y q(y,t,B∖{y}) P` at the
/// interior grid times, for a (q,s)-bounded set `B`.
pub fn forward_residual(model: &QModel, field: &SolutionField, set: &StateSet, s: f64, bound: f64) -> Result<ResidualReport> {
    require_bounded(model, field, set, s, bound)?;
    let t = &field.times;
    if t.len() < 3 {
        return Err(Error::Argument("forward residual needs at least three grid times".into()));
    }
    let mass: Vec<f64> = (0..t.len()).map(|i| field.mass_on(i, set)).collect();
    let mut report = ResidualReport::new(EquationId::Forward, field.grid().max_step(), DIFFERENTIAL_TOL);
    let label = set.label();
    for i in 1..t.len() - 1 {
        let lhs = central_difference(t, &mass, i);
        let rhs = forward_rhs_terms(model, field, set, i).value();
        report.record((lhs - rhs).abs(), t[i], &label);
    }
    report.boundary_residual = Some((mass[0] - field.initial_mass_on(set)).abs());
    Ok(report)
}

/// Integral form `P(u,x;t,B) = I{x∈B} - ∫_u^t ∫_B q P dw + ∫_u^t Σ_y q(y,w,B∖{y}) P dw`
/// with trapezoid quadrature in `w`.
pub fn forward_integral_residual(
    model: &QModel,
    field: &SolutionField,
    set: &StateSet,
    s: f64,
    bound: f64,
) -> Result<ResidualReport> {
    require_bounded(model, field, set, s, bound)?;
    let t = &field.times;
    let mut report = ResidualReport::new(EquationId::ForwardIntegral, field.grid().max_step(), INTEGRAL_TOL);
    let label = set.label();
    let start = field.initial_mass_on(set);
    let mut acc = 0.0;
    let mut prev = forward_rhs_terms(model, field, set, 0).value();
    report.record((field.mass_on(0, set) - start).abs(), t[0], &label);
    for i in 1..t.len() {
        let cur = forward_rhs_terms(model, field, set, i).value();
        acc += 0.5 * (t[i] - t[i - 1]) * (prev + cur);
        prev = cur;
        report.record((field.mass_on(i, set) - start - acc).abs(), t[i], &label);
    }
    Ok(report)
}

/// Characterisation of the minimal solution:
/// `P(u,x;t,B) = I{x∈B} e^{-Λ(x;u,t)} + ∫_u^t Σ_z Σ_{y∈B} e^{-Λ(y;w,t)} q(z,w,{y}∖{z}) P(u,x;w,{z}) dw`.
///
/// The `w`-integral uses a product trapezoid rule: the survival factor is
/// integrated exactly on each panel against the linear interpolant of the
/// inflow.
pub fn minimal_integral_residual(model: &QModel, field: &SolutionField, set: &StateSet) -> Result<ResidualReport> {
    let t = &field.times;
    let size = field.size();
    let members: Vec<usize> = set.iter().filter(|&y| y < size).collect();
    let m = t.len() - 1;

    // Cumulative integrated rates from u for the members of B and the
    // support of the initial law.
    let cumulative = |y: usize| -> Result<Vec<f64>> {
        let mut c = vec![0.0; m + 1];
        for j in 0..m {
            c[j + 1] = c[j] + model.integrated_rate(y, t[j], t[j + 1])?;
        }
        Ok(c)
    };
    let lam: Vec<Vec<f64>> = members.iter().map(|&y| cumulative(y)).collect::<Result<_>>()?;

    // inflow[j][b] = Σ_z q(z, t_j, {y_b}) P(u,x;t_j,{z}).
    let mut inflow = vec![vec![0.0; members.len()]; m + 1];
    let mut buf = Vec::new();
    for (j, row) in inflow.iter_mut().enumerate() {
        let values = field.row(j);
        for (z, &p) in values.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            buf.clear();
            model.kernel_into(z, t[j], &mut buf);
            for &(y, r) in &buf {
                if y != z {
                    if let Ok(b) = members.binary_search(&y) {
                        row[b] += r * p;
                    }
                }
            }
        }
    }

    let mut report = ResidualReport::new(EquationId::IntFke, field.grid().max_step(), INTEGRAL_TOL);
    let label = set.label();
    for i in 0..=m {
        let mut rhs = 0.0;
        for &(x, p) in &field.initial {
            if set.contains(x) {
                let lx = match members.binary_search(&x) {
                    Ok(b) => lam[b][i],
                    Err(_) => model.integrated_rate(x, t[0], t[i])?,
                };
                rhs += p * (-lx).exp();
            }
        }
        for (b, l) in lam.iter().enumerate() {
            for j in 0..i {
                let h = t[j + 1] - t[j];
                let delta = l[j + 1] - l[j];
                let survive = (-(l[i] - l[j + 1])).exp();
                let (p1, p2) = (phi1(delta), psi(delta));
                rhs += survive * h * (inflow[j + 1][b] * (p1 - p2) + inflow[j][b] * p2);
            }
        }
        report.record((field.mass_on(i, set) - rhs).abs(), t[i], &label);
    }
    Ok(report)
}
