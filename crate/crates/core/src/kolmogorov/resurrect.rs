use crate::error::{Error, Result};
use crate::feller::{split_defect, SeriesOptions, SolutionField};
use crate::grid::TimeGrid;
use crate::qfunction::QModel;
use crate::state::Truncation;

/// Explosion-time density `-d/dt P̄(u,x;t,X)` by central differences,
/// smoothed over three nodes and clipped at zero.
fn explosion_density(field: &SolutionField, h: f64) -> Vec<f64> {
    let n = field.times.len();
    let mass: Vec<f64> = (0..n).map(|i| field.mass(i)).collect();
    let raw: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => -(mass[1] - mass[0]) / h,
            i if i == n - 1 => -(mass[i] - mass[i - 1]) / h,
            i => -(mass[i + 1] - mass[i - 1]) / (2.0 * h),
        })
        .collect();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let avg = raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            avg.max(0.0)
        })
        .collect()
}

/// A non-minimal solution: the process restarts at `revival` whenever it
/// explodes.
///
/// With `f` the explosion density of the minimal solution, the renewal
/// equation `R(τ) = P̄(0,r;τ) + ∫_0^τ f_r(v) R(τ - v) dv` is solved by
/// trapezoid convolution, then
/// `P(u,x;t) = P̄(u,x;t) + ∫_u^t f_x(w - u) R(t - w) dw`.
///
/// Needs a time-homogeneous model, a uniform grid, and a defect that
/// survives enlarging the truncation.
pub fn resurrected_solution(
    model: &QModel,
    revival: usize,
    u: f64,
    x: usize,
    grid: &TimeGrid,
    trunc: Truncation,
    opts: &SeriesOptions,
) -> Result<SolutionField> {
    if !model.is_time_homogeneous() {
        return Err(Error::Precondition("resurrection needs a time-homogeneous model".into()));
    }
    let h = grid
        .uniform_step()
        .ok_or_else(|| Error::Precondition("resurrection needs a uniform grid".into()))?;
    if !trunc.contains(revival) || !trunc.contains(x) {
        return Err(Error::Argument("start and revival states must lie inside the truncation".into()));
    }
    let split = split_defect(model, u, x, grid, trunc, opts)?;
    if !split.explosive {
        return Err(Error::Precondition(format!(
            "defect {:.3e} cannot be separated from truncation loss (defect {:.3e} on {} states)",
            split.defect_outer, split.defect_inner, split.inner.size
        )));
    }

    let from_x = crate::feller::minimal_solution(model, u, x, grid, trunc, opts)?;
    let from_r = if revival == x {
        from_x.clone()
    } else {
        crate::feller::minimal_solution(model, u, revival, grid, trunc, opts)?
    };
    let f_x = explosion_density(&from_x, h);
    let f_r = explosion_density(&from_r, h);

    let n = grid.times().len();
    let k = trunc.size;
    let mut renewal = vec![0.0; n * k];
    renewal[..k].copy_from_slice(from_r.row(0));
    let scale = 1.0 / (1.0 - 0.5 * h * f_r[0]);
    for i in 1..n {
        let mut acc = from_r.row(i).to_vec();
        for j in 1..i {
            let w = h * f_r[j];
            for y in 0..k {
                acc[y] += w * renewal[(i - j) * k + y];
            }
        }
        for y in 0..k {
            acc[y] += 0.5 * h * f_r[i] * renewal[y];
            renewal[i * k + y] = acc[y] * scale;
        }
    }

    let mut field = from_x.clone();
    for i in 1..n {
        let mut acc = from_x.row(i).to_vec();
        for j in 1..i {
            let w = h * f_x[j];
            for y in 0..k {
                acc[y] += w * renewal[(i - j) * k + y];
            }
        }
        for y in 0..k {
            acc[y] += 0.5 * h * (f_x[0] * renewal[i * k + y] + f_x[i] * renewal[y]);
        }
        field.row_mut(i).copy_from_slice(&acc);
    }
    for i in 0..n {
        field.outflow[i] = (1.0 - field.mass(i)).max(0.0);
    }
    field.truncation_outflow = field.outflow[n - 1];
    field.model = format!("{} (resurrected at {})", model.name(), model.label(revival));
    field.warnings.push("non-minimal solution: explosions restart the process".into());
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn regular_model_is_refused() {
        let grid = TimeGrid::uniform(0.0, 1.0, 1e-2).unwrap();
        let r = resurrected_solution(&models::oscillating(60), 0, 0.0, 0, &grid, Truncation::signed(10), &SeriesOptions::default());
        assert!(matches!(r, Err(Error::Precondition(_))), "{r:?}");
        let r = resurrected_solution(&models::modulated_poisson(1.0, 0.5, 1.0), 0, 0.0, 0, &grid, Truncation::new(30), &SeriesOptions::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn explosive_model_gains_mass() {
        let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
        let model = models::pure_birth(2.0, 2.0);
        let trunc = Truncation::new(64);
        let opts = SeriesOptions::default();
        let res = resurrected_solution(&model, 0, 0.0, 0, &grid, trunc, &opts).unwrap();
        let min = crate::feller::minimal_solution(&model, 0.0, 0, &grid, trunc, &opts).unwrap();
        let m = grid.panels();
        assert!(res.values.iter().zip(&min.values).all(|(a, b)| *a >= b - 1e-12));
        let gain = res.mass(m) - min.mass(m);
        let defect = 1.0 - min.mass(m);
        // Revivals repeat, so the process never leaves the state space.
        assert!((gain - defect).abs() < 1e-5, "gain {gain} defect {defect}");
        assert!((res.mass(m) - 1.0).abs() < 1e-5);
    }
}
