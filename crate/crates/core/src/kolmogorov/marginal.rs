use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feller::SolutionField;
use crate::grid::TimeGrid;
use crate::qfunction::QModel;
use crate::state::Truncation;

/// Initial law of the marginal solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLaw {
    Point(usize),
    /// Finitely supported law as `(state, probability)` pairs.
    Finite(Vec<(usize, f64)>),
}

impl InitialLaw {
    fn pairs(&self) -> Vec<(usize, f64)> {
        match self {
            InitialLaw::Point(x) => vec![(*x, 1.0)],
            InitialLaw::Finite(v) => v.clone(),
        }
    }
}

/// Largest `q·h` of an explicit substep.
const STABILITY: f64 = 0.5;
const NEGATIVE_SLACK: f64 = 1e-12;

/// Rates of one time slice restricted to a truncation.
struct Generator {
    rate: Vec<f64>,
    routes: Vec<Vec<(usize, f64)>>,
    leak: Vec<f64>,
}

impl Generator {
    fn at(model: &QModel, t: f64, size: usize) -> Self {
        let mut rate = Vec::with_capacity(size);
        let mut routes = Vec::with_capacity(size);
        let mut leak = Vec::with_capacity(size);
        for z in 0..size {
            let q = model.rate(z, t);
            let row: Vec<(usize, f64)> = model.kernel(z, t).into_iter().filter(|&(y, r)| y != z && y < size && r > 0.0).collect();
            let inside: f64 = row.iter().map(|e| e.1).sum();
            rate.push(q);
            leak.push((q - inside).max(0.0));
            routes.push(row);
        }
        Generator { rate, routes, leak }
    }

    /// Time derivative of the marginal and the outflow rate.
    fn apply(&self, p: &[f64], dp: &mut [f64]) -> f64 {
        let mut out = 0.0;
        for (z, d) in dp.iter_mut().enumerate() {
            *d = -self.rate[z] * p[z];
        }
        for (z, &pz) in p.iter().enumerate() {
            if pz != 0.0 {
                for &(y, r) in &self.routes[z] {
                    dp[y] += r * pz;
                }
                out += self.leak[z] * pz;
            }
        }
        out
    }

    fn max_rate(&self) -> f64 {
        self.rate.iter().copied().fold(0.0, f64::max)
    }
}

/// Evolves the marginal law `P(t, ·)` of the forward equation from `law`
/// at the grid start, with explicit trapezoid (Heun) steps.
///
/// Each panel is split into substeps with `q·h <= 0.5` for the largest rate
/// in the truncation.
pub fn marginal_solve(model: &QModel, law: &InitialLaw, grid: &TimeGrid, trunc: Truncation) -> Result<SolutionField> {
    for &t in grid.times() {
        model.check_time(t)?;
    }
    let size = trunc.size;
    let initial = law.pairs();
    let mut p = vec![0.0; size];
    for &(x, w) in &initial {
        if x >= size {
            return Err(Error::Argument(format!("initial state {x} lies outside the truncation")));
        }
        if !(w >= 0.0) {
            return Err(Error::Argument(format!("initial probability {w} is negative")));
        }
        p[x] += w;
    }
    let labels = (0..size).map(|y| model.label(y)).collect();
    let mut field = SolutionField::empty(model.name(), grid, trunc, initial, labels);
    field.values[..size].copy_from_slice(&p);

    let homogeneous = model.is_time_homogeneous().then(|| Generator::at(model, grid.start(), size));
    let times = grid.times();
    let (mut k1, mut k2, mut trial) = (vec![0.0; size], vec![0.0; size], vec![0.0; size]);
    let mut outflow = 0.0;
    for i in 0..grid.panels() {
        let (a, b) = (times[i], times[i + 1]);
        let max_rate = match &homogeneous {
            Some(g) => g.max_rate(),
            None => [a, 0.5 * (a + b), b]
                .iter()
                .map(|&t| Generator::at(model, t, size).max_rate())
                .fold(0.0, f64::max),
        };
        let substeps = ((b - a) * max_rate / STABILITY).ceil().max(1.0) as usize;
        let dt = (b - a) / substeps as f64;
        for s in 0..substeps {
            let t = a + dt * s as f64;
            let t_next = if s + 1 == substeps { b } else { t + dt };
            let (g1, g2);
            let (gen1, gen2) = match &homogeneous {
                Some(g) => (g, g),
                None => {
                    g1 = Generator::at(model, t, size);
                    g2 = Generator::at(model, t_next, size);
                    (&g1, &g2)
                }
            };
            let o1 = gen1.apply(&p, &mut k1);
            for y in 0..size {
                trial[y] = p[y] + dt * k1[y];
            }
            let o2 = gen2.apply(&trial, &mut k2);
            for y in 0..size {
                p[y] += 0.5 * dt * (k1[y] + k2[y]);
            }
            outflow += 0.5 * dt * (o1 + o2);
            if let Some(v) = p.iter().copied().find(|&v| v < -NEGATIVE_SLACK) {
                return Err(Error::Instability { time: t_next, value: v });
            }
        }
        field.row_mut(i + 1).copy_from_slice(&p);
        field.outflow[i + 1] = outflow;
    }
    field.truncation_outflow = outflow;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feller::{minimal_solution, SeriesOptions};
    use crate::models;
    use crate::state::signed_to_index;

    #[test]
    fn zero_model_keeps_point_mass() {
        let grid = TimeGrid::uniform(0.0, 3.0, 0.5).unwrap();
        let f = marginal_solve(&models::zero(), &InitialLaw::Point(2), &grid, Truncation::new(4)).unwrap();
        for i in 0..=grid.panels() {
            assert_eq!(f.row(i), &[0.0, 0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn poisson_marginal() {
        let grid = TimeGrid::uniform(0.0, 2.0, 1e-3).unwrap();
        let f = marginal_solve(&models::poisson(1.0), &InitialLaw::Point(0), &grid, Truncation::new(40)).unwrap();
        let mut fact = 1.0;
        for k in 0..=10 {
            if k > 0 {
                fact *= k as f64;
            }
            let exact = (-2.0f64).exp() * 2f64.powi(k) / fact;
            assert!((f.value(grid.panels(), k as usize) - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn oscillating_marginal_matches_closed_form() {
        let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
        let f = marginal_solve(&models::oscillating(60), &InitialLaw::Point(0), &grid, Truncation::signed(20)).unwrap();
        let m = grid.panels();
        assert!((f.value(m, 0) - (-1.0f64).exp()).abs() < 1e-5);
        for j in 1..=5i64 {
            let exact = (1.0 - (-1.0f64).exp()) / 2f64.powi(j as i32 + 1);
            assert!((f.value(m, signed_to_index(j)) - exact).abs() < 1e-5);
            assert!((f.value(m, signed_to_index(-j)) - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn mixed_law_matches_series() {
        let model = models::modulated_poisson(1.0, 0.5, 3.0);
        let grid = TimeGrid::uniform(0.0, 1.0, 1e-3).unwrap();
        let law = InitialLaw::Finite(vec![(0, 0.25), (2, 0.75)]);
        let f = marginal_solve(&model, &law, &grid, Truncation::new(30)).unwrap();
        let a = minimal_solution(&model, 0.0, 0, &grid, Truncation::new(30), &SeriesOptions::default()).unwrap();
        let b = minimal_solution(&model, 0.0, 2, &grid, Truncation::new(30), &SeriesOptions::default()).unwrap();
        let m = grid.panels();
        for y in 0..10 {
            let mix = 0.25 * a.value(m, y) + 0.75 * b.value(m, y);
            assert!((f.value(m, y) - mix).abs() < 1e-6, "y={y}");
        }
    }
}
