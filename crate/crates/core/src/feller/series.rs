use serde::{Deserialize, Serialize};

use super::field::SolutionField;
use super::scheme::Scheme;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::qfunction::QModel;
use crate::state::Truncation;

/// How [`minimal_solution`] sums the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Summation {
    /// Sum explicit terms until the stopping rule fires; fail otherwise.
    Terms,
    /// Sum explicit terms for diagnostics, then add the exact sum of the
    /// remaining discretised terms.
    #[default]
    Resolvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub eps: f64,
    pub max_terms: usize,
    pub summation: Summation,
    /// Truncation outflow above this value attaches a warning.
    pub outflow_cap: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            eps: 1e-10,
            max_terms: 200,
            summation: Summation::Resolvent,
            outflow_cap: 1e-3,
        }
    }
}

impl SeriesOptions {
    pub fn terms(eps: f64, max_terms: usize) -> Self {
        SeriesOptions { eps, max_terms, summation: Summation::Terms, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::Argument(format!("eps = {} must be positive", self.eps)));
        }
        Ok(())
    }
}

/// The `n`-jump term `P̄⁽ⁿ⁾(u, γ; t_i, {y})` in forward form, with the
/// per-panel departures that feed term `n + 1`.
#[derive(Debug, Clone)]
pub struct SeriesTerm {
    pub n: usize,
    size: usize,
    values: Vec<f64>,
    departures: Vec<f64>,
    outflow: Vec<f64>,
}

impl SeriesTerm {
    pub fn value(&self, i: usize, y: usize) -> f64 {
        self.values[i * self.size + y]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Maximum total mass over the grid.
    pub fn max_mass(&self) -> f64 {
        (0..self.outflow.len()).map(|i| self.mass(i)).fold(0.0, f64::max)
    }

    /// Cumulative outflow of this term up to node `i`.
    pub fn outflow(&self, i: usize) -> f64 {
        self.outflow[i]
    }

    fn departures(&self, panel: usize) -> &[f64] {
        &self.departures[panel * self.size..(panel + 1) * self.size]
    }
}

impl Scheme {
    pub(crate) fn initial_vector(&self, initial: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.truncation().size];
        for &(x, p) in initial {
            self.check_state(x)?;
            if !(p >= 0.0) {
                return Err(Error::Argument(format!("initial probability {p} is negative")));
            }
            v[x] += p;
        }
        let total: f64 = v.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::Argument(format!("initial law has mass {total} > 1")));
        }
        Ok(v)
    }

    /// Term 0: the mass that has not jumped yet.
    pub fn term0(&self, x: usize) -> Result<SeriesTerm> {
        let init = self.initial_vector(&[(x, 1.0)])?;
        Ok(self.term0_from(&init))
    }

    pub(crate) fn term0_from(&self, init: &[f64]) -> SeriesTerm {
        let k = self.truncation().size;
        let m = self.grid().panels();
        let mut values = vec![0.0; (m + 1) * k];
        let mut departures = vec![0.0; m * k];
        let mut outflow = vec![0.0; m + 1];
        values[..k].copy_from_slice(init);
        let zero = vec![0.0; k];
        for i in 0..m {
            let (done, rest) = values.split_at_mut((i + 1) * k);
            let out = self
                .panel(i)
                .explicit_step(&done[i * k..], &zero, &mut rest[..k], &mut departures[i * k..(i + 1) * k]);
            outflow[i + 1] = outflow[i] + out;
        }
        SeriesTerm { n: 0, size: k, values, departures, outflow }
    }

    /// Term `n` from term `n - 1`: the departures of the previous term are
    /// the arrivals of this one.
    pub fn next_term(&self, prev: &SeriesTerm) -> SeriesTerm {
        let k = self.truncation().size;
        let m = self.grid().panels();
        let mut values = vec![0.0; (m + 1) * k];
        let mut departures = vec![0.0; m * k];
        let mut outflow = vec![0.0; m + 1];
        let mut arrivals = vec![0.0; k];
        for i in 0..m {
            let panel = self.panel(i);
            panel.route_into(prev.departures(i), &mut arrivals);
            let (done, rest) = values.split_at_mut((i + 1) * k);
            let out = panel.explicit_step(&done[i * k..], &arrivals, &mut rest[..k], &mut departures[i * k..(i + 1) * k]);
            outflow[i + 1] = outflow[i] + out;
        }
        SeriesTerm { n: prev.n + 1, size: k, values, departures, outflow }
    }

    /// Sum of all discretised terms: returns values `[node][state]` and the
    /// cumulative outflow per node.
    pub(crate) fn resolvent(&self, init: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = self.truncation().size;
        let m = self.grid().panels();
        let mut values = vec![0.0; (m + 1) * k];
        let mut outflow = vec![0.0; m + 1];
        let mut departures = vec![0.0; k];
        values[..k].copy_from_slice(init);
        for i in 0..m {
            let (done, rest) = values.split_at_mut((i + 1) * k);
            let out = self.panel(i).resolvent_step(&done[i * k..], &mut rest[..k], &mut departures)?;
            outflow[i + 1] = outflow[i] + out;
        }
        Ok((values, outflow))
    }

    pub fn minimal_solution(&self, x: usize, opts: &SeriesOptions) -> Result<SolutionField> {
        self.minimal_solution_from(&[(x, 1.0)], opts)
    }

    /// The minimal solution started from a finite initial law.
    pub fn minimal_solution_from(&self, initial: &[(usize, f64)], opts: &SeriesOptions) -> Result<SolutionField> {
        opts.validate()?;
        let init = self.initial_vector(initial)?;
        let trunc = self.truncation();
        let labels = (0..trunc.size).map(|y| self.model().label(y)).collect();
        let mut field = SolutionField::empty(self.model().name(), self.grid(), trunc, initial.to_vec(), labels);
        let nodes = self.grid().times().len();

        let mut term = self.term0_from(&init);
        loop {
            for (v, t) in field.values.iter_mut().zip(&term.values) {
                *v += t;
            }
            for (o, t) in field.outflow.iter_mut().zip(&term.outflow) {
                *o += t;
            }
            field.term_masses.push(term.mass(nodes - 1));
            field.terms_used = term.n + 1;
            field.last_term_mass = term.max_mass();
            if field.last_term_mass < opts.eps || field.terms_used >= opts.max_terms {
                break;
            }
            term = self.next_term(&term);
        }

        match opts.summation {
            Summation::Terms => {
                if field.last_term_mass >= opts.eps {
                    field.truncation_outflow = field.outflow[nodes - 1];
                    return Err(Error::NonConvergence {
                        terms: field.terms_used,
                        last_term_mass: field.last_term_mass,
                        partial: Box::new(field),
                    });
                }
            }
            Summation::Resolvent => {
                let (values, outflow) = self.resolvent(&init)?;
                let mut tail: f64 = 0.0;
                for i in 0..nodes {
                    let partial = field.mass(i);
                    let total: f64 = values[i * trunc.size..(i + 1) * trunc.size].iter().sum();
                    tail = tail.max(total - partial);
                }
                field.values = values;
                field.outflow = outflow;
                field.tail_mass = tail.max(0.0);
            }
        }
        field.truncation_outflow = field.outflow[nodes - 1];
        finish(&mut field, opts);
        Ok(field)
    }
}

fn finish(field: &mut SolutionField, opts: &SeriesOptions) {
    let nodes = field.times.len();
    let worst = (0..nodes).map(|i| field.mass(i)).fold(0.0, f64::max);
    if worst > 1.0 + 1e-12 {
        field.warnings.push(format!("total mass {worst} exceeds 1"));
    }
    if field.truncation_outflow > opts.outflow_cap {
        field.warnings.push(format!(
            "truncation outflow {:.3e} exceeds the cap {:.1e}; enlarge the truncation",
            field.truncation_outflow, opts.outflow_cap
        ));
    }
}

fn scheme_from(model: &QModel, u: f64, grid: &TimeGrid, trunc: Truncation) -> Result<Scheme> {
    if grid.start() != u {
        return Err(Error::Argument(format!("grid starts at {} but u = {u}", grid.start())));
    }
    Scheme::new(model, grid, trunc)
}

/// Term 0, `P̄⁽⁰⁾(u,x;t,{y}) = I{y=x} exp(-∫_u^t q(x,θ)dθ)`.
pub fn term0(model: &QModel, u: f64, x: usize, grid: &TimeGrid, trunc: Truncation) -> Result<SeriesTerm> {
    scheme_from(model, u, grid, trunc)?.term0(x)
}

/// The minimal transition function `P̄(u,x;·,·)` on `grid`, summed from the
/// `n`-jump terms.
pub fn minimal_solution(
    model: &QModel,
    u: f64,
    x: usize,
    grid: &TimeGrid,
    trunc: Truncation,
    opts: &SeriesOptions,
) -> Result<SolutionField> {
    scheme_from(model, u, grid, trunc)?.minimal_solution(x, opts)
}
