use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::TimeGrid;
use crate::state::{StateSet, Truncation};

/// A tabulated transition function `P(u, γ; t_i, {y})` for grid times `t_i`
/// and states `y` of a truncation.
///
/// `times[0]` is the start time `u`, so row 0 is the initial law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionField {
    pub model: String,
    pub u: f64,
    /// Initial law as `(state, probability)` pairs; a single pair for a
    /// start state.
    pub initial: Vec<(usize, f64)>,
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// Row-major `[time][state]`.
    pub values: Vec<f64>,
    pub terms_used: usize,
    /// Maximum over the grid of the total mass of the last explicit term.
    pub last_term_mass: f64,
    /// Mass of all terms beyond `terms_used`, when the tail was summed.
    pub tail_mass: f64,
    /// Total mass at the last grid time of each explicit term.
    pub term_masses: Vec<f64>,
    /// Cumulative mass routed outside the truncation, per grid time.
    pub outflow: Vec<f64>,
    pub truncation_outflow: f64,
    pub warnings: Vec<String>,
}

impl SolutionField {
    pub(crate) fn empty(model: &str, grid: &TimeGrid, trunc: Truncation, initial: Vec<(usize, f64)>, labels: Vec<String>) -> Self {
        SolutionField {
            model: model.to_string(),
            u: grid.start(),
            initial,
            times: grid.times().to_vec(),
            labels,
            values: vec![0.0; grid.times().len() * trunc.size],
            terms_used: 0,
            last_term_mass: 0.0,
            tail_mass: 0.0,
            term_masses: Vec::new(),
            outflow: vec![0.0; grid.times().len()],
            truncation_outflow: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn truncation(&self) -> Truncation {
        Truncation::new(self.size())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::from_times(self.times.clone()).expect("field grids are valid")
    }

    /// The start state when the initial law is a point mass.
    pub fn start_state(&self) -> Option<usize> {
        match self.initial.as_slice() {
            [(x, p)] if *p == 1.0 => Some(*x),
            _ => None,
        }
    }

    pub fn value(&self, i: usize, y: usize) -> f64 {
        self.values[i * self.size() + y]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.size();
        &self.values[i * k..(i + 1) * k]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let k = self.size();
        &mut self.values[i * k..(i + 1) * k]
    }

    /// Total tabulated mass at node `i`.
    pub fn mass(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// `P(u, γ; t_i, B)` over the part of `B` inside the truncation.
    pub fn mass_on(&self, i: usize, set: &StateSet) -> f64 {
        let row = self.row(i);
        set.iter().filter(|&y| y < row.len()).map(|y| row[y]).sum()
    }

    /// `γ(B)`.
    pub fn initial_mass_on(&self, set: &StateSet) -> f64 {
        self.initial.iter().filter(|(x, _)| set.contains(*x)).map(|e| e.1).sum()
    }

    /// Grid index of time `t`.
    pub fn node(&self, t: f64) -> Option<usize> {
        self.grid().index_of(t)
    }

    /// Writes `t,state,value` rows for the given nodes (all nodes when
    /// `nodes` is `None`).
    pub fn write_csv<W: Write>(&self, out: W, nodes: Option<&[usize]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "state", "value"])?;
        let all: Vec<usize> = (0..self.times.len()).collect();
        for &i in nodes.unwrap_or(&all) {
            for (y, label) in self.labels.iter().enumerate() {
                w.write_record([self.times[i].to_string(), label.clone(), self.value(i, y).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// JSON document with the run metadata and a `[time][state]` table.
    pub fn to_json(&self, nodes: Option<&[usize]>) -> Result<String> {
        let all: Vec<usize> = (0..self.times.len()).collect();
        let nodes = nodes.unwrap_or(&all);
        let view = FieldJson {
            model: &self.model,
            u: self.u,
            initial: &self.initial,
            terms_used: self.terms_used,
            last_term_mass: self.last_term_mass,
            tail_mass: self.tail_mass,
            truncation_outflow: self.truncation_outflow,
            warnings: &self.warnings,
            states: &self.labels,
            times: nodes.iter().map(|&i| self.times[i]).collect(),
            values: nodes.iter().map(|&i| self.row(i).to_vec()).collect(),
            outflow: nodes.iter().map(|&i| self.outflow[i]).collect(),
        };
        Ok(serde_json::to_string_pretty(&view)?)
    }
}

#[derive(Serialize)]
struct FieldJson<'a> {
    model: &'a str,
    u: f64,
    initial: &'a [(usize, f64)],
    terms_used: usize,
    last_term_mass: f64,
    tail_mass: f64,
    truncation_outflow: f64,
    warnings: &'a [String],
    states: &'a [String],
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    outflow: Vec<f64>,
}
