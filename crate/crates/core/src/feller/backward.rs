//! The backward-form recursion: start times vary, the target time is fixed.
//!
//! On a panel `[t_k, t_{k+1}]` the first-jump density `e^{-Λ} q π` is
//! integrated exactly against the linear interpolant of the continuation.

use serde::{Deserialize, Serialize};

use super::scheme::Scheme;
use crate::error::{Error, Result};
use crate::state::StateSet;

/// Which recursion builds the `n`-jump terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Last jump first: integrates over the time of the final jump.
    ForwardForm,
    /// First jump first: integrates over the time of the first jump.
    BackwardForm,
}

/// `P̄⁽ⁿ⁾(t_k, x; t_target, {y_c})` for start nodes `k <= target`, all start
/// states `x` and the target states `y_c`.
#[derive(Debug, Clone)]
pub struct BackwardTerm {
    pub n: usize,
    pub target: usize,
    pub targets: StateSet,
    size: usize,
    values: Vec<f64>,
}

impl BackwardTerm {
    fn idx(&self, k: usize, x: usize, c: usize) -> usize {
        (k * self.size + x) * self.targets.len() + c
    }

    /// Value for start node `k`, start state `x` and the `c`-th target state.
    pub fn value(&self, k: usize, x: usize, c: usize) -> f64 {
        self.values[self.idx(k, x, c)]
    }

    /// Row over the target states for start `(t_k, x)`.
    pub fn row(&self, k: usize, x: usize) -> &[f64] {
        let i = self.idx(k, x, 0);
        &self.values[i..i + self.targets.len()]
    }
}

impl Scheme {
    fn check_target(&self, target: usize) -> Result<()> {
        if target == 0 || target > self.grid().panels() {
            return Err(Error::Argument(format!("target node {target} is not a positive grid index")));
        }
        Ok(())
    }

    /// Term 0 in backward form: `I{x=y} e^{-Λ(x; t_k, t)}`.
    pub fn backward_term0(&self, target: usize, targets: &StateSet) -> Result<BackwardTerm> {
        self.check_target(target)?;
        for y in targets.iter() {
            self.check_state(y)?;
        }
        let size = self.truncation().size;
        let mut term = BackwardTerm {
            n: 0,
            target,
            targets: targets.clone(),
            size,
            values: vec![0.0; (target + 1) * size * targets.len()],
        };
        for (c, y) in targets.iter().enumerate() {
            let i = term.idx(target, y, c);
            term.values[i] = 1.0;
            for k in (0..target).rev() {
                let later = term.value(k + 1, y, c);
                let i = term.idx(k, y, c);
                term.values[i] = self.panel(k).decay[y] * later;
            }
        }
        Ok(term)
    }

    /// Term `n` from term `n - 1` in backward form.
    pub fn next_backward_term(&self, prev: &BackwardTerm) -> BackwardTerm {
        let size = prev.size;
        let cols = prev.targets.len();
        let mut term = BackwardTerm {
            n: prev.n + 1,
            target: prev.target,
            targets: prev.targets.clone(),
            size,
            values: vec![0.0; prev.values.len()],
        };
        for k in (0..prev.target).rev() {
            let panel = self.panel(k);
            for x in 0..size {
                let (alpha, beta) = panel.backward_weights(x);
                for c in 0..cols {
                    let jump = panel.gather(x, |y| alpha * prev.value(k, y, c) + beta * prev.value(k + 1, y, c));
                    let v = panel.decay[x] * term.value(k + 1, x, c) + jump;
                    let i = term.idx(k, x, c);
                    term.values[i] = v;
                }
            }
        }
        term
    }

    /// `P̄⁽ⁿ⁾(u, x; t_node, {y})` over all truncated `y`, for `n = 0..=n_max`.
    pub fn terms_at(&self, x: usize, n_max: usize, node: usize, variant: Variant) -> Result<Vec<Vec<f64>>> {
        self.check_state(x)?;
        self.check_target(node)?;
        let mut out = Vec::with_capacity(n_max + 1);
        match variant {
            Variant::ForwardForm => {
                let mut term = self.term0(x)?;
                out.push(term.row(node).to_vec());
                for _ in 0..n_max {
                    term = self.next_term(&term);
                    out.push(term.row(node).to_vec());
                }
            }
            Variant::BackwardForm => {
                let all = self.truncation().all();
                let mut term = self.backward_term0(node, &all)?;
                out.push(term.row(0, x).to_vec());
                for _ in 0..n_max {
                    term = self.next_backward_term(&term);
                    out.push(term.row(0, x).to_vec());
                }
            }
        }
        Ok(out)
    }

    /// `P(t_k, x; t, B)` for every start node and start state, summed over
    /// all terms in backward form.
    pub fn start_family(&self, set: &StateSet) -> Result<StartFamily> {
        let size = self.truncation().size;
        let m = self.grid().panels();
        let mut values = vec![0.0; (m + 1) * size];
        for y in set.iter().filter(|&y| y < size) {
            values[m * size + y] = 1.0;
        }
        for k in (0..m).rev() {
            let (head, tail) = values.split_at_mut((k + 1) * size);
            self.panel(k).backward_resolvent_step(&tail[..size], &mut head[k * size..])?;
        }
        Ok(StartFamily {
            model: self.model().name().to_string(),
            times: self.grid().times().to_vec(),
            set: set.clone(),
            size,
            values,
        })
    }
}

/// `P(t_k, x; t, B)` for the nodes `t_k` of a grid ending at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartFamily {
    pub model: String,
    pub times: Vec<f64>,
    pub set: StateSet,
    size: usize,
    values: Vec<f64>,
}

impl StartFamily {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn target_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn value(&self, k: usize, x: usize) -> f64 {
        self.values[k * self.size + x]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.size..(k + 1) * self.size]
    }
}
