//! Panel coefficients of the exponential departure scheme.
//!
//! On a panel of integrated rate `Δ(y)` a state keeps `e^{-Δ}` of its mass;
//! mass arriving uniformly during the panel keeps the fraction `φ1(Δ)`.
//! Departures are routed by the panel-averaged jump law `π(z, ·)`; whatever
//! `π` sends outside the truncation is booked as outflow.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::qfunction::QModel;
use crate::quadrature::{phi1, psi};
use crate::state::Truncation;

type Lu = LU<f64, Dyn, Dyn>;

/// Coefficients of one panel `[t_i, t_{i+1}]`.
#[derive(Debug, Clone)]
pub(crate) struct PanelCoef {
    pub delta: Vec<f64>,
    pub decay: Vec<f64>,
    pub kappa: Vec<f64>,
    /// `routes[z]` lists `(y, π(z,y))` for `y` inside the truncation.
    pub routes: Vec<Vec<(usize, f64)>>,
    /// Share of departures from `z` that leaves the truncation.
    pub out_share: Vec<f64>,
    forward_lu: OnceLock<Lu>,
    backward_lu: OnceLock<Lu>,
}

impl PanelCoef {
    fn build(model: &QModel, a: f64, b: f64, size: usize) -> Result<Self> {
        let m = 0.5 * (a + b);
        let mut delta = Vec::with_capacity(size);
        let mut routes = Vec::with_capacity(size);
        let mut out_share = Vec::with_capacity(size);
        let mut buf = Vec::new();
        for z in 0..size {
            delta.push(model.integrated_rate(z, a, b)?);
            let qbar = (model.rate(z, a) + 4.0 * model.rate(z, m) + model.rate(z, b)) / 6.0;
            buf.clear();
            for (t, w) in [(a, 1.0), (m, 4.0), (b, 1.0)] {
                let start = buf.len();
                model.kernel_into(z, t, &mut buf);
                for e in &mut buf[start..] {
                    e.1 *= w / 6.0;
                }
            }
            buf.sort_unstable_by_key(|e| e.0);
            let mut row: Vec<(usize, f64)> = Vec::new();
            for &(y, w) in &buf {
                if y == z || y >= size || w <= 0.0 {
                    continue;
                }
                match row.last_mut() {
                    Some(last) if last.0 == y => last.1 += w,
                    _ => row.push((y, w)),
                }
            }
            if qbar > 0.0 {
                let mut inside = 0.0;
                for e in &mut row {
                    e.1 /= qbar;
                    inside += e.1;
                }
                out_share.push((1.0 - inside).max(0.0));
            } else {
                row.clear();
                out_share.push(1.0);
            }
            routes.push(row);
        }
        let decay = delta.iter().map(|d| (-d).exp()).collect();
        let kappa = delta.iter().map(|&d| phi1(d)).collect();
        Ok(PanelCoef {
            delta,
            decay,
            kappa,
            routes,
            out_share,
            forward_lu: OnceLock::new(),
            backward_lu: OnceLock::new(),
        })
    }

    fn size(&self) -> usize {
        self.delta.len()
    }

    /// Weights of the backward product rule on a panel: the continuation at
    /// the near node gets `alpha`, at the far node `beta`.
    pub fn backward_weights(&self, x: usize) -> (f64, f64) {
        let d = self.delta[x];
        let beta = d * psi(d);
        ((1.0 - self.decay[x] - beta).max(0.0), beta)
    }

    /// LU of `I - Πᵀ diag(1 - κ)`.
    fn forward_lu(&self) -> &Lu {
        self.forward_lu.get_or_init(|| {
            let k = self.size();
            let mut a = DMatrix::<f64>::identity(k, k);
            for z in 0..k {
                let w = 1.0 - self.kappa[z];
                for &(y, p) in &self.routes[z] {
                    a[(y, z)] -= p * w;
                }
            }
            a.lu()
        })
    }

    /// LU of `I - diag(alpha) Π`.
    fn backward_lu(&self) -> &Lu {
        self.backward_lu.get_or_init(|| {
            let k = self.size();
            let mut a = DMatrix::<f64>::identity(k, k);
            for x in 0..k {
                let (alpha, _) = self.backward_weights(x);
                for &(y, p) in &self.routes[x] {
                    a[(x, y)] -= alpha * p;
                }
            }
            a.lu()
        })
    }

    /// Arrivals `Πᵀ d`.
    fn route(&self, departures: &[f64], arrivals: &mut [f64]) {
        arrivals.iter_mut().for_each(|a| *a = 0.0);
        for (z, &d) in departures.iter().enumerate() {
            if d != 0.0 {
                for &(y, p) in &self.routes[z] {
                    arrivals[y] += p * d;
                }
            }
        }
    }

    fn outflow(&self, departures: &[f64]) -> f64 {
        departures.iter().zip(&self.out_share).map(|(d, s)| d * s).sum()
    }

    /// One explicit step: `prev` at the left node and the panel arrivals
    /// give the right-node values, the departures and the outflow.
    pub fn explicit_step(&self, prev: &[f64], arrivals: &[f64], next: &mut [f64], departures: &mut [f64]) -> f64 {
        for y in 0..self.size() {
            next[y] = self.decay[y] * prev[y] + self.kappa[y] * arrivals[y];
            departures[y] = -(-self.delta[y]).exp_m1() * prev[y] + (1.0 - self.kappa[y]) * arrivals[y];
        }
        self.outflow(departures)
    }

    /// One step of the summed series: arrivals solve the panel system.
    pub fn resolvent_step(&self, prev: &[f64], next: &mut [f64], departures: &mut [f64]) -> Result<f64> {
        let k = self.size();
        let leaving: Vec<f64> = (0..k).map(|y| -(-self.delta[y]).exp_m1() * prev[y]).collect();
        let mut rhs = vec![0.0; k];
        self.route(&leaving, &mut rhs);
        let arrivals = self
            .forward_lu()
            .solve(&DVector::from_vec(rhs))
            .ok_or_else(|| Error::Precondition("singular panel system in the forward resolvent".into()))?;
        let arrivals: Vec<f64> = arrivals.iter().map(|a| a.max(0.0)).collect();
        Ok(self.explicit_step(prev, &arrivals, next, departures))
    }

    /// Backward step of the summed series: `later` holds `P(t_{k+1}, ·; t, B)`.
    pub fn backward_resolvent_step(&self, later: &[f64], out: &mut [f64]) -> Result<()> {
        let k = self.size();
        let mut rhs = vec![0.0; k];
        for x in 0..k {
            let (_, beta) = self.backward_weights(x);
            let gathered: f64 = self.routes[x].iter().map(|&(y, p)| p * later[y]).sum();
            rhs[x] = self.decay[x] * later[x] + beta * gathered;
        }
        let v = self
            .backward_lu()
            .solve(&DVector::from_vec(rhs))
            .ok_or_else(|| Error::Precondition("singular panel system in the backward resolvent".into()))?;
        for (o, v) in out.iter_mut().zip(v.iter()) {
            *o = v.clamp(0.0, 1.0);
        }
        Ok(())
    }

    /// `Σ_y π(x,y) v(y)`.
    pub fn gather(&self, x: usize, v: impl Fn(usize) -> f64) -> f64 {
        self.routes[x].iter().map(|&(y, p)| p * v(y)).sum()
    }

    pub fn route_into(&self, departures: &[f64], arrivals: &mut [f64]) {
        self.route(departures, arrivals)
    }
}

/// The scheme's coefficients on a grid and truncation.
///
/// Time-homogeneous models on uniform grids share one set of coefficients
/// (and one factorisation) across all panels.
#[derive(Debug)]
pub struct Scheme {
    model: QModel,
    grid: TimeGrid,
    trunc: Truncation,
    coefs: Vec<PanelCoef>,
    shared: bool,
}

impl Scheme {
    pub fn new(model: &QModel, grid: &TimeGrid, trunc: Truncation) -> Result<Self> {
        if trunc.size == 0 {
            return Err(Error::Argument("truncation must hold at least one state".into()));
        }
        for &t in grid.times() {
            model.check_time(t)?;
        }
        let t = grid.times();
        let shared = model.is_time_homogeneous() && grid.uniform_step().is_some();
        let coefs = if shared {
            vec![PanelCoef::build(model, t[0], t[1], trunc.size)?]
        } else {
            (0..grid.panels())
                .into_par_iter()
                .map(|i| PanelCoef::build(model, t[i], t[i + 1], trunc.size))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Scheme {
            model: model.clone(),
            grid: grid.clone(),
            trunc,
            coefs,
            shared,
        })
    }

    pub fn model(&self) -> &QModel {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub(crate) fn panel(&self, i: usize) -> &PanelCoef {
        if self.shared {
            &self.coefs[0]
        } else {
            &self.coefs[i]
        }
    }

    pub(crate) fn check_state(&self, x: usize) -> Result<()> {
        if !self.trunc.contains(x) {
            return Err(Error::Argument(format!(
                "state {x} lies outside the truncation of {} states",
                self.trunc.size
            )));
        }
        Ok(())
    }
}
