//! Conservative Q-functions with time-varying, possibly unbounded rates.
//!
//! A [`QModel`] holds the total rate `q(x,t)` of leaving `x` and the jump
//! kernel `q(x,t,{y})`, `y != x`. Conservative models route all of `q(x,t)`
//! through the kernel; [`make_conservative`] repairs a deficit by adding an
//! absorbing state.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, ABS_TOL};
use crate::state::{StateCount, StateSet};

pub type RateFn = dyn Fn(usize, f64) -> f64 + Send + Sync;
/// Appends the kernel entries `(y, q(x,t,{y}))` of state `x` at time `t`.
pub type KernelFn = dyn Fn(usize, f64, &mut Vec<(usize, f64)>) + Send + Sync;
pub type IntegratedRateFn = dyn Fn(usize, f64, f64) -> f64 + Send + Sync;
pub type LabelFn = dyn Fn(usize) -> String + Send + Sync;

/// Relative tolerance of the kernel-mass invariant.
pub const KERNEL_MASS_RTOL: f64 = 1e-12;

/// The interval `[start, end)` on which a model is defined; `end` may be
/// `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub start: f64,
    pub end: f64,
}

impl Horizon {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start >= 0.0 && start.is_finite() && end > start) {
            return Err(Error::InvalidModel(format!("horizon [{start}, {end}) is empty or negative")));
        }
        Ok(Horizon { start, end })
    }

    pub fn half_line() -> Self {
        Horizon { start: 0.0, end: f64::INFINITY }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// A Q-function on an indexed countable state space.
#[derive(Clone)]
pub struct QModel {
    name: String,
    horizon: Horizon,
    states: StateCount,
    epsilon_t1: f64,
    time_homogeneous: bool,
    rate: Arc<RateFn>,
    kernel: Arc<KernelFn>,
    integrated: Option<Arc<IntegratedRateFn>>,
    label: Option<Arc<LabelFn>>,
}

impl fmt::Debug for QModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QModel")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("states", &self.states)
            .field("epsilon_t1", &self.epsilon_t1)
            .field("time_homogeneous", &self.time_homogeneous)
            .field("integrated_rate_hint", &self.integrated.is_some())
            .finish()
    }
}

impl QModel {
    pub fn new<R, K>(name: impl Into<String>, horizon: Horizon, rate: R, kernel: K) -> Self
    where
        R: Fn(usize, f64) -> f64 + Send + Sync + 'static,
        K: Fn(usize, f64, &mut Vec<(usize, f64)>) + Send + Sync + 'static,
    {
        QModel {
            name: name.into(),
            horizon,
            states: StateCount::Infinite,
            epsilon_t1: 0.0,
            time_homogeneous: false,
            rate: Arc::new(rate),
            kernel: Arc::new(kernel),
            integrated: None,
            label: None,
        }
    }

    /// Closed form of `∫_u^t q(x,θ)dθ`.
    pub fn with_integrated_rate<F>(mut self, f: F) -> Self
    where
        F: Fn(usize, f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.integrated = Some(Arc::new(f));
        self
    }

    pub fn with_states(mut self, states: StateCount) -> Self {
        self.states = states;
        self
    }

    /// Evaluations are refused within `epsilon` of a finite horizon end.
    pub fn with_epsilon_t1(mut self, epsilon: f64) -> Self {
        self.epsilon_t1 = epsilon.max(0.0);
        self
    }

    /// Marks rates and kernel as constant in time.
    pub fn time_homogeneous(mut self) -> Self {
        self.time_homogeneous = true;
        self
    }

    /// Same rates, evaluated only on `horizon`.
    pub fn restrict_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_labels<F>(mut self, f: F) -> Self
    where
        F: Fn(usize) -> String + Send + Sync + 'static,
    {
        self.label = Some(Arc::new(f));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn state_count(&self) -> StateCount {
        self.states
    }

    pub fn epsilon_t1(&self) -> f64 {
        self.epsilon_t1
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }

    pub fn has_integrated_rate_hint(&self) -> bool {
        self.integrated.is_some()
    }

    /// Human-readable name of a state index.
    pub fn label(&self, x: usize) -> String {
        match &self.label {
            Some(f) => f(x),
            None => x.to_string(),
        }
    }

    /// Latest admissible evaluation time, `T1 - epsilon`.
    pub fn admissible_end(&self) -> f64 {
        if self.horizon.end.is_finite() {
            self.horizon.end - self.epsilon_t1
        } else {
            f64::INFINITY
        }
    }

    /// Total rate `q(x,t)`.
    pub fn rate(&self, x: usize, t: f64) -> f64 {
        (self.rate)(x, t)
    }

    pub fn kernel_into(&self, x: usize, t: f64, out: &mut Vec<(usize, f64)>) {
        (self.kernel)(x, t, out)
    }

    /// Kernel entries `(y, q(x,t,{y}))` with `y != x`.
    pub fn kernel(&self, x: usize, t: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.kernel_into(x, t, &mut out);
        out
    }

    pub fn kernel_mass(&self, x: usize, t: f64) -> f64 {
        self.kernel(x, t).iter().map(|&(_, m)| m).sum()
    }

    /// `q(x,t,B∖{x})`.
    pub fn kernel_to_set(&self, x: usize, t: f64, set: &StateSet) -> f64 {
        self.kernel(x, t)
            .iter()
            .filter(|&&(y, _)| y != x && set.contains(y))
            .map(|&(_, m)| m)
            .sum()
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.horizon.start) || t >= self.horizon.end {
            return Err(Error::Argument(format!(
                "time {t} outside the horizon [{}, {})",
                self.horizon.start, self.horizon.end
            )));
        }
        if self.epsilon_t1 > 0.0 && t > self.admissible_end() {
            return Err(Error::NearHorizonEnd {
                time: t,
                end: self.horizon.end,
                epsilon: self.epsilon_t1,
            });
        }
        Ok(())
    }

    /// `∫_u^t q(x,θ)dθ`, from the closed form when one is attached and by
    /// adaptive Simpson quadrature otherwise.
    pub fn integrated_rate(&self, x: usize, u: f64, t: f64) -> Result<f64> {
        if t < u {
            return Err(Error::Argument(format!("integration interval [{u}, {t}] is reversed")));
        }
        self.check_time(u)?;
        self.check_time(t)?;
        self.integrate_unchecked(x, u, t)
    }

    fn integrate_unchecked(&self, x: usize, u: f64, t: f64) -> Result<f64> {
        if u == t {
            return Ok(0.0);
        }
        if let Some(hint) = &self.integrated {
            let v = hint(x, u, t);
            return if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Divergence { state: x, from: u, to: t, partial: v })
            };
        }
        let f = |s: f64| self.rate(x, s);
        adaptive_simpson(&f, u, t, ABS_TOL).map_err(|d| Error::Divergence {
            state: x,
            from: u,
            to: t,
            partial: d.partial,
        })
    }

    /// The normalised jump law `q(x,t,·)/q(x,t)`.
    pub fn jump_distribution(&self, x: usize, t: f64) -> Result<Vec<(usize, f64)>> {
        let q = self.rate(x, t);
        if !(q > 0.0) {
            return Err(Error::NoJump { state: x, time: t });
        }
        Ok(self
            .kernel(x, t)
            .into_iter()
            .filter(|&(y, m)| y != x && m > 0.0)
            .map(|(y, m)| (y, m / q))
            .collect())
    }

    /// Checks the Q-function invariants at every probe point: finite
    /// nonnegative rates, no self-loops, and kernel mass equal to `q(x,t)`.
    pub fn validate(&self, states: &StateSet, times: &[f64]) -> Result<()> {
        for &t in times {
            for x in states.iter() {
                let q = self.rate(x, t);
                if !(q >= 0.0 && q.is_finite()) {
                    return Err(Error::InvalidModel(format!("q({x}, {t}) = {q} is not a finite rate")));
                }
                let mut mass = 0.0;
                for (y, m) in self.kernel(x, t) {
                    if y == x && m != 0.0 {
                        return Err(Error::InvalidModel(format!("kernel of {x} charges {x} itself")));
                    }
                    if m < 0.0 {
                        return Err(Error::InvalidModel(format!("negative kernel mass {m} from {x} to {y}")));
                    }
                    mass += m;
                }
                if (mass - q).abs() > KERNEL_MASS_RTOL * q.max(1.0) {
                    return Err(Error::InvalidModel(format!(
                        "kernel mass {mass} differs from q({x}, {t}) = {q}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Default probe points used when a caller gives no grid: 17 times
    /// spread over the admissible part of the horizon.
    pub fn default_probe_times(&self) -> Vec<f64> {
        let start = self.horizon.start;
        let end = if self.admissible_end().is_finite() {
            self.admissible_end()
        } else {
            start + 10.0
        };
        (0..=16).map(|k| start + (end - start) * k as f64 / 16.0).collect()
    }
}

/// Result of [`make_conservative`]: a conservative model on the state space
/// augmented with an absorbing state.
#[derive(Debug, Clone)]
pub struct Conservative {
    pub model: QModel,
    /// Index of the absorbing state.
    pub absorbing: usize,
    shift: usize,
}

impl Conservative {
    /// Index of an original state in the augmented space.
    pub fn augmented(&self, x: usize) -> usize {
        x + self.shift
    }
}

/// Routes the kernel deficit `q(x,t) - q(x,t,X∖{x})` of every state to a new
/// absorbing state.
///
/// For a finite space of `n` states the absorbing state is `n`; for an
/// infinite space it is `0` and every original index moves up by one.
pub fn make_conservative(model: &QModel) -> Result<Conservative> {
    let probe_states = match model.state_count() {
        StateCount::Finite(n) => StateSet::range(0, n),
        StateCount::Infinite => StateSet::range(0, 64),
    };
    for &t in &model.default_probe_times() {
        for x in probe_states.iter() {
            let q = model.rate(x, t);
            let mass: f64 = model.kernel(x, t).iter().filter(|e| e.0 != x).map(|e| e.1).sum();
            if mass > q + KERNEL_MASS_RTOL * q.max(1.0) {
                return Err(Error::InvalidModel(format!(
                    "kernel mass {mass} exceeds q({x}, {t}) = {q}"
                )));
            }
        }
    }
    let (absorbing, shift, states) = match model.state_count() {
        StateCount::Finite(n) => (n, 0, StateCount::Finite(n + 1)),
        StateCount::Infinite => (0, 1, StateCount::Infinite),
    };
    let inner = model.clone();
    let rate = {
        let inner = inner.clone();
        move |x: usize, t: f64| {
            if x == absorbing {
                0.0
            } else {
                inner.rate(x - shift, t)
            }
        }
    };
    let kernel = {
        let inner = inner.clone();
        move |x: usize, t: f64, out: &mut Vec<(usize, f64)>| {
            if x == absorbing {
                return;
            }
            let orig = x - shift;
            let q = inner.rate(orig, t);
            let start = out.len();
            inner.kernel_into(orig, t, out);
            let mut mass = 0.0;
            for e in &mut out[start..] {
                e.0 += shift;
                mass += e.1;
            }
            out.retain(|e| e.0 != x);
            let deficit = q - mass;
            if deficit > 0.0 {
                out.push((absorbing, deficit));
            }
        }
    };
    let mut augmented = QModel::new(format!("{}+absorbing", model.name()), model.horizon(), rate, kernel)
        .with_states(states)
        .with_epsilon_t1(model.epsilon_t1());
    if let Some(hint) = model.integrated.clone() {
        augmented = augmented.with_integrated_rate(move |x, u, t| if x == absorbing { 0.0 } else { hint(x - shift, u, t) });
    }
    if model.is_time_homogeneous() {
        augmented = augmented.time_homogeneous();
    }
    if let Some(label) = model.label.clone() {
        augmented = augmented.with_labels(move |x| if x == absorbing { "absorbing".into() } else { label(x - shift) });
    }
    Ok(Conservative { model: augmented, absorbing, shift })
}

/// Extends a model on `[T0, T1)` to `[0, ∞)` by zero rates outside the
/// original horizon.
pub fn extend_to_halfline(model: &QModel) -> QModel {
    let h = model.horizon();
    let inside = move |t: f64| t >= h.start && t < h.end;
    let rate = {
        let m = model.clone();
        move |x: usize, t: f64| if inside(t) { m.rate(x, t) } else { 0.0 }
    };
    let kernel = {
        let m = model.clone();
        move |x: usize, t: f64, out: &mut Vec<(usize, f64)>| {
            if inside(t) {
                m.kernel_into(x, t, out)
            }
        }
    };
    let mut ext = QModel::new(format!("{}@[0,inf)", model.name()), Horizon::half_line(), rate, kernel)
        .with_states(model.state_count());
    if let Some(hint) = model.integrated.clone() {
        ext = ext.with_integrated_rate(move |x, u, t| {
            let lo = u.max(h.start);
            let hi = t.min(h.end);
            if hi <= lo {
                0.0
            } else {
                hint(x, lo, hi)
            }
        });
    }
    if model.is_time_homogeneous() && h.start == 0.0 && h.end == f64::INFINITY {
        ext = ext.time_homogeneous();
    }
    if let Some(label) = model.label.clone() {
        ext = ext.with_labels(move |x| label(x));
    }
    ext
}

/// Three-valued outcome of a grid probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Holds on the probe grid; never a global claim.
    Holds,
    /// Fails, with a witness.
    Fails,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds on probe grid",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assumption {
    /// Feller's exhaustion by sets with bounded rates.
    Feller,
    /// `sup_t q(x,t) < ∞` for each state.
    Bounded,
    /// `sup_{[T0,s)} q(x,t) < ∞` for each `s < T1`.
    LocallyBounded,
    /// `∫_{T0}^s q(x,t)dt < ∞` for each `s < T1`.
    LocallyIntegrable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub assumption: Assumption,
    pub state: usize,
    /// Probe time, or the right end of the probed interval `[T0, s]`.
    pub time: f64,
    pub value: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub feller_ok: Verdict,
    pub lb_ok: Verdict,
    pub alb_ok: Verdict,
    pub l1_ok: Verdict,
    pub witnesses: Vec<Witness>,
    /// Nested sets `B_n = {x : sup_t q(x,t) < n}` built for the Feller probe.
    pub feller_sets: Vec<(u64, StateSet)>,
    pub states: StateSet,
    pub grid: Vec<f64>,
}

/// Probes the four boundedness assumptions on `states × grid`.
///
/// A `Fails` verdict always carries a witness: a rate above
/// `bound_threshold`, a non-finite rate, or a divergent rate integral.
/// Divergence of `∫_{T0}^s q` also witnesses unbounded rates on `[T0, s)`,
/// so each failure propagates up the chain bounded ⇒ locally bounded ⇒
/// locally integrable.
pub fn check_assumptions(
    model: &QModel,
    states: &StateSet,
    grid: &[f64],
    bound_threshold: f64,
) -> Result<AssumptionReport> {
    if grid.is_empty() {
        return Err(Error::Argument("empty probe grid".into()));
    }
    if states.is_empty() {
        return Err(Error::Argument("empty probe state set".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument("probe grid must be strictly increasing".into()));
    }
    for &t in grid {
        model.check_time(t)?;
    }
    let t0 = model.horizon().start;
    let last = grid.len() - 1;
    let mut witnesses = Vec::new();
    let (mut lb, mut alb, mut l1) = (Verdict::Holds, Verdict::Holds, Verdict::Holds);
    let mut sups = Vec::with_capacity(states.len());

    for x in states.iter() {
        let values: Vec<f64> = grid.iter().map(|&t| model.rate(x, t)).collect();

        // Local integrability: cumulative integrals from T0 to each probe time.
        let mut acc = 0.0;
        let mut prev = t0;
        let mut diverged_at = None;
        for &s in grid {
            if s > prev {
                match model.integrate_unchecked(x, prev, s) {
                    Ok(v) => acc += v,
                    Err(Error::Divergence { partial, .. }) => {
                        diverged_at = Some((s, acc + partial));
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            prev = s;
        }
        if let Some((s, partial)) = diverged_at {
            l1 = Verdict::Fails;
            alb = Verdict::Fails;
            lb = Verdict::Fails;
            witnesses.push(Witness {
                assumption: Assumption::LocallyIntegrable,
                state: x,
                time: s,
                value: partial,
                reason: format!("∫ q({x},t)dt over [{t0}, {s}] diverges"),
            });
        }

        // Local boundedness: non-finite rates strictly before an interior s.
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            if i < last || grid[i] < model.horizon().end {
                alb = Verdict::Fails;
                lb = Verdict::Fails;
                witnesses.push(Witness {
                    assumption: Assumption::LocallyBounded,
                    state: x,
                    time: grid[i],
                    value: values[i],
                    reason: format!("q({x}, {}) is not finite", grid[i]),
                });
            }
        }

        // Boundedness at each state: supremum over the whole grid.
        let (imax, sup) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 || v.is_nan() { (i, v) } else { acc });
        sups.push(sup);
        if sup > bound_threshold || !sup.is_finite() {
            lb = Verdict::Fails;
            witnesses.push(Witness {
                assumption: Assumption::Bounded,
                state: x,
                time: grid[imax],
                value: sup,
                reason: format!("q({x}, {}) = {sup:e} exceeds the threshold {bound_threshold:e}", grid[imax]),
            });
        } else if imax == last && last >= 2 && sup > 10.0 * values[last / 2].max(f64::MIN_POSITIVE) {
            // Steep growth toward the end of the grid: no verdict either way.
            if lb == Verdict::Holds {
                lb = Verdict::Inconclusive;
            }
        }
    }

    let feller_sets = feller_exhaustion(states, &sups);
    Ok(AssumptionReport {
        feller_ok: lb,
        lb_ok: lb,
        alb_ok: alb,
        l1_ok: l1,
        witnesses,
        feller_sets,
        states: states.clone(),
        grid: grid.to_vec(),
    })
}

fn feller_exhaustion(states: &StateSet, sups: &[f64]) -> Vec<(u64, StateSet)> {
    let finite: Vec<f64> = sups.iter().copied().filter(|s| s.is_finite()).collect();
    let Some(top) = finite.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let levels = (top.max(0.0).floor() as u64 + 1).min(64);
    let mut sets: Vec<(u64, StateSet)> = (1..=levels)
        .map(|n| {
            let members = states.iter().zip(sups).filter(|(_, &s)| s < n as f64).map(|(x, _)| x);
            (n, members.collect())
        })
        .collect();
    if top.floor() as u64 + 1 > levels {
        let n = top.floor() as u64 + 1;
        let members = states.iter().zip(sups).filter(|(_, &s)| s < n as f64).map(|(x, _)| x);
        sets.push((n, members.collect()));
    }
    sets
}

/// Outcome of [`detect_qs_bounded`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundedness {
    pub bounded: bool,
    /// Violating `(state, time, rate)` when not bounded.
    pub witness: Option<(usize, f64, f64)>,
}

/// Number of panels in the default probe grid of [`detect_qs_bounded`].
pub const QS_PROBE_PANELS: usize = 256;

/// Decides whether `candidate` is (q,s)-bounded with the given bound on a
/// uniform probe grid over `[T0, s)`.
pub fn detect_qs_bounded(model: &QModel, s: f64, bound: f64, candidate: &StateSet) -> Boundedness {
    let t0 = model.horizon().start;
    let end = if s >= model.admissible_end() {
        let a = model.admissible_end();
        if a.is_finite() {
            a
        } else {
            t0 + 100.0
        }
    } else {
        s - 1e-9 * (s - t0)
    };
    let grid: Vec<f64> = (0..=QS_PROBE_PANELS)
        .map(|k| t0 + (end - t0) * k as f64 / QS_PROBE_PANELS as f64)
        .collect();
    detect_qs_bounded_on(model, bound, candidate, &grid)
}

/// As [`detect_qs_bounded`] with a caller-supplied probe grid.
pub fn detect_qs_bounded_on(model: &QModel, bound: f64, candidate: &StateSet, grid: &[f64]) -> Boundedness {
    let mut worst: Option<(usize, f64, f64)> = None;
    for x in candidate.iter() {
        for &t in grid {
            let q = model.rate(x, t);
            if !(q <= bound) && worst.is_none_or(|w| q > w.2 || q.is_nan()) {
                worst = Some((x, t, q));
            }
        }
    }
    Boundedness { bounded: worst.is_none(), witness: worst }
}
