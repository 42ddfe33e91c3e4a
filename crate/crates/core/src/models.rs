//! Catalog of built-in Q-functions and the JSON model-spec format.
//!
//! ```json
//! { "family": "oscillating", "params": {}, "horizon": [0, "inf"], "epsilon_T1": 0 }
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::qfunction::{Horizon, QModel};
use crate::state::{index_to_signed, signed_to_index, StateCount, StateSet};

/// Right end of a horizon in JSON: a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonEnd {
    Finite(f64),
    Named(Infinity),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Infinity {
    #[serde(rename = "inf", alias = "infinity", alias = "Infinity")]
    Inf,
}

impl HorizonEnd {
    pub fn value(self) -> f64 {
        match self {
            HorizonEnd::Finite(v) => v,
            HorizonEnd::Named(_) => f64::INFINITY,
        }
    }

    pub fn from_value(v: f64) -> Self {
        if v.is_finite() {
            HorizonEnd::Finite(v)
        } else {
            HorizonEnd::Named(Infinity::Inf)
        }
    }
}

/// Serialized description of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<(f64, HorizonEnd)>,
    #[serde(rename = "epsilon_T1", default, skip_serializing_if = "Option::is_none")]
    pub epsilon_t1: Option<f64>,
    /// Suggested truncation size for solvers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_hint: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl ModelSpec {
    pub fn new(family: impl Into<String>) -> Self {
        ModelSpec {
            family: family.into(),
            params: Map::new(),
            horizon: None,
            epsilon_t1: None,
            truncation_hint: None,
            description: None,
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn with_horizon(mut self, start: f64, end: f64) -> Self {
        self.horizon = Some((start, HorizonEnd::from_value(end)));
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    fn number(&self, key: &str, default: f64) -> Result<f64> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::InvalidModel(format!("parameter `{key}` must be a number"))),
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.number(key, default)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidModel(format!("parameter `{key}` must be positive, got {v}")));
        }
        Ok(v)
    }

    fn nonnegative(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.number(key, default)?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidModel(format!("parameter `{key}` must be nonnegative, got {v}")));
        }
        Ok(v)
    }
}

/// Catalog family names accepted by [`build_model`].
pub const FAMILIES: &[&str] = &[
    "zero",
    "poisson",
    "yule",
    "pure-birth",
    "explosive-birth",
    "birth-death",
    "oscillating",
    "reciprocal",
    "modulated-poisson",
    "custom-table",
];

/// Builds a catalog model from its spec.
pub fn build_model(spec: &ModelSpec) -> Result<QModel> {
    let model = match spec.family.as_str() {
        "zero" => zero(),
        "poisson" => poisson(spec.positive("rate", 1.0)?),
        "yule" => yule(spec.positive("rate", 1.0)?),
        "pure-birth" => pure_birth(spec.positive("scale", 2.0)?, spec.positive("base", 2.0)?),
        "explosive-birth" => pure_birth(2.0, 2.0),
        "birth-death" => birth_death(
            spec.nonnegative("immigration", 1.0)?,
            spec.nonnegative("birth", 1.0)?,
            spec.nonnegative("death", 1.0)?,
        ),
        "oscillating" => {
            let support = spec.number("support", 60.0)?;
            if !(1.0..=500.0).contains(&support) || support.fract() != 0.0 {
                return Err(Error::InvalidModel("`support` must be an integer in 1..=500".into()));
            }
            oscillating(support as u32)
        }
        "reciprocal" => {
            let (t0, t1) = spec.horizon.map(|(a, b)| (a, b.value())).unwrap_or((0.0, 1.0));
            if t0 != 0.0 || !t1.is_finite() {
                return Err(Error::InvalidModel("reciprocal family needs a horizon [0, T1) with finite T1".into()));
            }
            return reciprocal(t1, spec.epsilon_t1.unwrap_or(1e-6));
        }
        "modulated-poisson" => {
            let amplitude = spec.number("amplitude", 0.5)?;
            if !(0.0..=1.0).contains(&amplitude) {
                return Err(Error::InvalidModel("`amplitude` must lie in [0, 1]".into()));
            }
            modulated_poisson(spec.positive("rate", 1.0)?, amplitude, spec.positive("frequency", 2.0 * PI)?)
        }
        "custom-table" => custom_table(&spec.params)?,
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    let model = match spec.horizon {
        Some((start, end)) => model.restrict_horizon(Horizon::new(start, end.value())?),
        None => model,
    };
    Ok(model.with_epsilon_t1(spec.epsilon_t1.unwrap_or(0.0)))
}

fn successor_kernel(rate: impl Fn(usize) -> f64 + Send + Sync + 'static) -> impl Fn(usize, f64, &mut Vec<(usize, f64)>) + Send + Sync {
    move |x, _t, out| {
        let r = rate(x);
        if r > 0.0 {
            out.push((x + 1, r));
        }
    }
}

/// `q ≡ 0`: nothing ever happens.
pub fn zero() -> QModel {
    QModel::new("zero", Horizon::half_line(), |_, _| 0.0, |_, _, _| {})
        .with_integrated_rate(|_, _, _| 0.0)
        .time_homogeneous()
}

/// Poisson counting process: `n → n+1` at constant rate.
pub fn poisson(rate: f64) -> QModel {
    QModel::new("poisson", Horizon::half_line(), move |_, _| rate, successor_kernel(move |_| rate))
        .with_integrated_rate(move |_, u, t| rate * (t - u))
        .time_homogeneous()
}

/// Yule process started at index 0: `q(n,t) = rate·(n+1)`, `n → n+1`.
pub fn yule(rate: f64) -> QModel {
    let q = move |n: usize| rate * (n as f64 + 1.0);
    QModel::new("yule", Horizon::half_line(), move |n, _| q(n), successor_kernel(q))
        .with_integrated_rate(move |n, u, t| q(n) * (t - u))
        .time_homogeneous()
}

/// Pure birth with `λ_n = scale·base^n`; explosive whenever `base > 1`.
pub fn pure_birth(scale: f64, base: f64) -> QModel {
    let q = move |n: usize| scale * base.powf(n as f64);
    QModel::new("pure-birth", Horizon::half_line(), move |n, _| q(n), successor_kernel(q))
        .with_integrated_rate(move |n, u, t| q(n) * (t - u))
        .time_homogeneous()
}

/// Linear birth–death: `λ_n = immigration + birth·n`, `μ_n = death·n`.
pub fn birth_death(immigration: f64, birth: f64, death: f64) -> QModel {
    let up = move |n: usize| immigration + birth * n as f64;
    let down = move |n: usize| death * n as f64;
    let q = move |n: usize| up(n) + down(n);
    QModel::new(
        "birth-death",
        Horizon::half_line(),
        move |n, _| q(n),
        move |n, _, out: &mut Vec<(usize, f64)>| {
            if up(n) > 0.0 {
                out.push((n + 1, up(n)));
            }
            if n > 0 && down(n) > 0.0 {
                out.push((n - 1, down(n)));
            }
        },
    )
    .with_integrated_rate(move |n, u, t| q(n) * (t - u))
    .time_homogeneous()
}

/// States on the integers (interleaved indices): from 0 jump to `j` with
/// rate `2^{-(|j|+1)}`; from `j ≠ 0` jump to `-j` at rate `2^{|j|}`.
///
/// The jump law out of 0 is cut at `|j| <= support`; the dropped mass is
/// `2^{-support}` of the unit rate, far below the kernel-mass tolerance for
/// the default support of 60.
pub fn oscillating(support: u32) -> QModel {
    let rate = |x: usize| {
        if x == 0 {
            1.0
        } else {
            2f64.powi(index_to_signed(x).unsigned_abs() as i32)
        }
    };
    QModel::new("oscillating", Horizon::half_line(), move |x, _| rate(x), move |x, _, out: &mut Vec<(usize, f64)>| {
        if x == 0 {
            for k in 1..=support as i64 {
                let m = 0.5f64.powi(k as i32 + 1);
                out.push((signed_to_index(k), m));
                out.push((signed_to_index(-k), m));
            }
        } else {
            out.push((signed_to_index(-index_to_signed(x)), rate(x)));
        }
    })
    .with_integrated_rate(move |x, u, t| rate(x) * (t - u))
    .with_labels(|x| index_to_signed(x).to_string())
    .time_homogeneous()
}

/// `q(x,t) = 1/(T1 - t)` on `[0, T1)`, with a flip kernel `x ↔ x xor 1`.
pub fn reciprocal(t1: f64, epsilon: f64) -> Result<QModel> {
    let horizon = Horizon::new(0.0, t1)?;
    if !(epsilon >= 0.0 && epsilon < t1) {
        return Err(Error::InvalidModel(format!("epsilon_T1 = {epsilon} must lie in [0, T1)")));
    }
    Ok(QModel::new(
        "reciprocal",
        horizon,
        move |_, t| 1.0 / (t1 - t),
        move |x, t, out: &mut Vec<(usize, f64)>| out.push((x ^ 1, 1.0 / (t1 - t))),
    )
    .with_integrated_rate(move |_, u, t| ((t1 - u) / (t1 - t)).ln())
    .with_epsilon_t1(epsilon))
}

/// Counting process with rate `rate·(1 + amplitude·sin(frequency·t))`.
pub fn modulated_poisson(rate: f64, amplitude: f64, frequency: f64) -> QModel {
    let q = move |t: f64| rate * (1.0 + amplitude * (frequency * t).sin());
    QModel::new("modulated-poisson", Horizon::half_line(), move |_, t| q(t), move |x, t, out: &mut Vec<(usize, f64)>| {
        let r = q(t);
        if r > 0.0 {
            out.push((x + 1, r))
        }
    })
    .with_integrated_rate(move |_, u, t| {
        rate * ((t - u) - amplitude / frequency * ((frequency * t).cos() - (frequency * u).cos()))
    })
}

#[derive(Debug, Clone, Deserialize)]
struct TablePiece {
    until: HorizonEnd,
    #[serde(default)]
    transitions: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Deserialize)]
struct Table {
    states: usize,
    pieces: Vec<TablePiece>,
}

/// Piecewise-constant-in-time rates on a finite state space.
///
/// `params = { "states": n, "pieces": [{ "until": t, "transitions": [[from, to, rate], ...] }, ...] }`;
/// piece `k` is active on `[until_{k-1}, until_k)`.
fn custom_table(params: &Map<String, Value>) -> Result<QModel> {
    let table: Table = serde_json::from_value(Value::Object(params.clone()))
        .map_err(|e| Error::InvalidModel(format!("custom-table params: {e}")))?;
    if table.pieces.is_empty() {
        return Err(Error::InvalidModel("custom-table needs at least one piece".into()));
    }
    let n = table.states;
    let mut ends = Vec::new();
    let mut kernels: Vec<Vec<Vec<(usize, f64)>>> = Vec::new();
    for piece in &table.pieces {
        let end = piece.until.value();
        if ends.last().is_some_and(|&prev| end <= prev) {
            return Err(Error::InvalidModel("custom-table piece ends must increase".into()));
        }
        let mut k = vec![Vec::new(); n];
        for &(from, to, r) in &piece.transitions {
            if from >= n || to >= n {
                return Err(Error::InvalidModel(format!("transition {from}->{to} outside {n} states")));
            }
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidModel(format!("transition rate {r} is not a finite nonnegative number")));
            }
            if from != to && r > 0.0 {
                k[from].push((to, r));
            }
        }
        ends.push(end);
        kernels.push(k);
    }
    let rates: Vec<Vec<f64>> = kernels
        .iter()
        .map(|k| k.iter().map(|row| row.iter().map(|e| e.1).sum()).collect())
        .collect();
    let piece_of = {
        let ends = ends.clone();
        move |t: f64| ends.iter().position(|&e| t < e)
    };
    let rate = {
        let rates = rates.clone();
        let piece_of = piece_of.clone();
        move |x: usize, t: f64| match piece_of(t) {
            Some(p) if x < n => rates[p][x],
            _ => 0.0,
        }
    };
    let kernel = move |x: usize, t: f64, out: &mut Vec<(usize, f64)>| {
        if let Some(p) = piece_of(t) {
            if x < n {
                out.extend_from_slice(&kernels[p][x]);
            }
        }
    };
    let integrated = move |x: usize, u: f64, t: f64| {
        if x >= n {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut lo = f64::NEG_INFINITY;
        for (p, &end) in ends.iter().enumerate() {
            let a = u.max(lo);
            let b = t.min(end);
            if b > a {
                acc += rates[p][x] * (b - a);
            }
            lo = end;
        }
        acc
    };
    let homogeneous = table.pieces.len() == 1;
    let mut model = QModel::new("custom-table", Horizon::half_line(), rate, kernel)
        .with_integrated_rate(integrated)
        .with_states(StateCount::Finite(n));
    if homogeneous {
        model = model.time_homogeneous();
    }
    Ok(model)
}

/// Every catalog family with its default parameters, for sweeps.
pub fn catalog() -> Vec<(ModelSpec, QModel)> {
    FAMILIES
        .iter()
        .filter(|f| **f != "custom-table")
        .map(|f| {
            let spec = ModelSpec::new(*f);
            let model = build_model(&spec).expect("catalog defaults are valid");
            (spec, model)
        })
        .collect()
}

/// States and times suitable for probing a catalog model.
pub fn probe_states(model: &QModel) -> StateSet {
    match model.state_count() {
        StateCount::Finite(n) => StateSet::range(0, n),
        StateCount::Infinite => StateSet::range(0, 41),
    }
}
