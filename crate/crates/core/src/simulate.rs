//! Direct simulation of the jump process from its Q-function.
//!
//! Holding times invert the survival function `exp(-Λ(x; u, τ))` exactly;
//! jump targets are drawn from the normalised kernel. Explosion cannot be
//! simulated literally, so a path stops at a jump cap or when jump times no
//! longer advance in floating point.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qfunction::QModel;
use crate::state::Truncation;

/// Default number of jumps after which a path is stopped.
pub const DEFAULT_JUMP_CAP: usize = 10_000;
/// Accuracy of the holding-time root: `|Λ(u,τ) - E| <= ROOT_TOL`.
pub const ROOT_TOL: f64 = 1e-10;
/// Name of the per-path generator, recorded with every estimate.
pub const GENERATOR: &str = "ChaCha8Rng(seed_from_u64(seed)), stream = path index";

/// The generator of path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Outcome of one holding-time draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Holding {
    /// The next jump happens at this time.
    Jump(f64),
    /// No jump before the limit.
    NoJump,
}

fn last_admissible(model: &QModel) -> f64 {
    let end = model.admissible_end();
    if end.is_finite() && end == model.horizon().end {
        end.next_down()
    } else {
        end
    }
}

/// The time `τ` with `Λ(x; u, τ) = e`, or [`Holding::NoJump`] when
/// `Λ(x; u, limit) < e`.
pub fn holding_for(model: &QModel, x: usize, u: f64, limit: f64, e: f64) -> Result<Holding> {
    let limit = limit.min(last_admissible(model));
    if !(limit >= u) {
        return Err(Error::Argument(format!("holding limit {limit} precedes the start {u}")));
    }
    let lambda = |t: f64| model.integrated_rate(x, u, t);
    let mut hi = if limit.is_finite() {
        if lambda(limit)? < e {
            return Ok(Holding::NoJump);
        }
        limit
    } else {
        let q = model.rate(x, u);
        let mut step = if q > 0.0 { e.max(1.0) / q } else { 1.0 };
        loop {
            let t = u + step;
            if lambda(t)? >= e {
                break t;
            }
            if step > 1e15 {
                return Ok(Holding::NoJump);
            }
            step *= 2.0;
        }
    };
    let mut lo = u;
    let q0 = model.rate(x, u);
    let mut tau = if q0 > 0.0 { (u + e / q0).clamp(lo, hi) } else { 0.5 * (lo + hi) };
    for _ in 0..400 {
        let f = lambda(tau)? - e;
        if f.abs() <= ROOT_TOL {
            return Ok(Holding::Jump(tau));
        }
        if f < 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(f64::MIN_POSITIVE) {
            return Ok(Holding::Jump(hi));
        }
        let d = model.rate(x, tau);
        let newton = tau - f / d;
        tau = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Err(Error::RootFinding { target: e, lo, hi })
}

/// Draws the next jump time out of `x` after `u`, looking no further than
/// the admissible end of the horizon.
pub fn sample_holding<R: Rng + ?Sized>(model: &QModel, x: usize, u: f64, rng: &mut R) -> Result<Holding> {
    sample_holding_until(model, x, u, f64::INFINITY, rng)
}

/// As [`sample_holding`], censored at `limit`.
pub fn sample_holding_until<R: Rng + ?Sized>(model: &QModel, x: usize, u: f64, limit: f64, rng: &mut R) -> Result<Holding> {
    let e: f64 = rng.sample(Exp1);
    holding_for(model, x, u, limit, e)
}

/// Draws the target of a jump out of `x` at time `t` by inverse CDF over
/// the kernel entries.
pub fn sample_jump_target<R: Rng + ?Sized>(model: &QModel, x: usize, t: f64, rng: &mut R) -> Result<usize> {
    let q = model.rate(x, t);
    if !(q > 0.0) {
        return Err(Error::NoJump { state: x, time: t });
    }
    let entries = model.kernel(x, t);
    let target = rng.random::<f64>() * entries.iter().filter(|e| e.0 != x).map(|e| e.1).sum::<f64>();
    let mut acc = 0.0;
    let mut last = None;
    for &(y, m) in &entries {
        if y == x || m <= 0.0 {
            continue;
        }
        acc += m;
        last = Some(y);
        if target < acc {
            return Ok(y);
        }
    }
    last.ok_or(Error::NoJump { state: x, time: t })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// The next jump would fall after the observation horizon.
    Horizon,
    /// The jump cap was reached.
    JumpCap,
    /// The next jump time rounds to the current one.
    TimeStall,
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub initial_state: usize,
    pub start: f64,
    pub jump_times: Vec<f64>,
    /// State entered at each jump.
    pub visited_states: Vec<usize>,
    /// Judged absorbed at the point at infinity.
    pub exploded: bool,
    pub stop: StopReason,
    pub censored_at: f64,
}

impl PathSample {
    /// State occupied at time `t` (the last state entered at or before `t`).
    pub fn state_at(&self, t: f64) -> usize {
        let n = self.jump_times.partition_point(|&s| s <= t);
        if n == 0 {
            self.initial_state
        } else {
            self.visited_states[n - 1]
        }
    }
}

/// What a path reports without storing its jumps.
#[derive(Debug, Clone, Copy)]
struct Walk {
    state: usize,
    jumps: usize,
    stop: StopReason,
    exploded: bool,
}

/// Ratio of late to early holding times below which capped paths count as
/// exploding.
const DECAY_RATIO: f64 = 0.5;

fn walk<R: Rng + ?Sized>(
    model: &QModel,
    x0: usize,
    u: f64,
    horizon: f64,
    cap: usize,
    rng: &mut R,
    mut record: impl FnMut(f64, usize),
) -> Result<Walk> {
    let (mut t, mut x, mut jumps) = (u, x0, 0usize);
    let (mut early, mut late) = (0.0, 0.0);
    loop {
        if jumps >= cap {
            // Geometric extrapolation of the holding times of the two halves.
            let ratio = if early > 0.0 { late / early } else { 1.0 };
            let tail = if ratio < 1.0 { late * ratio / (1.0 - ratio) } else { f64::INFINITY };
            let exploded = ratio <= DECAY_RATIO && tail < horizon - t;
            return Ok(Walk { state: x, jumps, stop: StopReason::JumpCap, exploded });
        }
        let tau = match sample_holding_until(model, x, t, horizon, rng)? {
            Holding::NoJump => return Ok(Walk { state: x, jumps, stop: StopReason::Horizon, exploded: false }),
            Holding::Jump(tau) => tau,
        };
        let ulp = t.abs() * f64::EPSILON;
        if tau - t <= 4.0 * ulp && model.rate(x, t) * 4.0 * ulp > 1.0 {
            return Ok(Walk { state: x, jumps, stop: StopReason::TimeStall, exploded: true });
        }
        if jumps < cap / 2 {
            early += tau - t;
        } else {
            late += tau - t;
        }
        x = sample_jump_target(model, x, tau, rng)?;
        t = tau;
        jumps += 1;
        record(t, x);
    }
}

/// Simulates one path from `(u, x0)` up to `horizon`.
pub fn sample_path<R: Rng + ?Sized>(
    model: &QModel,
    x0: usize,
    u: f64,
    horizon: f64,
    jump_cap: usize,
    rng: &mut R,
) -> Result<PathSample> {
    check_horizon(model, u, horizon)?;
    let mut jump_times = Vec::new();
    let mut visited_states = Vec::new();
    let w = walk(model, x0, u, horizon, jump_cap, rng, |t, y| {
        jump_times.push(t);
        visited_states.push(y);
    })?;
    Ok(PathSample {
        initial_state: x0,
        start: u,
        jump_times,
        visited_states,
        exploded: w.exploded,
        stop: w.stop,
        censored_at: horizon,
    })
}

fn check_horizon(model: &QModel, u: f64, horizon: f64) -> Result<()> {
    if !(horizon > u) {
        return Err(Error::Argument(format!("horizon {horizon} must exceed the start {u}")));
    }
    if horizon > model.admissible_end() {
        return Err(Error::Argument(format!(
            "horizon {horizon} lies beyond the admissible end {}",
            model.admissible_end()
        )));
    }
    model.check_time(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub jump_cap: usize,
    /// States outside are counted together.
    pub truncation: Option<Truncation>,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { jump_cap: DEFAULT_JUMP_CAP, truncation: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    pub state: usize,
    pub label: String,
    pub count: u64,
    pub p_hat: f64,
    pub std_err: f64,
}

/// Monte Carlo estimate of `P̄(u, x; t, ·)`.
///
/// Paths are partitioned into: at a state inside the truncation, outside
/// it, exploded, or stopped by the jump cap without a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub model: String,
    pub u: f64,
    pub x: usize,
    pub t: f64,
    pub n_paths: u64,
    pub rng_seed: u64,
    pub generator: String,
    pub jump_cap: usize,
    pub states: Vec<StateEstimate>,
    pub outside_count: u64,
    pub explosion_count: u64,
    pub capped_count: u64,
    /// Paths with exactly `n` jumps by `t`, among paths stopped at the horizon.
    pub jump_counts: Vec<u64>,
}

fn std_err(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

impl MCEstimate {
    pub fn count(&self, y: usize) -> u64 {
        self.states.iter().find(|s| s.state == y).map_or(0, |s| s.count)
    }

    pub fn p_hat(&self, y: usize) -> f64 {
        self.count(y) as f64 / self.n_paths as f64
    }

    pub fn std_err(&self, y: usize) -> f64 {
        std_err(self.p_hat(y), self.n_paths)
    }

    pub fn explosion_frequency(&self) -> f64 {
        self.explosion_count as f64 / self.n_paths as f64
    }

    pub fn explosion_std_err(&self) -> f64 {
        std_err(self.explosion_frequency(), self.n_paths)
    }

    /// Frequency of exactly `n` jumps by `t` and its standard error.
    pub fn jump_count_frequency(&self, n: usize) -> (f64, f64) {
        let p = self.jump_counts.get(n).copied().unwrap_or(0) as f64 / self.n_paths as f64;
        (p, std_err(p, self.n_paths))
    }

    /// Writes `seed,state,count,p_hat,std_err`; the categories outside the
    /// state table use the states `outside`, `exploded` and `capped`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seed", "state", "count", "p_hat", "std_err"])?;
        let n = self.n_paths;
        let row = |label: &str, count: u64| {
            let p = count as f64 / n as f64;
            [self.rng_seed.to_string(), label.to_string(), count.to_string(), p.to_string(), std_err(p, n).to_string()]
        };
        for s in &self.states {
            w.write_record(row(&s.label, s.count))?;
        }
        w.write_record(row("outside", self.outside_count))?;
        w.write_record(row("exploded", self.explosion_count))?;
        w.write_record(row("capped", self.capped_count))?;
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Default)]
struct Tally {
    counts: BTreeMap<usize, u64>,
    outside: u64,
    exploded: u64,
    capped: u64,
    jumps: Vec<u64>,
}

impl Tally {
    fn add(mut self, w: Walk, trunc: Option<Truncation>) -> Self {
        if w.exploded {
            self.exploded += 1;
        } else if w.stop != StopReason::Horizon {
            self.capped += 1;
        } else {
            if self.jumps.len() <= w.jumps {
                self.jumps.resize(w.jumps + 1, 0);
            }
            self.jumps[w.jumps] += 1;
            if trunc.is_none_or(|t| t.contains(w.state)) {
                *self.counts.entry(w.state).or_default() += 1;
            } else {
                self.outside += 1;
            }
        }
        self
    }

    fn merge(mut self, other: Tally) -> Self {
        for (y, c) in other.counts {
            *self.counts.entry(y).or_default() += c;
        }
        self.outside += other.outside;
        self.exploded += other.exploded;
        self.capped += other.capped;
        if self.jumps.len() < other.jumps.len() {
            self.jumps.resize(other.jumps.len(), 0);
        }
        for (a, b) in self.jumps.iter_mut().zip(other.jumps) {
            *a += b;
        }
        self
    }
}

/// Runs `n_paths` independent paths from `(u, x)` to `t`; path `i` uses
/// [`path_rng`]`(seed, i)`, so the result does not depend on scheduling.
pub fn mc_estimate(model: &QModel, u: f64, x: usize, t: f64, n_paths: u64, seed: u64, opts: &McOptions) -> Result<MCEstimate> {
    if n_paths == 0 {
        return Err(Error::Argument("need at least one path".into()));
    }
    check_horizon(model, u, t)?;
    let trunc = opts.truncation;
    let tally = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            walk(model, x, u, t, opts.jump_cap, &mut rng, |_, _| {})
        })
        .try_fold(Tally::default, |acc, w| w.map(|w| acc.add(w, trunc)))
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    let states = tally
        .counts
        .iter()
        .map(|(&y, &count)| {
            let p = count as f64 / n_paths as f64;
            StateEstimate { state: y, label: model.label(y), count, p_hat: p, std_err: std_err(p, n_paths) }
        })
        .collect();
    Ok(MCEstimate {
        model: model.name().to_string(),
        u,
        x,
        t,
        n_paths,
        rng_seed: seed,
        generator: GENERATOR.to_string(),
        jump_cap: opts.jump_cap,
        states,
        outside_count: tally.outside,
        explosion_count: tally.exploded,
        capped_count: tally.capped,
        jump_counts: tally.jumps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::state::signed_to_index;

    fn within(p_hat: f64, p: f64, n: u64, k: f64) -> bool {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        (p_hat - p).abs() <= k * se
    }

    #[test]
    fn holding_examples() {
        let mut rng = path_rng(7, 0);
        for _ in 0..100 {
            assert_eq!(sample_holding(&models::zero(), 0, 0.0, &mut rng).unwrap(), Holding::NoJump);
        }
        // Constant rate 2: τ = E/2.
        let p = models::poisson(2.0);
        assert_eq!(holding_for(&p, 0, 0.0, f64::INFINITY, 1.3).unwrap(), Holding::Jump(0.65));
        // Reciprocal: Λ(0, τ) = -log(1 - τ).
        let rec = models::reciprocal(1.0, 1e-9).unwrap();
        for e in [0.1, 1.0, 5.0] {
            match holding_for(&rec, 0, 0.0, f64::INFINITY, e).unwrap() {
                Holding::Jump(tau) => assert!((tau - (1.0 - (-e).exp())).abs() < 1e-9, "{tau}"),
                h => panic!("{h:?}"),
            }
        }
        // Beyond the admissible end there is no jump.
        assert_eq!(holding_for(&rec, 0, 0.0, f64::INFINITY, 30.0).unwrap(), Holding::NoJump);
        assert_eq!(holding_for(&p, 0, 0.0, 0.5, 1.3).unwrap(), Holding::NoJump);
    }

    #[test]
    fn holding_mean_and_ks() {
        let p = models::poisson(2.0);
        let n = 100_000u64;
        let mut draws: Vec<f64> = (0..n)
            .map(|i| match sample_holding(&p, 0, 0.0, &mut path_rng(11, i)).unwrap() {
                Holding::Jump(t) => t,
                Holding::NoJump => unreachable!(),
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt());
        draws.sort_by(f64::total_cmp);
        let d = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-2.0 * x).exp();
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn jump_target_examples() {
        let osc = models::oscillating(60);
        let mut rng = path_rng(3, 0);
        let n = 100_000u64;
        let mut counts = BTreeMap::new();
        for _ in 0..n {
            *counts.entry(sample_jump_target(&osc, 0, 0.5, &mut rng).unwrap()).or_insert(0u64) += 1;
        }
        for j in [-3i64, -1, 1, 2, 4] {
            let p = 0.5f64.powi(j.unsigned_abs() as i32 + 1);
            let c = counts.get(&signed_to_index(j)).copied().unwrap_or(0);
            assert!(within(c as f64 / n as f64, p, n, 4.0), "j={j}");
        }
        assert_eq!(sample_jump_target(&osc, signed_to_index(-4), 0.1, &mut rng).unwrap(), signed_to_index(4));
        assert_eq!(sample_jump_target(&models::pure_birth(2.0, 2.0), 5, 0.0, &mut rng).unwrap(), 6);
        assert!(sample_jump_target(&models::zero(), 0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn path_examples() {
        let mut rng = path_rng(1, 0);
        let path = sample_path(&models::zero(), 4, 0.0, 3.0, 100, &mut rng).unwrap();
        assert!(path.jump_times.is_empty());
        assert_eq!(path.state_at(2.0), 4);

        let path = sample_path(&models::yule(1.0), 0, 0.0, 1.0, 100, &mut rng).unwrap();
        assert!(path.jump_times.windows(2).all(|w| w[1] > w[0]));
        assert!(path.jump_times.iter().all(|&t| t <= 1.0));

        let exploded = (0..200)
            .map(|i| sample_path(&models::pure_birth(2.0, 2.0), 0, 0.0, 1.0, DEFAULT_JUMP_CAP, &mut path_rng(5, i)).unwrap())
            .filter(|p| p.exploded)
            .count();
        assert!(exploded > 60 && exploded < 180, "{exploded}");
    }

    #[test]
    fn estimates_are_deterministic_and_partition() {
        let osc = models::oscillating(60);
        let opts = McOptions { truncation: Some(Truncation::signed(5)), ..Default::default() };
        let a = mc_estimate(&osc, 0.0, 0, 1.0, 20_000, 42, &opts).unwrap();
        let b = mc_estimate(&osc, 0.0, 0, 1.0, 20_000, 42, &opts).unwrap();
        assert_eq!(a, b);
        let total: u64 = a.states.iter().map(|s| s.count).sum::<u64>() + a.outside_count + a.explosion_count + a.capped_count;
        assert_eq!(total, a.n_paths);
        assert!(within(a.p_hat(0), (-1.0f64).exp(), a.n_paths, 4.0));

        let z = mc_estimate(&models::zero(), 0.0, 3, 2.0, 100, 1, &McOptions::default()).unwrap();
        assert_eq!(z.p_hat(3), 1.0);

        let mut buf = Vec::new();
        z.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("seed,state,count,p_hat,std_err\n1,3,100,1,0\n"), "{text}");
    }

    #[test]
    fn yule_estimate() {
        let y = mc_estimate(&models::yule(1.0), 0.0, 0, 1.0, 100_000, 9, &McOptions::default()).unwrap();
        let e = (-1.0f64).exp();
        for k in 0..=5 {
            assert!(within(y.p_hat(k), e * (1.0 - e).powi(k as i32), y.n_paths, 4.0), "k={k}");
        }
    }
}
