//! Sensor selection procedures over an arbitrary set-function cost.
//!
//! Costs implement [`CostOracle`]. An oracle in complement mode is maximized
//! over the *discarded* sensors: a selector that must keep `M_i` of the `N_i`
//! sensors in set `i` instead picks `N_i - M_i` sensors to drop, and the kept
//! set is what remains. The WFC oracle works this way.
//!
//! Greedy ties are resolved in favor of keeping low-index sensors: in direct
//! mode the lowest-index candidate is picked, in complement mode (where picks
//! are discards) the highest-index one.

use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_constraints, validate_partition, NoisePartition, SelectionConstraints, SelectionResult, Step};
use crate::par::{self, Exec};
use crate::rng::{sample_without_replacement, RngStream};

/// A set function `c: 2^{0..N} -> R` to be maximized.
pub trait CostOracle: Sync {
    fn ground_size(&self) -> usize;

    /// Cost of a subset. Order and duplicates must not matter.
    fn evaluate(&self, subset: &[usize]) -> Result<f64>;

    /// When true, selectors optimize the discard set and keep its complement.
    fn complement_mode(&self) -> bool {
        false
    }

    /// Fast marginal-gain evaluator starting from the empty set. `None` makes
    /// selectors fall back to re-evaluating the cost.
    fn incremental(&self) -> Option<Box<dyn Incremental + '_>> {
        None
    }

    /// The cost as seen by a selector confined to `ground`. `None` means the
    /// cost needs no adjustment.
    fn restrict(&self, _ground: &[usize]) -> Option<Result<Box<dyn CostOracle + '_>>> {
        None
    }
}

/// Running state for marginal gains `c(S + t) - c(S)`.
pub trait Incremental {
    fn gain(&self, t: usize) -> Result<f64>;
    fn insert(&mut self, t: usize) -> Result<()>;
}

/// Gains by direct re-evaluation.
struct Recompute<'a> {
    oracle: &'a dyn CostOracle,
    current: Vec<usize>,
    base: f64,
}

impl Incremental for Recompute<'_> {
    fn gain(&self, t: usize) -> Result<f64> {
        if t >= self.oracle.ground_size() || self.current.contains(&t) {
            return Err(Error::CandidateNotAvailable { candidate: t + 1 });
        }
        let mut next = self.current.clone();
        next.push(t);
        Ok(self.oracle.evaluate(&next)? - self.base)
    }

    fn insert(&mut self, t: usize) -> Result<()> {
        if t >= self.oracle.ground_size() || self.current.contains(&t) {
            return Err(Error::CandidateNotAvailable { candidate: t + 1 });
        }
        self.current.push(t);
        self.base = self.oracle.evaluate(&self.current)?;
        Ok(())
    }
}

fn incremental_for<'a>(oracle: &'a dyn CostOracle) -> Result<Box<dyn Incremental + 'a>> {
    match oracle.incremental() {
        Some(inc) => Ok(inc),
        None => Ok(Box::new(Recompute {
            oracle,
            current: Vec::new(),
            base: oracle.evaluate(&[])?,
        })),
    }
}

/// Wraps a closure as a cost. Handy for modular or hand-built test costs.
pub struct FnOracle<F> {
    n: usize,
    f: F,
    complement: bool,
}

impl<F: Fn(&[usize]) -> f64 + Sync> FnOracle<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnOracle {
            n,
            f,
            complement: false,
        }
    }

    pub fn complement(mut self) -> Self {
        self.complement = true;
        self
    }
}

impl<F: Fn(&[usize]) -> f64 + Sync> CostOracle for FnOracle<F> {
    fn ground_size(&self) -> usize {
        self.n
    }

    fn evaluate(&self, subset: &[usize]) -> Result<f64> {
        if let Some(&bad) = subset.iter().find(|&&i| i >= self.n) {
            return Err(Error::IndexOutOfRange {
                index: bad + 1,
                n: self.n,
            });
        }
        let mut s = subset.to_vec();
        s.sort_unstable();
        s.dedup();
        Ok((self.f)(&s))
    }

    fn complement_mode(&self) -> bool {
        self.complement
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Jgs,
    Gs,
    Igs,
    Rs,
    Irs,
    Opt,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Jgs, Method::Gs, Method::Igs, Method::Rs, Method::Irs, Method::Opt];

    pub fn name(self) -> &'static str {
        match self {
            Method::Jgs => "jgs",
            Method::Gs => "gs",
            Method::Igs => "igs",
            Method::Rs => "rs",
            Method::Irs => "irs",
            Method::Opt => "opt",
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, Method::Rs | Method::Irs)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Default cap on the number of candidates exhaustive search may visit.
pub const DEFAULT_OPT_CAP: u128 = 10_000_000;

/// Greedy over candidates partitioned into groups with quotas. Returns the
/// picks in order, their gains, and per group the iteration (1-based) at which
/// its quota was met.
fn constrained_greedy(
    oracle: &dyn CostOracle,
    candidates: &[usize],
    group_of: &[usize],
    quotas: &[usize],
) -> Result<(Vec<Step>, Vec<usize>)> {
    let total: usize = quotas.iter().sum();
    let mut inc = incremental_for(oracle)?;
    let mut taken = vec![0usize; quotas.len()];
    let mut used = vec![false; oracle.ground_size()];
    let mut switches = vec![0usize; quotas.len()];
    let mut steps = Vec::with_capacity(total);
    let prefer_later = oracle.complement_mode();
    for iteration in 1..=total {
        let mut best: Option<(usize, f64)> = None;
        for &t in candidates {
            let g = group_of[t];
            if used[t] || taken[g] >= quotas[g] {
                continue;
            }
            let gain = inc.gain(t)?;
            if !gain.is_finite() {
                return Err(Error::NumericalFailure(format!("gain of sensor {} is {gain}", t + 1)));
            }
            if best.is_none_or(|(_, b)| gain > b || (prefer_later && gain == b)) {
                best = Some((t, gain));
            }
        }
        let (t, gain) = best.ok_or(Error::NotEnoughCandidates {
            need: total,
            have: iteration - 1,
        })?;
        inc.insert(t)?;
        used[t] = true;
        let g = group_of[t];
        taken[g] += 1;
        if taken[g] == quotas[g] {
            switches[g] = iteration;
        }
        steps.push(Step { iteration, index: t, gain });
    }
    Ok((steps, switches))
}

/// Trajectory of adding `order` one sensor at a time, with the iteration at
/// which each group reached its quota.
fn replay(
    oracle: &dyn CostOracle,
    order: &[usize],
    group_of: &[usize],
    quotas: &[usize],
) -> Result<(Vec<Step>, Vec<usize>)> {
    let mut inc = incremental_for(oracle)?;
    let mut taken = vec![0usize; quotas.len()];
    let mut switches = vec![0usize; quotas.len()];
    let mut steps = Vec::with_capacity(order.len());
    for (k, &t) in order.iter().enumerate() {
        let gain = inc.gain(t)?;
        inc.insert(t)?;
        let g = group_of[t];
        taken[g] += 1;
        if taken[g] == quotas[g] {
            switches[g] = k + 1;
        }
        steps.push(Step {
            iteration: k + 1,
            index: t,
            gain,
        });
    }
    Ok((steps, switches))
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Per-set quotas in objective space.
fn objective_quotas(oracle: &dyn CostOracle, noise: &NoisePartition, constraints: &SelectionConstraints) -> Vec<usize> {
    if oracle.complement_mode() {
        noise.set_sizes().iter().zip(&constraints.counts).map(|(n, m)| n - m).collect()
    } else {
        constraints.counts.clone()
    }
}

fn check_inputs(oracle: &dyn CostOracle, noise: &NoisePartition, constraints: &SelectionConstraints) -> Result<()> {
    validate_partition(noise, oracle.ground_size())?;
    validate_constraints(noise, constraints)
}

/// Kept sets from an objective set, per partition set.
fn kept_from_objective(oracle: &dyn CostOracle, noise: &NoisePartition, objective: &[usize]) -> Vec<Vec<usize>> {
    let mut in_obj = vec![false; oracle.ground_size()];
    for &i in objective {
        in_obj[i] = true;
    }
    let keep_flag = !oracle.complement_mode();
    noise
        .sets
        .iter()
        .map(|set| set.iter().copied().filter(|&i| in_obj[i] == keep_flag).collect())
        .collect()
}

fn finish(
    oracle: &dyn CostOracle,
    noise: &NoisePartition,
    objective: Vec<usize>,
    trajectory: Vec<Step>,
    switch_iterations: Vec<usize>,
    constraints: Option<&SelectionConstraints>,
) -> Result<SelectionResult> {
    let objective = sorted(objective);
    let final_cost = oracle.evaluate(&objective)?;
    let kept = kept_from_objective(oracle, noise, &objective);
    let feasible = constraints.is_none_or(|c| kept.iter().zip(&c.counts).all(|(k, &m)| k.len() == m));
    Ok(SelectionResult {
        kept,
        objective_set: objective,
        trajectory,
        switch_iterations,
        final_cost,
        feasible,
    })
}

/// Plain greedy maximization: `m` picks from `ground`. The picks form the
/// objective set; in complement mode the kept set is `ground` minus the picks.
pub fn greedy_homogeneous(oracle: &dyn CostOracle, ground: &[usize], m: usize) -> Result<SelectionResult> {
    let n = oracle.ground_size();
    let ground = {
        let mut g = ground.to_vec();
        g.sort_unstable();
        g.dedup();
        g
    };
    if let Some(&bad) = ground.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad + 1, n });
    }
    if m > ground.len() {
        return Err(Error::NotEnoughCandidates {
            need: m,
            have: ground.len(),
        });
    }
    let group_of = vec![0; n];
    let (steps, switches) = constrained_greedy(oracle, &ground, &group_of, &[m])?;
    let objective = sorted(steps.iter().map(|s| s.index).collect());
    let final_cost = oracle.evaluate(&objective)?;
    let kept = if oracle.complement_mode() {
        ground.iter().copied().filter(|i| objective.binary_search(i).is_err()).collect()
    } else {
        objective.clone()
    };
    Ok(SelectionResult {
        kept: vec![kept],
        objective_set: objective,
        trajectory: steps,
        switch_iterations: switches,
        final_cost,
        feasible: true,
    })
}

/// Joint greedy selection: one greedy pass over all sets at once, where a set
/// leaves the candidate pool as soon as its quota is filled.
pub fn jgs(oracle: &dyn CostOracle, noise: &NoisePartition, constraints: &SelectionConstraints) -> Result<SelectionResult> {
    check_inputs(oracle, noise, constraints)?;
    let quotas = objective_quotas(oracle, noise, constraints);
    let candidates: Vec<usize> = (0..oracle.ground_size()).collect();
    let (steps, switches) = constrained_greedy(oracle, &candidates, &noise.membership(), &quotas)?;
    let objective = steps.iter().map(|s| s.index).collect();
    finish(oracle, noise, objective, steps, switches, Some(constraints))
}

/// Greedy over the whole network for the total count, ignoring the per-set
/// split. The result is flagged infeasible when the split comes out wrong.
pub fn gs(oracle: &dyn CostOracle, noise: &NoisePartition, constraints: &SelectionConstraints) -> Result<SelectionResult> {
    check_inputs(oracle, noise, constraints)?;
    let n = oracle.ground_size();
    let m = if oracle.complement_mode() {
        n - constraints.total()
    } else {
        constraints.total()
    };
    let candidates: Vec<usize> = (0..n).collect();
    let (steps, _) = constrained_greedy(oracle, &candidates, &vec![0; n], &[m])?;
    let objective: Vec<usize> = steps.iter().map(|s| s.index).collect();
    let membership = noise.membership();
    let quotas = objective_quotas(oracle, noise, constraints);
    let mut taken = vec![0; quotas.len()];
    let mut switches = vec![0; quotas.len()];
    for s in &steps {
        let g = membership[s.index];
        taken[g] += 1;
        if taken[g] == quotas[g] {
            switches[g] = s.iteration;
        }
    }
    finish(oracle, noise, objective, steps, switches, Some(constraints))
}

/// Independent greedy: each set is handled alone with the cost restricted to
/// that set. The reported trajectory replays the picks on the full cost.
pub fn igs(oracle: &dyn CostOracle, noise: &NoisePartition, constraints: &SelectionConstraints) -> Result<SelectionResult> {
    check_inputs(oracle, noise, constraints)?;
    let quotas = objective_quotas(oracle, noise, constraints);
    let mut order = Vec::new();
    for (set, &quota) in noise.sets.iter().zip(&quotas) {
        let owned;
        let local: &dyn CostOracle = match oracle.restrict(set) {
            Some(r) => {
                owned = r?;
                &*owned
            }
            None => oracle,
        };
        let group_of = vec![0; oracle.ground_size()];
        let (steps, _) = constrained_greedy(local, set, &group_of, &[quota])?;
        order.extend(steps.iter().map(|s| s.index));
    }
    let (steps, switches) = replay(oracle, &order, &noise.membership(), &quotas)?;
    finish(oracle, noise, order, steps, switches, Some(constraints))
}

fn from_kept(
    oracle: &dyn CostOracle,
    noise: &NoisePartition,
    constraints: &SelectionConstraints,
    kept: &[Vec<usize>],
) -> Result<SelectionResult> {
    let objective: Vec<usize> = if oracle.complement_mode() {
        noise
            .sets
            .iter()
            .zip(kept)
            .flat_map(|(set, k)| set.iter().copied().filter(|i| !k.contains(i)).collect::<Vec<_>>())
            .collect()
    } else {
        kept.iter().flatten().copied().collect()
    };
    let objective = sorted(objective);
    let quotas = objective_quotas(oracle, noise, constraints);
    let (steps, switches) = replay(oracle, &objective, &noise.membership(), &quotas)?;
    finish(oracle, noise, objective, steps, switches, Some(constraints))
}

/// Independent random selection: `M_i` sensors drawn uniformly from each set.
pub fn irs(
    oracle: &dyn CostOracle,
    noise: &NoisePartition,
    constraints: &SelectionConstraints,
    stream: RngStream,
) -> Result<SelectionResult> {
    check_inputs(oracle, noise, constraints)?;
    let mut rng = stream.rng();
    let kept: Vec<Vec<usize>> = noise
        .sets
        .iter()
        .zip(&constraints.counts)
        .map(|(set, &m)| sample_without_replacement(&mut rng, set, m))
        .collect();
    from_kept(oracle, noise, constraints, &kept)
}

/// Attempts random selection makes before falling back to per-set sampling.
pub const RS_MAX_ATTEMPTS: usize = 10_000;

/// Random selection of `M` sensors from the whole network, redrawn until the
/// per-set counts come out right.
pub fn rs(
    oracle: &dyn CostOracle,
    noise: &NoisePartition,
    constraints: &SelectionConstraints,
    stream: RngStream,
) -> Result<SelectionResult> {
    check_inputs(oracle, noise, constraints)?;
    let mut rng = stream.rng();
    let n = oracle.ground_size();
    let all: Vec<usize> = (0..n).collect();
    let membership = noise.membership();
    for _ in 0..RS_MAX_ATTEMPTS {
        let draw = sample_without_replacement(&mut rng, &all, constraints.total());
        let mut counts = vec![0; noise.n_sets()];
        for &i in &draw {
            counts[membership[i]] += 1;
        }
        if counts == constraints.counts {
            let kept: Vec<Vec<usize>> = noise
                .sets
                .iter()
                .map(|set| set.iter().copied().filter(|i| draw.binary_search(i).is_ok()).collect())
                .collect();
            return from_kept(oracle, noise, constraints, &kept);
        }
    }
    static WARNED: std::sync::Once = std::sync::Once::new();
    WARNED.call_once(|| {
        warn!("random selection missed the per-set counts {RS_MAX_ATTEMPTS} times, sampling each set independently (logged once per process)")
    });
    let kept: Vec<Vec<usize>> = noise
        .sets
        .iter()
        .zip(&constraints.counts)
        .map(|(set, &m)| sample_without_replacement(&mut rng, set, m))
        .collect();
    from_kept(oracle, noise, constraints, &kept)
}

/// Exact `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays exact because acc = C(n, i).
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    let n = items.len();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OptOptions {
    pub cap: u128,
    pub exec: Exec,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            cap: DEFAULT_OPT_CAP,
            exec: Exec::default(),
        }
    }
}

/// Number of feasible kept configurations, `prod_i C(N_i, M_i)`.
pub fn search_space(noise: &NoisePartition, constraints: &SelectionConstraints) -> u128 {
    noise
        .sets
        .iter()
        .zip(&constraints.counts)
        .fold(1u128, |acc, (set, &m)| acc.saturating_mul(binomial(set.len(), m)))
}

/// Exhaustive search over every feasible kept configuration. Among equal
/// costs the lexicographically smallest kept set wins.
pub fn exhaustive_opt(
    oracle: &dyn CostOracle,
    noise: &NoisePartition,
    constraints: &SelectionConstraints,
    options: OptOptions,
) -> Result<SelectionResult> {
    check_inputs(oracle, noise, constraints)?;
    let cardinality = search_space(noise, constraints);
    if cardinality > options.cap {
        return Err(Error::SearchSpaceTooLarge {
            cardinality,
            cap: options.cap,
        });
    }
    let per_set: Vec<Vec<Vec<usize>>> = noise
        .sets
        .iter()
        .zip(&constraints.counts)
        .map(|(set, &m)| combinations(set, m))
        .collect();
    let total = cardinality as usize;
    let complement = oracle.complement_mode();
    let n = oracle.ground_size();

    let candidate = |mut flat: usize| -> (Vec<usize>, Vec<usize>) {
        let mut kept = Vec::new();
        for combos in per_set.iter().rev() {
            kept.extend_from_slice(&combos[flat % combos.len()]);
            flat /= combos.len();
        }
        kept.sort_unstable();
        let objective = if complement {
            let mut mask = vec![false; n];
            kept.iter().for_each(|&i| mask[i] = true);
            (0..n).filter(|&i| !mask[i]).collect()
        } else {
            kept.clone()
        };
        (kept, objective)
    };
    let better = |a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);

    let chunk = 4096;
    let n_chunks = total.div_ceil(chunk);
    let winners: Vec<Result<Option<(f64, Vec<usize>)>>> = par::map_range(n_chunks, options.exec, |c| {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for flat in c * chunk..((c + 1) * chunk).min(total) {
            let (kept, objective) = candidate(flat);
            let value = oracle.evaluate(&objective)?;
            if value.is_nan() {
                return Err(Error::NumericalFailure("cost evaluated to NaN".into()));
            }
            let cand = (value, kept);
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
        Ok(best)
    });
    let mut best: Option<(f64, Vec<usize>)> = None;
    for w in winners {
        if let Some(cand) = w? {
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    let (_, kept_union) = best.ok_or(Error::EmptySelection)?;
    let kept: Vec<Vec<usize>> = noise
        .sets
        .iter()
        .map(|set| set.iter().copied().filter(|i| kept_union.binary_search(i).is_ok()).collect())
        .collect();
    from_kept(oracle, noise, constraints, &kept)
}

/// Runs one selector by name. `stream` feeds the random selectors only.
pub fn run_method(
    method: Method,
    oracle: &dyn CostOracle,
    noise: &NoisePartition,
    constraints: &SelectionConstraints,
    stream: RngStream,
    opt: OptOptions,
) -> Result<SelectionResult> {
    match method {
        Method::Jgs => jgs(oracle, noise, constraints),
        Method::Gs => gs(oracle, noise, constraints),
        Method::Igs => igs(oracle, noise, constraints),
        Method::Rs => rs(oracle, noise, constraints, stream),
        Method::Irs => irs(oracle, noise, constraints, stream),
        Method::Opt => exhaustive_opt(oracle, noise, constraints, opt),
    }
}
