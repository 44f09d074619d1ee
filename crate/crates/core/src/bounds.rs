//! Performance guarantees for joint greedy selection and the frame quantities
//! that turn a WFP guarantee into an MSE guarantee.
//!
//! Notation: with two sets, the set whose quota fills first has quota `M_i`,
//! the other `M_i'`, and the fill happens at iteration `m_s`.

use nalgebra::DVector;
use serde::Serialize;

use crate::costs::{fim_from_rows, hermitian_eigenvalues};
use crate::error::{Error, Result};
use crate::model::{row_energies, MeasurementModel, NoisePartition, C64};
use crate::par::{self, Exec};
use crate::rng::{sample_without_replacement, RngStream};
use crate::selectors::binomial;

/// Floor that joint greedy selection achieves for any number of sets.
pub const UNIVERSAL_FLOOR: f64 = 0.5;

/// Guarantee after `m` unconstrained greedy steps with `M1 + M2` picks in
/// total: `1 - (1 - 1/(M1+M2))^m`. Zero steps give zero.
pub fn greedy_prefix_bound(m: usize, m1: usize, m2: usize) -> f64 {
    let total = m1 + m2;
    if m == 0 || total == 0 {
        return 0.0;
    }
    let q = 1.0 - 1.0 / total as f64;
    1.0 - q.powf(m as f64)
}

/// Two-set guarantee for the set that fills first (`quota`) against the other
/// (`other_quota`), when the first fills at iteration `switch`.
pub fn two_set_bound(quota: usize, other_quota: usize, switch: usize) -> Result<f64> {
    if quota < 1 || other_quota < quota + 1 {
        return Err(Error::DomainViolation(format!(
            "two-set bound needs 1 <= M_i < M_i' (got M_i={quota}, M_i'={other_quota})"
        )));
    }
    let total = quota + other_quota;
    if switch < quota || switch > total - 1 {
        return Err(Error::DomainViolation(format!(
            "switch iteration {switch} outside {quota}..={}",
            total - 1
        )));
    }
    let mi = quota as f64;
    let mp = other_quota as f64;
    let r = 1.0 - (1.0 + mi) / mp;
    let q = 1.0 - 1.0 / total as f64;
    let n = (total - switch) as i32;
    // The geometric sum, written through its fixed point 1/(M_i+1) so that
    // large horizons do not accumulate rounding.
    let fixed = 1.0 / (mi + 1.0);
    let tail = r.powi(n) * (mi / (mi + 1.0) - q.powf(switch as f64));
    Ok(fixed + tail)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    #[serde(rename = "M1")]
    pub quota: usize,
    #[serde(rename = "M2")]
    pub other_quota: usize,
    #[serde(rename = "ms")]
    pub switch: usize,
    #[serde(rename = "thm1")]
    pub floor: f64,
    #[serde(rename = "thm2")]
    pub two_set: Option<f64>,
    pub combined: f64,
}

/// The best applicable guarantee: the two-set bound when it is defined,
/// never below the universal floor.
pub fn combined_bound(quota: usize, other_quota: usize, switch: usize) -> BoundReport {
    let two_set = two_set_bound(quota, other_quota, switch).ok();
    BoundReport {
        quota,
        other_quota,
        switch,
        floor: UNIVERSAL_FLOOR,
        two_set,
        combined: two_set.map_or(UNIVERSAL_FLOOR, |b| b.max(UNIVERSAL_FLOOR)),
    }
}

/// Guarantee for a finished greedy run given its per-set quotas (in the
/// objective space, i.e. discard counts for complement-mode costs) and the
/// iterations at which they filled. Anything but two active sets gets the
/// universal floor.
pub fn bound_for_run(quotas: &[usize], switch_iterations: &[usize]) -> BoundReport {
    let active: Vec<usize> = (0..quotas.len()).filter(|&i| quotas[i] > 0).collect();
    if active.len() != 2 {
        return BoundReport {
            quota: quotas.first().copied().unwrap_or(0),
            other_quota: quotas.get(1).copied().unwrap_or(0),
            switch: 0,
            floor: UNIVERSAL_FLOOR,
            two_set: None,
            combined: UNIVERSAL_FLOOR,
        };
    }
    let (a, b) = (active[0], active[1]);
    let (first, second) = if (switch_iterations[a], a) <= (switch_iterations[b], b) {
        (a, b)
    } else {
        (b, a)
    };
    combined_bound(quotas[first], quotas[second], switch_iterations[first])
}

#[derive(Clone, Debug, PartialEq)]
pub enum CurveSpec {
    /// One row per switch iteration from `m1` to `m1 + m2 - 1`.
    VarySwitch { m1: usize, m2: usize },
    /// One row per `(m1, m2)` pair; the switch defaults to `m1 + m2 - 1`.
    VarySizes {
        m1: Vec<usize>,
        m2: Vec<usize>,
        switch: Option<usize>,
    },
    /// A single evaluation.
    Point { m1: usize, m2: usize, switch: usize },
}

pub fn bound_curve(spec: &CurveSpec) -> Result<Vec<BoundReport>> {
    let rows = match spec {
        CurveSpec::VarySwitch { m1, m2 } => {
            if m1 + m2 == 0 {
                return Err(Error::DomainViolation("empty switch range".into()));
            }
            (*m1..m1 + m2).map(|s| combined_bound(*m1, *m2, s)).collect()
        }
        CurveSpec::VarySizes { m1, m2, switch } => {
            if m1.is_empty() || m2.is_empty() {
                return Err(Error::DomainViolation("size grid is empty".into()));
            }
            let mut rows = Vec::with_capacity(m1.len() * m2.len());
            for &a in m1 {
                for &b in m2 {
                    let s = switch.unwrap_or((a + b).saturating_sub(1));
                    rows.push(combined_bound(a, b, s));
                }
            }
            rows
        }
        CurveSpec::Point { m1, m2, switch } => vec![combined_bound(*m1, *m2, *switch)],
    };
    Ok(rows)
}

/// `(1 + WFP(all) / WFP(optimum)) / 2`.
pub fn wfp_approximation_factor(wfp_full: f64, wfp_opt: f64) -> Result<f64> {
    if !(wfp_opt > 0.0) {
        return Err(Error::DegenerateOptimum(wfp_opt));
    }
    if wfp_full < wfp_opt * (1.0 - 1e-12) {
        return Err(Error::DomainViolation(format!(
            "full frame potential {wfp_full} below the optimum {wfp_opt}"
        )));
    }
    Ok(0.5 * (1.0 + wfp_full / wfp_opt))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaSearch {
    /// Every subset of the requested size; at most [`EXACT_DELTA_LIMIT`].
    Exact,
    /// Random subsets; gives a lower estimate of the spread.
    Sampled { subsets: usize, stream: RngStream },
}

pub const EXACT_DELTA_LIMIT: u128 = 1_000_000;
pub const DEFAULT_SAMPLED_SUBSETS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameDiagnostics {
    /// Mean squared row norm.
    pub d: f64,
    /// Largest deviation of a subset information-matrix eigenvalue from `d`.
    pub delta: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub gamma: Option<f64>,
    /// `((d+delta)/(d-delta))^2 * alpha_max/alpha_min`, absent when `delta >= d`.
    pub kappa: Option<f64>,
    pub zeta: Option<f64>,
    pub exact_delta: bool,
    pub subsets_inspected: usize,
}

impl FrameDiagnostics {
    /// `(kappa, zeta)`, or why they do not exist.
    pub fn mse_factors(&self) -> Result<(f64, f64)> {
        match (self.kappa, self.zeta) {
            (Some(k), Some(z)) => Ok((k, z)),
            (None, _) => Err(Error::DeltaExceedsD {
                delta: self.delta,
                d: self.d,
            }),
            (Some(_), None) => Err(Error::InvalidConfig("no approximation factor supplied".into())),
        }
    }
}

/// Rank-`rank` combination of `k` out of `0..n` in lexicographic order.
fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for remaining in (1..=k).rev() {
        loop {
            let with_next = binomial(n - next - 1, remaining - 1);
            if rank < with_next {
                break;
            }
            rank -= with_next;
            next += 1;
        }
        out.push(next);
        next += 1;
    }
    out
}

fn advance_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
        return false;
    };
    idx[pos] += 1;
    for j in pos + 1..k {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

/// Frame quantities behind the MSE guarantee for keeping `m` sensors.
/// `gamma`, when given, is folded into `zeta`.
pub fn frame_diagnostics(
    model: &MeasurementModel,
    noise: &NoisePartition,
    x0: Option<&DVector<C64>>,
    weights: &[f64],
    m: usize,
    search: DeltaSearch,
    gamma: Option<f64>,
) -> Result<FrameDiagnostics> {
    let rows = model.sensing_rows(x0)?;
    let (n, k) = (rows.nrows(), rows.ncols());
    if m <= k || m > n {
        return Err(Error::DomainViolation(format!(
            "subset size {m} must exceed the parameter count {k} and not exceed {n}"
        )));
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch(format!("{} weights for {n} sensors", weights.len())));
    }
    let sigmas = noise.sensor_sigmas();
    let energies = row_energies(&rows);
    let d = energies.iter().sum::<f64>() / n as f64;

    let spread = |subset: &[usize]| -> Result<f64> {
        let eig = hermitian_eigenvalues(&fim_from_rows(&rows, &sigmas, subset)?)?;
        Ok((eig[k - 1] - d).max(d - eig[0]))
    };
    let max_spread = |spreads: Vec<Result<f64>>| -> Result<f64> {
        spreads.into_iter().try_fold(0.0f64, |acc, s| Ok(acc.max(s?)))
    };

    let (delta, exact, inspected) = match search {
        DeltaSearch::Exact => {
            let count = binomial(n, m);
            if count > EXACT_DELTA_LIMIT {
                return Err(Error::SearchSpaceTooLarge {
                    cardinality: count,
                    cap: EXACT_DELTA_LIMIT,
                });
            }
            let count = count as usize;
            let chunk = 2048;
            let spreads = par::map_range(count.div_ceil(chunk), Exec::default(), |c| {
                let mut idx = unrank_combination(n, m, (c * chunk) as u128);
                let mut worst = 0.0f64;
                for _ in c * chunk..((c + 1) * chunk).min(count) {
                    worst = worst.max(spread(&idx)?);
                    advance_combination(&mut idx, n);
                }
                Ok(worst)
            });
            (max_spread(spreads)?, true, count)
        }
        DeltaSearch::Sampled { subsets, stream } => {
            let mut rng = stream.rng();
            let pool: Vec<usize> = (0..n).collect();
            let draws: Vec<Vec<usize>> = (0..subsets)
                .map(|_| sample_without_replacement(&mut rng, &pool, m))
                .collect();
            let spreads = par::map_range(draws.len(), Exec::default(), |i| spread(&draws[i]));
            (max_spread(spreads)?, false, subsets)
        }
    };

    let mut alpha: Vec<f64> = weights.iter().zip(&energies).map(|(w, e)| w * w * e).collect();
    alpha.sort_by(f64::total_cmp);
    let alpha_min: f64 = alpha[..m].iter().sum();
    let alpha_max: f64 = alpha[n - m..].iter().sum();
    if !(alpha_min > 0.0) {
        return Err(Error::NumericalFailure("smallest weighted row-energy sum is not positive".into()));
    }

    let kappa = (delta < d).then(|| ((d + delta) / (d - delta)).powi(2) * alpha_max / alpha_min);
    let zeta = kappa.zip(gamma).map(|(k, g)| k * g);
    Ok(FrameDiagnostics {
        d,
        delta,
        alpha_max,
        alpha_min,
        gamma,
        kappa,
        zeta,
        exact_delta: exact,
        subsets_inspected: inspected,
    })
}
