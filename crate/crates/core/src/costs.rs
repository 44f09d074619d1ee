//! Noise-aware weights, the pairwise Gram table behind the weighted frame
//! potential (WFP), the weighted frame cost (WFC) and the Fisher-information
//! proxies used as selection objectives.
//!
//! For sensing rows `g_i` and weights `w_i`:
//!
//! ```text
//! G[i][j] = w_i w_j |<g_i, g_j>|^2 / (|g_i|^2 |g_j|^2)
//! WFP(S)  = sum_{i,j in S} G[i][j]
//! WFC(T)  = WFP(all) - WFP(all \ T)
//! ```
//!
//! WFC is normalized, monotone and submodular, so the greedy selectors carry
//! their approximation guarantees when maximizing it. Maximizing WFC over a
//! discard set minimizes the WFP of the kept sensors, which is why the WFC
//! oracle runs in complement mode.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{row_energies, MeasurementModel, NoisePartition, C64};
use crate::par::{self, Exec};
use crate::selectors::{CostOracle, Incremental};

/// Maps a sensor's noise deviation to its non-negative weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightRule {
    /// `1 / sigma`
    #[serde(rename = "recip")]
    Reciprocal,
    /// `1 / (1 + sigma)`
    #[serde(rename = "shifted")]
    ShiftedReciprocal,
    /// `1 / (1 + exp(-(sigma - mean)))`
    #[default]
    Sigmoid,
    /// `(1 + tanh(sigma - mean)) / 2`
    #[serde(rename = "tanh")]
    TanhShifted,
    /// Constant 1, which reduces WFP to the plain frame potential.
    Unit,
}

impl WeightRule {
    pub const NAMES: [&'static str; 5] = ["recip", "shifted", "sigmoid", "tanh", "unit"];

    pub fn name(self) -> &'static str {
        match self {
            WeightRule::Reciprocal => "recip",
            WeightRule::ShiftedReciprocal => "shifted",
            WeightRule::Sigmoid => "sigmoid",
            WeightRule::TanhShifted => "tanh",
            WeightRule::Unit => "unit",
        }
    }

    /// Weight of one sensor given the mean deviation over all sensors.
    pub fn weight(self, sigma: f64, mean_sigma: f64) -> f64 {
        match self {
            WeightRule::Reciprocal => 1.0 / sigma,
            WeightRule::ShiftedReciprocal => 1.0 / (1.0 + sigma),
            WeightRule::Sigmoid => 1.0 / (1.0 + (-(sigma - mean_sigma)).exp()),
            WeightRule::TanhShifted => 0.5 * (1.0 + (sigma - mean_sigma).tanh()),
            WeightRule::Unit => 1.0,
        }
    }
}

impl FromStr for WeightRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "recip" => WeightRule::Reciprocal,
            "shifted" => WeightRule::ShiftedReciprocal,
            "sigmoid" => WeightRule::Sigmoid,
            "tanh" => WeightRule::TanhShifted,
            "unit" => WeightRule::Unit,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown weight rule {other:?}, expected one of {:?}",
                    WeightRule::NAMES
                )))
            }
        })
    }
}

/// Per-sensor weights. The mean deviation is taken over all sensors, each
/// counted once.
pub fn compute_weights(noise: &NoisePartition, rule: WeightRule) -> Result<Vec<f64>> {
    for (i, &sigma) in noise.sigmas.iter().enumerate() {
        if !(sigma > 0.0) {
            return Err(Error::NonpositiveSigma { set: i + 1, sigma });
        }
    }
    let sigmas = noise.sensor_sigmas();
    let mean = sigmas.iter().sum::<f64>() / sigmas.len().max(1) as f64;
    Ok(sigmas.iter().map(|&s| rule.weight(s, mean)).collect())
}

/// Weighted, normalized pairwise correlations of the sensing rows.
#[derive(Clone, Debug, PartialEq)]
pub struct GramTable {
    n: usize,
    entries: Vec<f64>,
    weights: Vec<f64>,
    full: f64,
}

impl GramTable {
    /// Builds the table from explicit sensing rows.
    pub fn from_rows(rows: &DMatrix<C64>, weights: &[f64]) -> Result<Self> {
        let n = rows.nrows();
        if weights.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {n} sensing rows",
                weights.len()
            )));
        }
        let energies = row_energies(rows);
        if let Some(row) = energies.iter().position(|&e| !(e > 0.0)) {
            return Err(Error::ZeroRow { row: row + 1 });
        }
        let k = rows.ncols();
        // Row-major copy of the normalized rows for cache-friendly dot products.
        let unit: Vec<C64> = (0..n)
            .flat_map(|i| {
                let scale = 1.0 / energies[i].sqrt();
                (0..k).map(move |j| rows[(i, j)] * scale)
            })
            .collect();
        let upper: Vec<Vec<f64>> = par::map_range(n, Exec::default(), |i| {
            let gi = &unit[i * k..(i + 1) * k];
            (i + 1..n)
                .map(|j| {
                    let gj = &unit[j * k..(j + 1) * k];
                    let dot: C64 = gi.iter().zip(gj).map(|(a, b)| a * b.conj()).sum();
                    weights[i] * weights[j] * dot.norm_sqr().min(1.0)
                })
                .collect()
        });
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = weights[i] * weights[i];
            for (off, &v) in upper[i].iter().enumerate() {
                let j = i + 1 + off;
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Ok(GramTable::from_entries(n, entries, weights.to_vec()))
    }

    /// Wraps a precomputed symmetric table. Used by property tests that draw
    /// tables directly.
    pub fn from_entries(n: usize, entries: Vec<f64>, weights: Vec<f64>) -> Self {
        assert_eq!(entries.len(), n * n);
        let full = entries.iter().sum();
        GramTable {
            n,
            entries,
            weights,
            full,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// WFP of the full sensor set.
    pub fn wfp_full(&self) -> f64 {
        self.full
    }

    fn mask(&self, subset: &[usize]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.n];
        for &i in subset {
            if i >= self.n {
                return Err(Error::IndexOutOfRange {
                    index: i + 1,
                    n: self.n,
                });
            }
            mask[i] = true;
        }
        Ok(mask)
    }

    fn wfp_mask(&self, mask: &[bool]) -> f64 {
        let members: Vec<usize> = (0..self.n).filter(|&i| mask[i]).collect();
        members
            .iter()
            .map(|&i| {
                let row = self.row(i);
                members.iter().map(|&j| row[j]).sum::<f64>()
            })
            .sum()
    }
}

/// Row-normalized, weighted Gram table of the model's sensing rows.
pub fn build_gram(
    model: &MeasurementModel,
    x0: Option<&DVector<C64>>,
    weights: &[f64],
) -> Result<GramTable> {
    GramTable::from_rows(&model.sensing_rows(x0)?, weights)
}

/// Weighted frame potential of `subset` (duplicates ignored).
pub fn wfp(gram: &GramTable, subset: &[usize]) -> Result<f64> {
    let mask = gram.mask(subset)?;
    Ok(gram.wfp_mask(&mask))
}

/// Weighted frame cost: `WFP(all) - WFP(all \ subset)`.
pub fn wfc(gram: &GramTable, subset: &[usize]) -> Result<f64> {
    let mut mask = gram.mask(subset)?;
    if mask.iter().all(|&m| !m) {
        return Ok(0.0);
    }
    mask.iter_mut().for_each(|m| *m = !*m);
    Ok(gram.wfp_full() - gram.wfp_mask(&mask))
}

/// WFC gain of moving `candidate` out of `complement`, in `O(|complement|)`.
pub fn wfc_delta(gram: &GramTable, complement: &[usize], candidate: usize) -> Result<f64> {
    let mask = gram.mask(complement)?;
    if candidate >= gram.len() || !mask[candidate] {
        return Err(Error::CandidateNotAvailable {
            candidate: candidate + 1,
        });
    }
    let row = gram.row(candidate);
    let cross: f64 = (0..gram.len())
        .filter(|&j| mask[j] && j != candidate)
        .map(|j| row[j])
        .sum();
    Ok(2.0 * cross + row[candidate])
}

/// WFC as a set function, optionally restricted to a sub-universe `U`:
/// `WFC_U(D) = WFP(U) - WFP(U \ D)`.
#[derive(Clone, Debug)]
pub struct WfcOracle<'a> {
    gram: &'a GramTable,
    universe: Vec<bool>,
    universe_wfp: f64,
}

impl<'a> WfcOracle<'a> {
    pub fn new(gram: &'a GramTable) -> Self {
        WfcOracle {
            gram,
            universe: vec![true; gram.len()],
            universe_wfp: gram.wfp_full(),
        }
    }

    pub fn within(gram: &'a GramTable, universe: &[usize]) -> Result<Self> {
        let mask = gram.mask(universe)?;
        let universe_wfp = gram.wfp_mask(&mask);
        Ok(WfcOracle {
            gram,
            universe: mask,
            universe_wfp,
        })
    }
}

impl CostOracle for WfcOracle<'_> {
    fn ground_size(&self) -> usize {
        self.gram.len()
    }

    fn evaluate(&self, subset: &[usize]) -> Result<f64> {
        let removed = self.gram.mask(subset)?;
        if !removed.iter().zip(&self.universe).any(|(&r, &u)| r && u) {
            return Ok(0.0);
        }
        let rest: Vec<bool> = self
            .universe
            .iter()
            .zip(&removed)
            .map(|(&u, &r)| u && !r)
            .collect();
        Ok(self.universe_wfp - self.gram.wfp_mask(&rest))
    }

    fn complement_mode(&self) -> bool {
        true
    }

    fn incremental(&self) -> Option<Box<dyn Incremental + '_>> {
        let n = self.gram.len();
        let score = (0..n)
            .map(|t| {
                let row = self.gram.row(t);
                (0..n).filter(|&j| self.universe[j]).map(|j| row[j]).sum()
            })
            .collect();
        Some(Box::new(WfcIncremental {
            gram: self.gram,
            in_complement: self.universe.clone(),
            score,
        }))
    }

    fn restrict(&self, ground: &[usize]) -> Option<Result<Box<dyn CostOracle + '_>>> {
        Some(WfcOracle::within(self.gram, ground).map(|o| Box::new(o) as Box<dyn CostOracle + '_>))
    }
}

/// `score[t]` holds `sum_{j in complement} G[t][j]`, updated in `O(N)` per insert.
struct WfcIncremental<'a> {
    gram: &'a GramTable,
    in_complement: Vec<bool>,
    score: Vec<f64>,
}

impl Incremental for WfcIncremental<'_> {
    fn gain(&self, t: usize) -> Result<f64> {
        if !self.in_complement.get(t).copied().unwrap_or(false) {
            return Err(Error::CandidateNotAvailable { candidate: t + 1 });
        }
        Ok(2.0 * self.score[t] - self.gram.get(t, t))
    }

    fn insert(&mut self, t: usize) -> Result<()> {
        if !self.in_complement.get(t).copied().unwrap_or(false) {
            return Err(Error::CandidateNotAvailable { candidate: t + 1 });
        }
        self.in_complement[t] = false;
        let row = self.gram.row(t);
        for (s, &g) in self.score.iter_mut().zip(row) {
            *s -= g;
        }
        Ok(())
    }
}

/// Fisher information `A_T^H Sigma_T^-1 A_T` of a subset.
pub fn fim(
    model: &MeasurementModel,
    noise: &NoisePartition,
    x0: Option<&DVector<C64>>,
    subset: &[usize],
) -> Result<DMatrix<C64>> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let rows = model.sensing_rows(x0)?;
    let sigmas = noise.sensor_sigmas();
    fim_from_rows(&rows, &sigmas, subset)
}

pub(crate) fn fim_from_rows(
    rows: &DMatrix<C64>,
    sensor_sigmas: &[f64],
    subset: &[usize],
) -> Result<DMatrix<C64>> {
    let n = rows.nrows();
    let k = rows.ncols();
    if sensor_sigmas.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} sigmas for {n} sensors",
            sensor_sigmas.len()
        )));
    }
    let mut whitened = DMatrix::<C64>::zeros(subset.len(), k);
    for (r, &i) in subset.iter().enumerate() {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i + 1, n });
        }
        let scale = 1.0 / sensor_sigmas[i];
        for j in 0..k {
            whitened[(r, j)] = rows[(i, j)] * scale;
        }
    }
    Ok(hermitize(whitened.adjoint() * whitened))
}

pub(crate) fn hermitize(m: DMatrix<C64>) -> DMatrix<C64> {
    let adj = m.adjoint();
    (m + adj).map(|z| z * 0.5)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite eigenvalue".into()));
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// CRLB-based surrogates, all oriented so that larger is better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyKind {
    /// `-trace(Phi^-1)`
    #[serde(rename = "trace")]
    TraceCrlb,
    /// `log det(Phi)`
    LogDet,
    /// `-lambda_max(Phi^-1)`
    MaxEig,
    /// Same value as `TraceCrlb`: for linear-Gaussian models the estimator's
    /// MSE is the CRLB trace.
    NegMse,
}

impl FromStr for ProxyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "trace" => ProxyKind::TraceCrlb,
            "logdet" => ProxyKind::LogDet,
            "maxeig" => ProxyKind::MaxEig,
            "negmse" | "mse" => ProxyKind::NegMse,
            other => return Err(Error::InvalidConfig(format!("unknown proxy cost {other:?}"))),
        })
    }
}

/// Regularization added to the FIM so that subsets smaller than the
/// parameter count still have a defined proxy: `1e-8 * d`.
pub const FIM_REGULARIZATION: f64 = 1e-8;

fn proxy_from_eigenvalues(kind: ProxyKind, eigenvalues: &[f64]) -> Result<f64> {
    if eigenvalues.first().is_none_or(|&l| !(l > 0.0)) {
        return Err(Error::NumericalFailure(
            "regularized information matrix is not positive definite".into(),
        ));
    }
    Ok(match kind {
        ProxyKind::TraceCrlb | ProxyKind::NegMse => -eigenvalues.iter().map(|l| 1.0 / l).sum::<f64>(),
        ProxyKind::LogDet => eigenvalues.iter().map(|l| l.ln()).sum(),
        ProxyKind::MaxEig => -1.0 / eigenvalues[0],
    })
}

/// Proxy cost of a subset, evaluated on `Phi_T + eps I`.
pub fn proxy_cost(
    kind: ProxyKind,
    model: &MeasurementModel,
    noise: &NoisePartition,
    x0: Option<&DVector<C64>>,
    subset: &[usize],
) -> Result<f64> {
    ProxyOracle::new(kind, model, noise, x0)?.raw(subset)
}

/// Proxy costs as a set function. Values are shifted by the empty-set value so
/// the oracle is normalized; [`proxy_cost`] returns the unshifted value.
#[derive(Clone, Debug)]
pub struct ProxyOracle {
    kind: ProxyKind,
    rows: DMatrix<C64>,
    sigmas: Vec<f64>,
    epsilon: f64,
    empty_value: f64,
}

impl ProxyOracle {
    pub fn new(
        kind: ProxyKind,
        model: &MeasurementModel,
        noise: &NoisePartition,
        x0: Option<&DVector<C64>>,
    ) -> Result<Self> {
        let rows = model.sensing_rows(x0)?;
        let sigmas = noise.sensor_sigmas();
        if sigmas.len() != rows.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} sigmas for {} sensors",
                sigmas.len(),
                rows.nrows()
            )));
        }
        let d = row_energies(&rows).iter().sum::<f64>() / rows.nrows().max(1) as f64;
        let epsilon = FIM_REGULARIZATION * d;
        let k = rows.ncols() as f64;
        let empty_value = match kind {
            ProxyKind::TraceCrlb | ProxyKind::NegMse => -k / epsilon,
            ProxyKind::LogDet => k * epsilon.ln(),
            ProxyKind::MaxEig => -1.0 / epsilon,
        };
        Ok(ProxyOracle {
            kind,
            rows,
            sigmas,
            epsilon,
            empty_value,
        })
    }

    fn regularized(&self, subset: &[usize]) -> Result<DMatrix<C64>> {
        let k = self.rows.ncols();
        let mut phi = if subset.is_empty() {
            DMatrix::zeros(k, k)
        } else {
            fim_from_rows(&self.rows, &self.sigmas, subset)?
        };
        for i in 0..k {
            phi[(i, i)] += C64::new(self.epsilon, 0.0);
        }
        Ok(phi)
    }

    /// Unshifted proxy value.
    pub fn raw(&self, subset: &[usize]) -> Result<f64> {
        proxy_from_eigenvalues(self.kind, &hermitian_eigenvalues(&self.regularized(subset)?)?)
    }

    /// `a_t^H / sigma_t` as a column.
    fn column(&self, t: usize) -> DVector<C64> {
        let scale = 1.0 / self.sigmas[t];
        DVector::from_iterator(
            self.rows.ncols(),
            self.rows.row(t).iter().map(|z| z.conj() * scale),
        )
    }
}

impl CostOracle for ProxyOracle {
    fn ground_size(&self) -> usize {
        self.rows.nrows()
    }

    fn evaluate(&self, subset: &[usize]) -> Result<f64> {
        Ok(self.raw(subset)? - self.empty_value)
    }

    fn incremental(&self) -> Option<Box<dyn Incremental + '_>> {
        let k = self.rows.ncols();
        let phi = DMatrix::from_diagonal_element(k, k, C64::new(self.epsilon, 0.0));
        let inverse = DMatrix::from_diagonal_element(k, k, C64::new(1.0 / self.epsilon, 0.0));
        Some(Box::new(ProxyIncremental {
            oracle: self,
            phi,
            inverse,
            chosen: vec![false; self.rows.nrows()],
        }))
    }
}

/// Keeps `Phi_reg` and a freshly factorized inverse; candidate gains use the
/// rank-one update formulas against that inverse.
struct ProxyIncremental<'a> {
    oracle: &'a ProxyOracle,
    phi: DMatrix<C64>,
    inverse: DMatrix<C64>,
    chosen: Vec<bool>,
}

impl Incremental for ProxyIncremental<'_> {
    fn gain(&self, t: usize) -> Result<f64> {
        if self.chosen.get(t).copied().unwrap_or(true) {
            return Err(Error::CandidateNotAvailable { candidate: t + 1 });
        }
        let v = self.oracle.column(t);
        let pv = &self.inverse * &v;
        let quad = v.dotc(&pv).re;
        Ok(match self.oracle.kind {
            ProxyKind::TraceCrlb | ProxyKind::NegMse => pv.norm_squared() / (1.0 + quad),
            ProxyKind::LogDet => quad.ln_1p(),
            ProxyKind::MaxEig => {
                let updated = hermitize(&self.phi + &v * v.adjoint());
                let before = proxy_from_eigenvalues(ProxyKind::MaxEig, &hermitian_eigenvalues(&self.phi)?)?;
                proxy_from_eigenvalues(ProxyKind::MaxEig, &hermitian_eigenvalues(&updated)?)? - before
            }
        })
    }

    fn insert(&mut self, t: usize) -> Result<()> {
        if self.chosen.get(t).copied().unwrap_or(true) {
            return Err(Error::CandidateNotAvailable { candidate: t + 1 });
        }
        self.chosen[t] = true;
        let v = self.oracle.column(t);
        self.phi = hermitize(&self.phi + &v * v.adjoint());
        self.inverse = hermitize(
            self.phi
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NumericalFailure("Cholesky factorization failed".into()))?
                .inverse(),
        );
        Ok(())
    }
}

/// Objective used by the selectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "String", into = "String")]
pub enum CostKind {
    #[default]
    Wfc,
    Proxy(ProxyKind),
}

impl CostKind {
    pub fn name(self) -> &'static str {
        match self {
            CostKind::Wfc => "wfc",
            CostKind::Proxy(ProxyKind::TraceCrlb) => "trace",
            CostKind::Proxy(ProxyKind::LogDet) => "logdet",
            CostKind::Proxy(ProxyKind::MaxEig) => "maxeig",
            CostKind::Proxy(ProxyKind::NegMse) => "negmse",
        }
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wfc" => Ok(CostKind::Wfc),
            other => other.parse().map(CostKind::Proxy),
        }
    }
}

impl TryFrom<String> for CostKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CostKind> for String {
    fn from(c: CostKind) -> String {
        c.name().to_string()
    }
}

/// Builds the oracle for `kind`. The Gram table is only read for WFC.
pub fn make_oracle<'a>(
    kind: CostKind,
    gram: &'a GramTable,
    model: &MeasurementModel,
    noise: &NoisePartition,
) -> Result<Box<dyn CostOracle + 'a>> {
    Ok(match kind {
        CostKind::Wfc => Box::new(WfcOracle::new(gram)),
        CostKind::Proxy(p) => Box::new(ProxyOracle::new(p, model, noise, None)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoisePartition;

    fn real(rows: &[Vec<f64>]) -> MeasurementModel {
        MeasurementModel::from_real_rows(rows).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn weight_rules() {
        let noise = NoisePartition::new(vec![vec![0], vec![1]], vec![1.0, 3.0]);
        let w = compute_weights(&noise, WeightRule::Sigmoid).unwrap();
        assert!(close(w[0], 0.2689414213699951, 1e-12));
        assert!(close(w[1], 0.7310585786300049, 1e-12));
        assert_eq!(WeightRule::Sigmoid.weight(2.0, 2.0), 0.5);
        assert!(close(WeightRule::ShiftedReciprocal.weight(2.0, 0.0), 1.0 / 3.0, 1e-15));
        assert_eq!(WeightRule::Reciprocal.weight(4.0, 0.0), 0.25);
        assert_eq!(WeightRule::TanhShifted.weight(1.0, 1.0), 0.5);
        for s in [0.01, 0.5, 1.0, 10.0] {
            let t = WeightRule::TanhShifted.weight(s, 5.0);
            assert!((0.0..=1.0).contains(&t));
        }
        let bad = NoisePartition::new(vec![vec![0]], vec![-1.0]);
        assert!(compute_weights(&bad, WeightRule::Reciprocal).is_err());
        assert_eq!("tanh".parse::<WeightRule>().unwrap(), WeightRule::TanhShifted);
        assert!("nope".parse::<WeightRule>().is_err());
    }

    #[test]
    fn gram_examples() {
        let g = build_gram(&real(&[vec![1.0, 0.0], vec![0.0, 1.0]]), None, &[1.0, 1.0]).unwrap();
        assert_eq!((g.get(0, 0), g.get(0, 1), g.get(1, 1)), (1.0, 0.0, 1.0));
        let g = build_gram(&real(&[vec![1.0, 0.0], vec![1.0, 0.0]]), None, &[1.0, 1.0]).unwrap();
        assert!((0..2).all(|i| (0..2).all(|j| g.get(i, j) == 1.0)));
        let g = build_gram(&real(&[vec![1.0, 0.0], vec![1.0, 1.0]]), None, &[1.0, 0.5]).unwrap();
        assert!(close(g.get(0, 1), 0.25, 1e-15));
        assert_eq!(g.get(0, 0), 1.0);
        assert_eq!(g.get(1, 1), 0.25);
        let zero = real(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(build_gram(&zero, None, &[1.0, 1.0]), Err(Error::ZeroRow { row: 2 }));
    }

    #[test]
    fn wfp_wfc_examples() {
        let eye = build_gram(&real(&[vec![1.0, 0.0], vec![0.0, 1.0]]), None, &[1.0, 1.0]).unwrap();
        let ones = build_gram(&real(&[vec![1.0, 0.0], vec![1.0, 0.0]]), None, &[1.0, 1.0]).unwrap();
        assert_eq!(wfp(&eye, &[]).unwrap(), 0.0);
        assert_eq!(wfp(&eye, &[0, 1]).unwrap(), 2.0);
        assert_eq!(wfp(&ones, &[0, 1]).unwrap(), 4.0);
        assert_eq!(wfc(&eye, &[]).unwrap(), 0.0);
        assert_eq!(wfc(&eye, &[0, 1]).unwrap(), eye.wfp_full());
        assert_eq!(wfc(&eye, &[0]).unwrap(), 1.0);
        assert_eq!(wfp(&eye, &[2]), Err(Error::IndexOutOfRange { index: 3, n: 2 }));
        assert_eq!(wfc_delta(&eye, &[0, 1], 0).unwrap(), 1.0);
        assert_eq!(wfc_delta(&ones, &[0, 1], 0).unwrap(), 3.0);
        assert_eq!(wfc(&ones, &[0]).unwrap() - wfc(&ones, &[]).unwrap(), 3.0);
        assert_eq!(
            wfc_delta(&ones, &[1], 0),
            Err(Error::CandidateNotAvailable { candidate: 1 })
        );
    }

    #[test]
    fn fim_examples() {
        let eye = real(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let noise = NoisePartition::new(vec![vec![0, 1]], vec![1.0]);
        let f = fim(&eye, &noise, None, &[0, 1]).unwrap();
        assert_eq!(f, DMatrix::identity(2, 2));
        let col = real(&[vec![1.0], vec![1.0]]);
        let noise = NoisePartition::new(vec![vec![0], vec![1]], vec![1.0, 2.0]);
        let f = fim(&col, &noise, None, &[0, 1]).unwrap();
        assert!(close(f[(0, 0)].re, 1.25, 1e-15));
        assert_eq!(fim(&col, &noise, None, &[]), Err(Error::EmptySubset));
        // Rank deficient below the parameter count.
        let three = real(&[vec![1.0, 2.0, 0.5], vec![0.3, -1.0, 2.0], vec![1.0, 1.0, 1.0]]);
        let noise = NoisePartition::new(vec![vec![0, 1, 2]], vec![1.0]);
        let f = fim(&three, &noise, None, &[0, 1]).unwrap();
        let d = three.mean_row_energy(None).unwrap();
        assert!(hermitian_eigenvalues(&f).unwrap()[0] <= 1e-10 * d);
    }

    #[test]
    fn proxy_examples() {
        let eye = real(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let noise = NoisePartition::new(vec![vec![0, 1]], vec![1.0]);
        let trace = proxy_cost(ProxyKind::TraceCrlb, &eye, &noise, None, &[0, 1]).unwrap();
        assert!(close(trace, -2.0, 1e-7));
        let logdet = proxy_cost(ProxyKind::LogDet, &eye, &noise, None, &[0, 1]).unwrap();
        assert!(logdet.abs() <= 1e-7);
        let diag = real(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let trace = proxy_cost(ProxyKind::TraceCrlb, &diag, &noise, None, &[0, 1]).unwrap();
        assert!(close(trace, -1.25, 1e-7));
        let negmse = proxy_cost(ProxyKind::NegMse, &diag, &noise, None, &[0, 1]).unwrap();
        assert_eq!(trace, negmse);
        let maxeig = proxy_cost(ProxyKind::MaxEig, &diag, &noise, None, &[0, 1]).unwrap();
        assert!(close(maxeig, -1.0, 1e-7));
    }

    #[test]
    fn proxy_incremental_matches_recompute() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![1.0 + i as f64, (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let model = real(&rows);
        let noise = NoisePartition::new(vec![vec![0, 1, 2], vec![3, 4, 5]], vec![0.5, 2.0]);
        for kind in [ProxyKind::TraceCrlb, ProxyKind::LogDet, ProxyKind::MaxEig] {
            let oracle = ProxyOracle::new(kind, &model, &noise, None).unwrap();
            let mut inc = oracle.incremental().unwrap();
            let mut current: Vec<usize> = vec![0, 2, 4];
            for &t in &current {
                inc.insert(t).unwrap();
            }
            let base = oracle.evaluate(&current).unwrap();
            for t in [1, 3, 5] {
                current.push(t);
                let direct = oracle.evaluate(&current).unwrap() - base;
                current.pop();
                let delta = inc.gain(t).unwrap();
                assert!(close(delta, direct, 1e-6), "{kind:?}: {delta} vs {direct}");
            }
        }
    }
}
