//! Domain types for a heterogeneous sensing instance and for a selection outcome.
//!
//! Sensor indices are 0-based everywhere inside the library. The JSON formats
//! read and written by the CLI use 1-based indices; conversion happens at the
//! boundary in [`crate::instance`] and [`crate::report`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// A differentiable sensing map `y = f(x)`, queried for its Jacobian at a
/// nominal parameter vector. Row `n` of the Jacobian is the gradient of the
/// `n`-th observation.
pub trait JacobianProvider: Send + Sync + fmt::Debug {
    fn n_sensors(&self) -> usize;
    fn n_params(&self) -> usize;
    /// Noise-free measurements at `x`.
    fn forward(&self, x: &DVector<C64>) -> DVector<C64>;
    /// `n_sensors x n_params` Jacobian at `x`. Must be deterministic.
    fn jacobian(&self, x: &DVector<C64>) -> DMatrix<C64>;
}

/// Wraps a matrix as a [`JacobianProvider`]; the Jacobian of `Ax` is `A`.
#[derive(Clone, Debug)]
pub struct LinearMap(pub DMatrix<C64>);

impl JacobianProvider for LinearMap {
    fn n_sensors(&self) -> usize {
        self.0.nrows()
    }

    fn n_params(&self) -> usize {
        self.0.ncols()
    }

    fn forward(&self, x: &DVector<C64>) -> DVector<C64> {
        &self.0 * x
    }

    fn jacobian(&self, _x: &DVector<C64>) -> DMatrix<C64> {
        self.0.clone()
    }
}

#[derive(Clone, Debug)]
pub enum MeasurementModel {
    /// `N x K` sensing matrix, rows are sensors.
    Linear(DMatrix<C64>),
    /// Nonlinear map with an optional embedded nominal point at which
    /// gradients are evaluated when the caller does not supply one.
    Nonlinear {
        provider: Arc<dyn JacobianProvider>,
        nominal: Option<DVector<C64>>,
    },
}

impl MeasurementModel {
    pub fn linear(matrix: DMatrix<C64>) -> Self {
        MeasurementModel::Linear(matrix)
    }

    /// Builds a linear model from real row-major entries.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("ragged matrix rows".into()));
        }
        Ok(MeasurementModel::Linear(DMatrix::from_fn(n, k, |i, j| {
            C64::new(rows[i][j], 0.0)
        })))
    }

    pub fn nonlinear(provider: Arc<dyn JacobianProvider>, nominal: Option<DVector<C64>>) -> Self {
        MeasurementModel::Nonlinear { provider, nominal }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, MeasurementModel::Linear(_))
    }

    pub fn n_sensors(&self) -> usize {
        match self {
            MeasurementModel::Linear(a) => a.nrows(),
            MeasurementModel::Nonlinear { provider, .. } => provider.n_sensors(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            MeasurementModel::Linear(a) => a.ncols(),
            MeasurementModel::Nonlinear { provider, .. } => provider.n_params(),
        }
    }

    /// Nominal point used when none is passed explicitly.
    pub fn nominal(&self) -> Option<&DVector<C64>> {
        match self {
            MeasurementModel::Linear(_) => None,
            MeasurementModel::Nonlinear { nominal, .. } => nominal.as_ref(),
        }
    }

    /// The matrix whose rows drive every cost: `A` for linear models, the
    /// Jacobian at `x0` (or at the embedded nominal point) otherwise.
    pub fn sensing_rows(&self, x0: Option<&DVector<C64>>) -> Result<DMatrix<C64>> {
        match self {
            MeasurementModel::Linear(a) => {
                if x0.is_some() {
                    return Err(Error::NominalPoint(
                        "linear models take no nominal point".into(),
                    ));
                }
                Ok(a.clone())
            }
            MeasurementModel::Nonlinear { provider, nominal } => {
                let x = x0.or(nominal.as_ref()).ok_or_else(|| {
                    Error::NominalPoint("nonlinear model needs a nominal point".into())
                })?;
                if x.len() != provider.n_params() {
                    return Err(Error::DimensionMismatch(format!(
                        "nominal point has length {}, model expects {}",
                        x.len(),
                        provider.n_params()
                    )));
                }
                Ok(provider.jacobian(x))
            }
        }
    }

    /// Noise-free measurements at `x`.
    pub fn noise_free(&self, x: &DVector<C64>) -> Result<DVector<C64>> {
        if x.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, model expects {}",
                x.len(),
                self.n_params()
            )));
        }
        Ok(match self {
            MeasurementModel::Linear(a) => a * x,
            MeasurementModel::Nonlinear { provider, .. } => provider.forward(x),
        })
    }

    /// Average squared row norm of the sensing rows.
    pub fn mean_row_energy(&self, x0: Option<&DVector<C64>>) -> Result<f64> {
        let rows = self.sensing_rows(x0)?;
        Ok(row_energies(&rows).iter().sum::<f64>() / rows.nrows().max(1) as f64)
    }
}

pub(crate) fn row_energies(rows: &DMatrix<C64>) -> Vec<f64> {
    (0..rows.nrows())
        .map(|i| rows.row(i).iter().map(|z| z.norm_sqr()).sum())
        .collect()
}

/// Disjoint sensor sets covering `0..N`, each with its own noise deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePartition {
    pub sets: Vec<Vec<usize>>,
    pub sigmas: Vec<f64>,
}

impl NoisePartition {
    /// Sets are sorted on construction; nothing else is checked here, see
    /// [`validate_instance`].
    pub fn new(mut sets: Vec<Vec<usize>>, sigmas: Vec<f64>) -> Self {
        for s in &mut sets {
            s.sort_unstable();
        }
        NoisePartition { sets, sigmas }
    }

    /// Contiguous blocks: the first `sizes[0]` sensors form set 0, and so on.
    pub fn contiguous(sizes: &[usize], sigmas: Vec<f64>) -> Self {
        let mut start = 0;
        let sets = sizes
            .iter()
            .map(|&n| {
                let s: Vec<usize> = (start..start + n).collect();
                start += n;
                s
            })
            .collect();
        NoisePartition { sets, sigmas }
    }

    pub fn n_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn set_sizes(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    /// Set index of every sensor. Assumes a valid partition.
    pub fn membership(&self) -> Vec<usize> {
        let mut owner = vec![0; self.n_sensors()];
        for (i, set) in self.sets.iter().enumerate() {
            for &s in set {
                owner[s] = i;
            }
        }
        owner
    }

    /// Per-sensor standard deviations.
    pub fn sensor_sigmas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_sensors()];
        for (set, &sigma) in self.sets.iter().zip(&self.sigmas) {
            for &s in set {
                out[s] = sigma;
            }
        }
        out
    }

    pub fn with_sigmas(&self, sigmas: Vec<f64>) -> Self {
        NoisePartition {
            sets: self.sets.clone(),
            sigmas,
        }
    }
}

/// Number of sensors to keep from each set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConstraints {
    pub counts: Vec<usize>,
}

impl SelectionConstraints {
    pub fn new(counts: Vec<usize>) -> Self {
        SelectionConstraints { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// One greedy (or replayed) step: the sensor added to the objective set and
/// the cost increment it produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub iteration: usize,
    pub index: usize,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Kept sensors per set, sorted.
    pub kept: Vec<Vec<usize>>,
    /// The set the cost was evaluated on: the kept sensors in direct mode,
    /// the discarded ones in complement mode. Sorted.
    pub objective_set: Vec<usize>,
    pub trajectory: Vec<Step>,
    /// Per set, the iteration at which the set's quota was met (0 when the
    /// quota is zero).
    pub switch_iterations: Vec<usize>,
    pub final_cost: f64,
    /// False when the selector ignored the per-set counts and missed them.
    pub feasible: bool,
}

impl SelectionResult {
    /// All kept sensors, sorted.
    pub fn kept_union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.kept.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// First iteration at which any set with a nonzero quota was exhausted.
    pub fn first_switch(&self) -> Option<(usize, usize)> {
        self.switch_iterations
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m > 0)
            .min_by_key(|&(i, &m)| (m, i))
            .map(|(i, &m)| (i, m))
    }
}

/// Checks every invariant of the three inputs jointly.
pub fn validate_instance(
    model: &MeasurementModel,
    noise: &NoisePartition,
    constraints: &SelectionConstraints,
) -> Result<()> {
    let n = model.n_sensors();
    validate_partition(noise, n)?;
    if model.n_params() == 0 || n < model.n_params() {
        return Err(Error::DimensionMismatch(format!(
            "need at least as many sensors ({n}) as parameters ({})",
            model.n_params()
        )));
    }
    validate_constraints(noise, constraints)?;
    let rows = match model {
        MeasurementModel::Linear(a) => Some(a.clone()),
        MeasurementModel::Nonlinear { nominal: Some(_), .. } => Some(model.sensing_rows(None)?),
        MeasurementModel::Nonlinear { nominal: None, .. } => None,
    };
    if let Some(rows) = rows {
        if let Some(row) = row_energies(&rows).iter().position(|&e| !(e > 0.0)) {
            return Err(Error::ZeroRow { row: row + 1 });
        }
    }
    Ok(())
}

/// Partition invariants against a sensor count `n`.
pub fn validate_partition(noise: &NoisePartition, n: usize) -> Result<()> {
    if noise.sigmas.len() != noise.sets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} sets but {} sigmas",
            noise.sets.len(),
            noise.sigmas.len()
        )));
    }
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (i, set) in noise.sets.iter().enumerate() {
        for &s in set {
            if s >= n {
                return Err(Error::IndexOutOfRange { index: s + 1, n });
            }
            if let Some(first) = owner[s] {
                return Err(Error::PartitionNotDisjoint {
                    sensor: s + 1,
                    first: first + 1,
                    second: i + 1,
                });
            }
            owner[s] = Some(i);
        }
    }
    if let Some(missing) = owner.iter().position(Option::is_none) {
        return Err(Error::PartitionIncomplete {
            sensor: missing + 1,
        });
    }
    if noise.sets.is_empty() {
        return Err(Error::PartitionIncomplete { sensor: 1 });
    }
    for (i, &sigma) in noise.sigmas.iter().enumerate() {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::NonpositiveSigma { set: i + 1, sigma });
        }
    }
    Ok(())
}

pub(crate) fn validate_constraints(noise: &NoisePartition, constraints: &SelectionConstraints) -> Result<()> {
    if constraints.counts.len() != noise.sets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} sets but {} keep counts",
            noise.sets.len(),
            constraints.counts.len()
        )));
    }
    for (i, (&keep, set)) in constraints.counts.iter().zip(&noise.sets).enumerate() {
        if keep > set.len() {
            return Err(Error::ConstraintExceedsSet {
                set: i + 1,
                keep,
                size: set.len(),
            });
        }
    }
    if constraints.total() == 0 {
        return Err(Error::EmptySelection);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(n: usize, k: usize) -> MeasurementModel {
        MeasurementModel::linear(DMatrix::from_fn(n, k, |i, j| {
            C64::new(if i % k == j { 1.0 } else { 0.0 }, 0.0)
        }))
    }

    #[test]
    fn accepts_valid_instance() {
        let noise = NoisePartition::new(vec![vec![0, 1], vec![2, 3]], vec![1.0, 2.0]);
        let c = SelectionConstraints::new(vec![1, 1]);
        validate_instance(&eye(4, 2), &noise, &c).unwrap();
    }

    #[test]
    fn rejects_overlap() {
        let noise = NoisePartition::new(vec![vec![0, 1], vec![1, 2, 3]], vec![1.0, 2.0]);
        let c = SelectionConstraints::new(vec![1, 1]);
        let err = validate_instance(&eye(4, 2), &noise, &c).unwrap_err();
        assert!(matches!(err, Error::PartitionNotDisjoint { sensor: 2, .. }));
    }

    #[test]
    fn rejects_oversized_constraint() {
        let noise = NoisePartition::new(vec![vec![0, 1], vec![2, 3]], vec![1.0, 2.0]);
        let c = SelectionConstraints::new(vec![3, 1]);
        let err = validate_instance(&eye(4, 2), &noise, &c).unwrap_err();
        assert_eq!(
            err,
            Error::ConstraintExceedsSet {
                set: 1,
                keep: 3,
                size: 2
            }
        );
    }

    #[test]
    fn rejects_missing_sensor_and_bad_sigma() {
        let c = SelectionConstraints::new(vec![1, 1]);
        let noise = NoisePartition::new(vec![vec![0, 1], vec![2]], vec![1.0, 2.0]);
        assert!(matches!(
            validate_instance(&eye(4, 2), &noise, &c),
            Err(Error::PartitionIncomplete { sensor: 4 })
        ));
        let noise = NoisePartition::new(vec![vec![0, 1], vec![2, 3]], vec![1.0, 0.0]);
        assert!(matches!(
            validate_instance(&eye(4, 2), &noise, &c),
            Err(Error::NonpositiveSigma { set: 2, .. })
        ));
    }

    #[test]
    fn rejects_zero_row_and_short_model() {
        let mut a = DMatrix::from_element(4, 2, C64::new(1.0, 0.0));
        a[(2, 0)] = C64::new(0.0, 0.0);
        a[(2, 1)] = C64::new(0.0, 0.0);
        let noise = NoisePartition::new(vec![vec![0, 1], vec![2, 3]], vec![1.0, 2.0]);
        let c = SelectionConstraints::new(vec![1, 1]);
        assert_eq!(
            validate_instance(&MeasurementModel::linear(a), &noise, &c),
            Err(Error::ZeroRow { row: 3 })
        );
        assert!(matches!(
            validate_instance(&eye(4, 5), &noise, &c),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn linear_wrapper_reproduces_rows() {
        let a = DMatrix::from_fn(5, 3, |i, j| C64::new((i * 3 + j) as f64 + 1.0, j as f64));
        let wrapped = MeasurementModel::nonlinear(
            Arc::new(LinearMap(a.clone())),
            Some(DVector::from_element(3, C64::new(0.3, 0.0))),
        );
        let rows = wrapped.sensing_rows(None).unwrap();
        for (x, y) in rows.iter().zip(a.iter()) {
            assert!((x - y).norm() <= 1e-12 * y.norm().max(1.0));
        }
        assert!(wrapped.sensing_rows(None).is_ok());
        assert!(MeasurementModel::linear(a).sensing_rows(Some(&DVector::zeros(3))).is_err());
    }
}
