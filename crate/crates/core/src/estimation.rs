//! Weighted least squares on a kept subset, and the error measures used to
//! score a selection.

use nalgebra::{DMatrix, DVector, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::costs::{fim_from_rows, hermitian_eigenvalues};
use crate::error::{Error, Result};
use crate::model::{row_energies, MeasurementModel, NoisePartition, C64};

/// Relative singular-value threshold below which a subset is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

fn subset_rows(rows: &DMatrix<C64>, subset: &[usize]) -> Result<DMatrix<C64>> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let n = rows.nrows();
    if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad + 1, n });
    }
    Ok(rows.select_rows(subset))
}

/// Fails unless the rows have full column rank relative to `sqrt(d)`.
fn check_rank(selected: &DMatrix<C64>, d: f64) -> Result<()> {
    let k = selected.ncols();
    let smallest = if selected.nrows() < k {
        0.0
    } else {
        let sv = selected.clone().svd(false, false).singular_values;
        sv.iter().copied().fold(f64::INFINITY, f64::min)
    };
    if !(smallest > RANK_TOLERANCE * d.sqrt()) {
        return Err(Error::RankDeficient {
            smallest_singular_value: smallest,
        });
    }
    Ok(())
}

fn mean_energy(rows: &DMatrix<C64>) -> f64 {
    row_energies(rows).iter().sum::<f64>() / rows.nrows().max(1) as f64
}

/// WLS estimate from the measurements of `subset`. `y` holds all `N`
/// measurements; only the subset's entries are read. The whitened system is
/// solved by SVD, without forming the inverse information matrix.
pub fn wls_estimate(
    model: &MeasurementModel,
    noise: &NoisePartition,
    subset: &[usize],
    y: &DVector<C64>,
) -> Result<DVector<C64>> {
    let MeasurementModel::Linear(a) = model else {
        return Err(Error::NominalPoint("least-squares estimation needs a linear model".into()));
    };
    if y.len() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} measurements for {} sensors",
            y.len(),
            a.nrows()
        )));
    }
    let selected = subset_rows(a, subset)?;
    check_rank(&selected, mean_energy(a))?;
    let sigmas = noise.sensor_sigmas();
    let mut whitened = selected;
    let mut rhs = DVector::<C64>::zeros(subset.len());
    for (r, &i) in subset.iter().enumerate() {
        let scale = 1.0 / sigmas[i];
        whitened.row_mut(r).scale_mut(scale);
        rhs[r] = y[i] * scale;
    }
    SVD::new(whitened, true, true)
        .solve(&rhs, 0.0)
        .map_err(|e| Error::NumericalFailure(e.into()))
}

/// Trace of the inverse Fisher information of `subset`: the MSE of the WLS
/// estimator for linear models and the CRLB trace at `x0` otherwise.
pub fn closed_form_mse(
    model: &MeasurementModel,
    noise: &NoisePartition,
    subset: &[usize],
    x0: Option<&DVector<C64>>,
) -> Result<f64> {
    let rows = model.sensing_rows(x0)?;
    let selected = subset_rows(&rows, subset)?;
    check_rank(&selected, mean_energy(&rows))?;
    let eig = hermitian_eigenvalues(&fim_from_rows(&rows, &noise.sensor_sigmas(), subset)?)?;
    if !(eig[0] > 0.0) {
        return Err(Error::RankDeficient {
            smallest_singular_value: eig[0].max(0.0).sqrt(),
        });
    }
    Ok(eig.iter().map(|l| 1.0 / l).sum())
}

/// `|x - x_hat|^2 / |x|^2`.
pub fn squared_error_ratio(x_true: &DVector<C64>, x_hat: &DVector<C64>) -> Result<f64> {
    if x_true.len() != x_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "reference has length {}, estimate {}",
            x_true.len(),
            x_hat.len()
        )));
    }
    let reference = x_true.norm_squared();
    if !(reference > 0.0) {
        return Err(Error::ZeroReference);
    }
    Ok((x_true - x_hat).norm_squared() / reference)
}

/// Ratio in decibels; an exact recovery gives negative infinity.
pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Normalized squared error in dB.
pub fn empirical_nmse_db(x_true: &DVector<C64>, x_hat: &DVector<C64>) -> Result<f64> {
    squared_error_ratio(x_true, x_hat).map(to_db)
}

/// Zero-mean Gaussian noise with per-sensor deviations; circularly symmetric
/// (half the variance in each part) when `complex` is set.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, sensor_sigmas: &[f64], complex: bool) -> DVector<C64> {
    DVector::from_iterator(
        sensor_sigmas.len(),
        sensor_sigmas.iter().map(|&s| {
            if complex {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im) * (s / std::f64::consts::SQRT_2)
            } else {
                let re: f64 = rng.sample(StandardNormal);
                C64::new(re * s, 0.0)
            }
        }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationReport {
    pub estimate: Vec<[f64; 2]>,
    #[serde(serialize_with = "db::serialize")]
    pub empirical_nmse_db: f64,
    pub closed_form_mse: f64,
    pub subset: Vec<usize>,
}

/// Estimate from `subset`, scored against `x_true`.
pub fn estimate_and_score(
    model: &MeasurementModel,
    noise: &NoisePartition,
    subset: &[usize],
    y: &DVector<C64>,
    x_true: &DVector<C64>,
) -> Result<EstimationReport> {
    let x_hat = wls_estimate(model, noise, subset, y)?;
    Ok(EstimationReport {
        estimate: x_hat.iter().map(|z| [z.re, z.im]).collect(),
        empirical_nmse_db: empirical_nmse_db(x_true, &x_hat)?,
        closed_form_mse: closed_form_mse(model, noise, subset, None)?,
        subset: subset.to_vec(),
    })
}

/// JSON encoding for decibel values: finite numbers as numbers, infinities as
/// the strings `"-inf"` / `"inf"`.
pub mod db {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" => Ok(f64::INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a dB value: {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn real(rows: &[Vec<f64>]) -> MeasurementModel {
        MeasurementModel::from_real_rows(rows).unwrap()
    }

    fn vec(v: &[f64]) -> DVector<C64> {
        DVector::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0)))
    }

    #[test]
    fn wls_examples() {
        let eye = real(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let noise = NoisePartition::new(vec![vec![0], vec![1]], vec![0.3, 7.0]);
        let y = vec(&[2.5, -1.0]);
        let x = wls_estimate(&eye, &noise, &[0, 1], &y).unwrap();
        assert!((x - &y).norm() < 1e-14);

        let col = real(&[vec![1.0], vec![1.0]]);
        let equal = NoisePartition::new(vec![vec![0], vec![1]], vec![1.0, 1.0]);
        let x = wls_estimate(&col, &equal, &[0, 1], &vec(&[0.0, 2.0])).unwrap();
        assert!((x[0].re - 1.0).abs() < 1e-14);
        let unequal = NoisePartition::new(vec![vec![0], vec![1]], vec![1.0, 2.0]);
        let x = wls_estimate(&col, &unequal, &[0, 1], &vec(&[0.0, 2.0])).unwrap();
        assert!((x[0].re - 0.4).abs() < 1e-14);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let a = real(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![0.0, 1.0]]);
        let noise = NoisePartition::new(vec![vec![0, 1, 2]], vec![1.0]);
        let err = wls_estimate(&a, &noise, &[0, 1], &vec(&[1.0, 2.0, 3.0])).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
        assert!(matches!(
            closed_form_mse(&a, &noise, &[2], None),
            Err(Error::RankDeficient { smallest_singular_value }) if smallest_singular_value == 0.0
        ));
    }

    #[test]
    fn closed_form_examples() {
        let eye = real(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let unit = NoisePartition::new(vec![vec![0, 1]], vec![1.0]);
        assert!((closed_form_mse(&eye, &unit, &[0, 1], None).unwrap() - 2.0).abs() < 1e-14);
        let col = real(&[vec![1.0], vec![1.0]]);
        let noise = NoisePartition::new(vec![vec![0], vec![1]], vec![1.0, 2.0]);
        assert!((closed_form_mse(&col, &noise, &[0, 1], None).unwrap() - 0.8).abs() < 1e-14);
        let scaled = noise.with_sigmas(vec![3.0, 6.0]);
        let a = closed_form_mse(&col, &scaled, &[0, 1], None).unwrap();
        assert!((a - 9.0 * 0.8).abs() < 1e-13);
    }

    #[test]
    fn nmse_examples() {
        let x = vec(&[1.0, 0.0]);
        assert_eq!(empirical_nmse_db(&x, &x).unwrap(), f64::NEG_INFINITY);
        assert_eq!(empirical_nmse_db(&x, &vec(&[0.0, 0.0])).unwrap(), 0.0);
        assert!((empirical_nmse_db(&x, &vec(&[0.9, 0.0])).unwrap() + 20.0).abs() < 1e-9);
        assert_eq!(empirical_nmse_db(&vec(&[0.0, 0.0]), &x), Err(Error::ZeroReference));
    }

    #[test]
    fn db_sentinel_round_trips() {
        #[derive(Serialize, Deserialize)]
        struct W(#[serde(with = "db")] f64);
        assert_eq!(serde_json::to_string(&W(f64::NEG_INFINITY)).unwrap(), "\"-inf\"");
        assert_eq!(serde_json::to_string(&W(-3.5)).unwrap(), "-3.5");
        let back: W = serde_json::from_str("\"-inf\"").unwrap();
        assert_eq!(back.0, f64::NEG_INFINITY);
    }

    #[test]
    fn noise_has_requested_scale() {
        let mut rng = RngStream::new(5, 0).rng();
        let n = 20_000;
        let sig = vec![2.0; n];
        for complex in [false, true] {
            let e = draw_noise(&mut rng, &sig, complex);
            let power = e.norm_squared() / n as f64;
            assert!((power / 4.0 - 1.0).abs() < 0.05, "{power}");
            if !complex {
                assert!(e.iter().all(|z| z.im == 0.0));
            }
        }
    }
}
