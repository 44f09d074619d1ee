//! Instance files read by `hetsel select`.
//!
//! ```json
//! {
//!   "matrix": [[1, 0], [[0.5, 0.5], 1]],
//!   "sets": [[1], [2]],
//!   "sigmas": [0.1, 1.0],
//!   "keep": [1, 1]
//! }
//! ```
//!
//! Exactly one of `matrix`, `doa` or `dct` describes the model. Matrix rows
//! are listed in order and each entry is a real number or a `[re, im]` pair.
//! `doa` takes `thetas`, `alphas`, `positions` and `wavelength`; `dct` takes
//! the column count `k` and draws the columns from the run seed. Sensor
//! indices in `sets` are 1-based.

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::{make_doa_model, make_dct_model};
use crate::model::{validate_instance, MeasurementModel, NoisePartition, SelectionConstraints, C64};
use crate::rng::{Purpose, RngStream};

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(&self) -> C64 {
        match *self {
            Entry::Real(v) => C64::new(v, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DoaSpec {
    thetas: Vec<f64>,
    alphas: Vec<f64>,
    positions: Vec<f64>,
    wavelength: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DctSpec {
    k: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    #[serde(default)]
    matrix: Option<Vec<Vec<Entry>>>,
    #[serde(default)]
    doa: Option<DoaSpec>,
    #[serde(default)]
    dct: Option<DctSpec>,
    sets: Vec<Vec<usize>>,
    sigmas: Vec<f64>,
    keep: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub model: MeasurementModel,
    pub noise: NoisePartition,
    pub constraints: SelectionConstraints,
}

/// Parses and validates an instance. `seed` only matters for `dct` models.
pub fn parse_instance(text: &str, seed: u64) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text)?;
    let mut sets = Vec::with_capacity(file.sets.len());
    for set in &file.sets {
        let mut zero_based = Vec::with_capacity(set.len());
        for &i in set {
            if i == 0 {
                return Err(Error::IndexOutOfRange {
                    index: 0,
                    n: file.sets.iter().map(Vec::len).sum(),
                });
            }
            zero_based.push(i - 1);
        }
        sets.push(zero_based);
    }
    let n: usize = sets.iter().map(Vec::len).sum();
    let model = match (file.matrix, file.doa, file.dct) {
        (Some(rows), None, None) => {
            let k = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != k) {
                return Err(Error::DimensionMismatch("matrix rows have different lengths".into()));
            }
            MeasurementModel::linear(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j].value()))
        }
        (None, Some(d), None) => make_doa_model(&d.thetas, &d.alphas, &d.positions, d.wavelength)?,
        (None, None, Some(d)) => make_dct_model(n, d.k, &mut RngStream::for_run(seed, Purpose::Instance).rng())?,
        _ => {
            return Err(Error::InvalidConfig(
                "an instance needs exactly one of \"matrix\", \"doa\" or \"dct\"".into(),
            ))
        }
    };
    let noise = NoisePartition::new(sets, file.sigmas);
    let constraints = SelectionConstraints::new(file.keep);
    validate_instance(&model, &noise, &constraints)?;
    Ok(Instance {
        model,
        noise,
        constraints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_matrix_instance() {
        let text = r#"{"matrix": [[1, 0], [[0.5, -0.5], 1], [0, 2]], "sets": [[1, 3], [2]], "sigmas": [0.1, 1.0], "keep": [1, 1]}"#;
        let inst = parse_instance(text, 0).unwrap();
        assert_eq!(inst.noise.sets, vec![vec![0, 2], vec![1]]);
        let a = inst.model.sensing_rows(None).unwrap();
        assert_eq!(a[(1, 0)], C64::new(0.5, -0.5));
    }

    #[test]
    fn rejects_bad_instances() {
        let overlap = r#"{"matrix": [[1, 0], [0, 1], [1, 1]], "sets": [[1, 2], [2, 3]], "sigmas": [1, 1], "keep": [1, 1]}"#;
        assert!(matches!(parse_instance(overlap, 0), Err(Error::PartitionNotDisjoint { sensor: 2, .. })));
        let two_models = r#"{"matrix": [[1]], "dct": {"k": 1}, "sets": [[1]], "sigmas": [1], "keep": [1]}"#;
        assert!(matches!(parse_instance(two_models, 0), Err(Error::InvalidConfig(_))));
        let unknown = r#"{"matrix": [[1]], "sets": [[1]], "sigmas": [1], "keep": [1], "extra": 0}"#;
        assert!(matches!(parse_instance(unknown, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn dct_instance_uses_seed() {
        let text = r#"{"dct": {"k": 3}, "sets": [[1,2,3,4],[5,6,7,8]], "sigmas": [1, 2], "keep": [2, 2]}"#;
        let a = parse_instance(text, 5).unwrap().model.sensing_rows(None).unwrap();
        let b = parse_instance(text, 5).unwrap().model.sensing_rows(None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (8, 3));
    }
}
