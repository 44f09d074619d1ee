//! Instance factories and the Monte-Carlo driver.
//!
//! A run fixes the sensing model (and, unless `x` is randomized, the
//! parameter vector) from the master seed. Every trial then draws its own
//! sensor placement, signal and noise from streams keyed by
//! `(seed, sweep index, trial index)`, so trials can run in any order on any
//! number of workers without changing a single output byte.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::costs::{build_gram, compute_weights, make_oracle, wfp, CostKind, WeightRule};
use crate::error::{Error, Result};
use crate::estimation::{closed_form_mse, db, draw_noise, squared_error_ratio, to_db, wls_estimate};
use crate::model::{validate_instance, JacobianProvider, MeasurementModel, NoisePartition, SelectionConstraints, C64};
use crate::par::{self, Exec};
use crate::rng::{permutation, sample_without_replacement, Purpose, RngStream};
use crate::selectors::{run_method, Method, OptOptions, DEFAULT_OPT_CAP};

/// Orthonormal `N x N` DCT-II basis; column `k` is the `k`-th cosine.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |t, k| {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        scale * (PI * (2 * t + 1) as f64 * k as f64 / (2 * n) as f64).cos()
    })
}

/// `K` random columns of the `N x N` DCT-II basis, kept in ascending order.
pub fn make_dct_model<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<MeasurementModel> {
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch(format!("cannot take {k} of {n} DCT columns")));
    }
    let pool: Vec<usize> = (0..n).collect();
    let cols = sample_without_replacement(rng, &pool, k);
    let basis = dct_matrix(n);
    Ok(MeasurementModel::linear(DMatrix::from_fn(n, k, |t, j| {
        C64::new(basis[(t, cols[j])], 0.0)
    })))
}

/// Far-field array response of `K` sources at `N` sensors on a line.
/// Parameters are ordered `[angles; amplitudes]`; only the real part of an
/// angle is used.
#[derive(Clone, Debug)]
pub struct DoaModel {
    pub positions: Vec<f64>,
    pub wavelength: f64,
    pub sources: usize,
}

impl DoaModel {
    fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    fn phase(&self, n: usize, theta: f64) -> C64 {
        C64::from_polar(1.0, -self.wavenumber() * self.positions[n] * theta.sin())
    }
}

impl JacobianProvider for DoaModel {
    fn n_sensors(&self) -> usize {
        self.positions.len()
    }

    fn n_params(&self) -> usize {
        2 * self.sources
    }

    fn forward(&self, x: &DVector<C64>) -> DVector<C64> {
        let k = self.sources;
        DVector::from_fn(self.positions.len(), |n, _| {
            (0..k).map(|s| x[k + s] * self.phase(n, x[s].re)).sum()
        })
    }

    fn jacobian(&self, x: &DVector<C64>) -> DMatrix<C64> {
        let k = self.sources;
        let kw = self.wavenumber();
        let mut j = DMatrix::zeros(self.positions.len(), 2 * k);
        for n in 0..self.positions.len() {
            for s in 0..k {
                let theta = x[s].re;
                let e = self.phase(n, theta);
                j[(n, s)] = C64::new(0.0, -kw * self.positions[n] * theta.cos()) * x[k + s] * e;
                j[(n, k + s)] = e;
            }
        }
        j
    }
}

/// DoA model with the nominal point `[thetas; alphas]` embedded.
pub fn make_doa_model(thetas: &[f64], alphas: &[f64], positions: &[f64], wavelength: f64) -> Result<MeasurementModel> {
    if !(wavelength > 0.0) {
        return Err(Error::InvalidConfig(format!("wavelength must be positive, got {wavelength}")));
    }
    if thetas.is_empty() || thetas.len() != alphas.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} angles and {} amplitudes",
            thetas.len(),
            alphas.len()
        )));
    }
    let x0 = DVector::from_iterator(
        2 * thetas.len(),
        thetas.iter().chain(alphas).map(|&v| C64::new(v, 0.0)),
    );
    let provider = DoaModel {
        positions: positions.to_vec(),
        wavelength,
        sources: thetas.len(),
    };
    Ok(MeasurementModel::nonlinear(Arc::new(provider), Some(x0)))
}

fn sigmas_from_signal(y0: &DVector<C64>, sets: &[Vec<usize>], snr_db: &[f64]) -> Result<Vec<f64>> {
    if sets.len() != snr_db.len() {
        return Err(Error::DimensionMismatch(format!("{} sets but {} SNR values", sets.len(), snr_db.len())));
    }
    sets.iter()
        .zip(snr_db)
        .enumerate()
        .map(|(i, (set, &snr))| {
            let energy: f64 = set.iter().map(|&j| y0[j].norm_sqr()).sum();
            if !(energy > 0.0) || set.is_empty() {
                return Err(Error::ZeroSignalPower { set: i + 1 });
            }
            Ok((energy / (set.len() as f64 * 10f64.powf(snr / 10.0))).sqrt())
        })
        .collect()
}

/// Per-set noise deviations that realize the requested SNRs (in dB) for the
/// noise-free measurements at `x_ref`.
pub fn snr_to_sigma(
    model: &MeasurementModel,
    x_ref: &DVector<C64>,
    sets: &[Vec<usize>],
    snr_db: &[f64],
) -> Result<Vec<f64>> {
    sigmas_from_signal(&model.noise_free(x_ref)?, sets, snr_db)
}

/// Midrise uniform quantizer with `2^bits` levels on `[-range, range]`.
pub fn quantize(y: f64, bits: u32, range: f64) -> f64 {
    debug_assert!(bits >= 1 && range > 0.0);
    let step = 2.0 * range / 2f64.powi(bits as i32);
    let clamped = y.clamp(-range, range.next_down());
    step * ((clamped / step).floor() + 0.5)
}

/// Quantizes real and imaginary parts with their own ranges.
pub fn quantize_complex(y: C64, bits: u32, range_re: f64, range_im: f64) -> C64 {
    let im = if range_im > 0.0 { quantize(y.im, bits, range_im) } else { y.im };
    C64::new(quantize(y.re, bits, range_re), im)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Dct {
        k: usize,
    },
    Doa {
        sources: usize,
        wavelength: f64,
        /// Sensor positions; drawn uniformly from `[0, 1]` when absent.
        #[serde(default)]
        positions: Option<Vec<f64>>,
        #[serde(default = "default_theta_range")]
        theta_range: [f64; 2],
        #[serde(default = "default_amplitude_std")]
        amplitude_std: f64,
    },
}

fn default_theta_range() -> [f64; 2] {
    [-PI, PI]
}

fn default_amplitude_std() -> f64 {
    5.0
}

/// Per-set noise levels along the sweep. Set `i` gets
/// `high + position[i] * (sweep - high)`, so position 0 pins a set to the
/// high-quality level and position 1 makes it follow the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSpec {
    Snr {
        high_db: f64,
        position: Vec<f64>,
    },
    Sigma {
        high: f64,
        position: Vec<f64>,
    },
    /// Bit depths are rounded to the nearest integer. `range` defaults to the
    /// largest noise-free magnitude of each part.
    Quantizer {
        high_bits: u32,
        position: Vec<f64>,
        #[serde(default)]
        range: Option<f64>,
    },
}

impl NoiseSpec {
    fn positions(&self) -> &[f64] {
        match self {
            NoiseSpec::Snr { position, .. } | NoiseSpec::Sigma { position, .. } | NoiseSpec::Quantizer { position, .. } => position,
        }
    }

    fn levels(&self, sweep: f64) -> Vec<f64> {
        let high = match self {
            NoiseSpec::Snr { high_db, .. } => *high_db,
            NoiseSpec::Sigma { high, .. } => *high,
            NoiseSpec::Quantizer { high_bits, .. } => *high_bits as f64,
        };
        self.positions().iter().map(|p| high + p * (sweep - high)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// A fresh uniform random partition of the sensors every trial.
    #[default]
    PerTrial,
    /// Contiguous blocks: set 1 is the first `N_1` sensors, and so on.
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Randomize {
    /// Fixed parameter vector; placement and noise vary.
    #[default]
    Noise,
    /// A fresh parameter vector every trial.
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum XDistribution {
    /// i.i.d. zero-mean Gaussian, variance 25.
    #[default]
    Gaussian,
    /// i.i.d. uniform on `[-1, 1]`.
    Uniform,
}

impl XDistribution {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R, k: usize) -> DVector<C64> {
        DVector::from_fn(k, |_, _| {
            let v = match self {
                XDistribution::Gaussian => 5.0 * rng.sample::<f64, _>(StandardNormal),
                XDistribution::Uniform => rng.random_range(-1.0..=1.0),
            };
            C64::new(v, 0.0)
        })
    }
}

fn default_trials() -> usize {
    100
}

fn default_opt_cap() -> u64 {
    DEFAULT_OPT_CAP as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    pub set_sizes: Vec<usize>,
    pub keep: Vec<usize>,
    #[serde(default)]
    pub placement: Placement,
    pub noise: NoiseSpec,
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub randomize: Randomize,
    #[serde(default)]
    pub x: XDistribution,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub cost: CostKind,
    #[serde(default)]
    pub weight: WeightRule,
    #[serde(default = "default_opt_cap")]
    pub opt_cap: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn n_sensors(&self) -> usize {
        self.set_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let n = self.n_sensors();
        let l = self.set_sizes.len();
        if l == 0 || self.set_sizes.contains(&0) {
            return bad("every set needs at least one sensor".into());
        }
        if self.keep.len() != l {
            return bad(format!("{l} sets but {} keep counts", self.keep.len()));
        }
        if let Some(i) = (0..l).find(|&i| self.keep[i] > self.set_sizes[i]) {
            return Err(Error::ConstraintExceedsSet {
                set: i + 1,
                keep: self.keep[i],
                size: self.set_sizes[i],
            });
        }
        if self.keep.iter().sum::<usize>() == 0 {
            return Err(Error::EmptySelection);
        }
        if self.noise.positions().len() != l {
            return bad(format!("{l} sets but {} noise positions", self.noise.positions().len()));
        }
        if self.sweep.is_empty() || self.sweep.iter().any(|v| !v.is_finite()) {
            return bad("sweep must be a nonempty list of finite values".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods configured".into());
        }
        if let NoiseSpec::Quantizer { range: Some(r), .. } = self.noise {
            if !(r > 0.0) {
                return bad(format!("quantizer range must be positive, got {r}"));
            }
        }
        match &self.model {
            ModelSpec::Dct { k } => {
                if *k == 0 || *k > n {
                    return bad(format!("cannot take {k} DCT columns with {n} sensors"));
                }
            }
            ModelSpec::Doa {
                sources,
                wavelength,
                positions,
                theta_range,
                amplitude_std,
            } => {
                if *sources == 0 || 2 * sources > n {
                    return bad(format!("{sources} sources need between 1 and {} sensors' worth of parameters", n / 2));
                }
                if !(*wavelength > 0.0) || !(theta_range[0] <= theta_range[1]) || !(*amplitude_std > 0.0) {
                    return bad("wavelength, angle range and amplitude spread must be positive".into());
                }
                if positions.as_ref().is_some_and(|p| p.len() != n) {
                    return bad(format!("need {n} sensor positions"));
                }
                if self.randomize == Randomize::X {
                    return bad("direction-of-arrival runs keep the source parameters fixed".into());
                }
            }
        }
        Ok(())
    }
}

/// One selector's outcome in one trial. Indices are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub kept: Vec<Vec<usize>>,
    pub feasible: bool,
    /// `|x - x_hat|^2 / |x|^2` for linear models; the CRLB trace over `|x0|^2`
    /// for direction-of-arrival models.
    pub error_ratio: Option<f64>,
    #[serde(with = "db")]
    pub nmse_db: f64,
    pub wfc: Option<f64>,
    pub closed_form_mse: Option<f64>,
    pub failure: Option<String>,
}

impl MethodOutcome {
    fn failed(method: Method, e: &Error) -> Self {
        MethodOutcome {
            method,
            kept: Vec::new(),
            feasible: false,
            error_ratio: None,
            nmse_db: f64::NAN,
            wfc: None,
            closed_form_mse: None,
            failure: Some(e.to_string()),
        }
    }

    pub fn ok(&self) -> bool {
        self.failure.is_none() && self.error_ratio.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    /// Stream id of the trial's placement draw; the other purposes differ
    /// only in the low byte.
    pub stream: u64,
    pub methods: Vec<MethodOutcome>,
}

/// Things fixed for the whole run.
struct RunContext {
    model: MeasurementModel,
    x_fixed: DVector<C64>,
    complex: bool,
}

fn build_context(config: &ExperimentConfig) -> Result<RunContext> {
    let n = config.n_sensors();
    let mut rng = RngStream::for_run(config.seed, Purpose::Instance).rng();
    match &config.model {
        ModelSpec::Dct { k } => {
            let model = make_dct_model(n, *k, &mut rng)?;
            let x_fixed = config.x.draw(&mut RngStream::for_run(config.seed, Purpose::Signal).rng(), *k);
            Ok(RunContext {
                model,
                x_fixed,
                complex: false,
            })
        }
        ModelSpec::Doa {
            sources,
            wavelength,
            positions,
            theta_range,
            amplitude_std,
        } => {
            let positions = positions
                .clone()
                .unwrap_or_else(|| (0..n).map(|_| rng.random_range(0.0..=1.0)).collect());
            let thetas: Vec<f64> = (0..*sources).map(|_| rng.random_range(theta_range[0]..=theta_range[1])).collect();
            let alphas: Vec<f64> = (0..*sources)
                .map(|_| amplitude_std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let model = make_doa_model(&thetas, &alphas, &positions, *wavelength)?;
            let x_fixed = model.nominal().cloned().expect("DoA model embeds its nominal point");
            Ok(RunContext {
                model,
                x_fixed,
                complex: true,
            })
        }
    }
}

fn partition(config: &ExperimentConfig, stream: RngStream) -> Vec<Vec<usize>> {
    let order: Vec<usize> = match config.placement {
        Placement::Fixed => (0..config.n_sensors()).collect(),
        Placement::PerTrial => permutation(&mut stream.rng(), config.n_sensors()),
    };
    let mut start = 0;
    config
        .set_sizes
        .iter()
        .map(|&size| {
            let mut set = order[start..start + size].to_vec();
            set.sort_unstable();
            start += size;
            set
        })
        .collect()
}

struct TrialData {
    noise: NoisePartition,
    x: DVector<C64>,
    y: DVector<C64>,
}

fn trial_data(config: &ExperimentConfig, ctx: &RunContext, sweep_index: usize, trial: usize) -> Result<TrialData> {
    let stream = |p| RngStream::for_trial(config.seed, sweep_index, trial, p);
    let sets = partition(config, stream(Purpose::Placement));
    let x = match config.randomize {
        Randomize::Noise => ctx.x_fixed.clone(),
        Randomize::X => config.x.draw(&mut stream(Purpose::Signal).rng(), ctx.x_fixed.len()),
    };
    let y0 = ctx.model.noise_free(&x)?;
    let levels = config.noise.levels(config.sweep[sweep_index]);
    let (sigmas, y) = match &config.noise {
        NoiseSpec::Snr { .. } | NoiseSpec::Sigma { .. } => {
            let sigmas = match config.noise {
                NoiseSpec::Snr { .. } => sigmas_from_signal(&y0, &sets, &levels)?,
                _ => levels,
            };
            let noise = NoisePartition::new(sets.clone(), sigmas.clone());
            let e = draw_noise(&mut stream(Purpose::Noise).rng(), &noise.sensor_sigmas(), ctx.complex);
            (sigmas, &y0 + e)
        }
        NoiseSpec::Quantizer { range, .. } => {
            let bits: Vec<u32> = levels.iter().map(|b| b.round().max(1.0) as u32).collect();
            let peak = |f: fn(&C64) -> f64| y0.iter().map(f).fold(0.0, f64::max);
            let (range_re, range_im) = match range {
                Some(r) => (*r, if ctx.complex { *r } else { 0.0 }),
                None => (peak(|z| z.re.abs()), peak(|z| z.im.abs())),
            };
            if !(range_re > 0.0) {
                return Err(Error::ZeroSignalPower { set: 1 });
            }
            let mut y = y0.clone();
            let mut sigmas = Vec::with_capacity(sets.len());
            for (set, &q) in sets.iter().zip(&bits) {
                for &j in set {
                    y[j] = quantize_complex(y0[j], q, range_re, range_im);
                }
                // Uniform quantization error has variance step^2 / 12 per part.
                let step = |r: f64| 2.0 * r / 2f64.powi(q as i32);
                let var = (step(range_re).powi(2) + step(range_im).powi(2)) / 12.0;
                sigmas.push(var.sqrt());
            }
            (sigmas, y)
        }
    };
    Ok(TrialData {
        noise: NoisePartition::new(sets, sigmas),
        x,
        y,
    })
}

fn one_based(kept: &[Vec<usize>]) -> Vec<Vec<usize>> {
    kept.iter().map(|s| s.iter().map(|i| i + 1).collect()).collect()
}

fn run_trial(config: &ExperimentConfig, ctx: &RunContext, sweep_index: usize, trial: usize) -> TrialRecord {
    let placement = RngStream::for_trial(config.seed, sweep_index, trial, Purpose::Placement);
    let methods = match trial_methods(config, ctx, sweep_index, trial) {
        Ok(m) => m,
        Err(e) => config.methods.iter().map(|&m| MethodOutcome::failed(m, &e)).collect(),
    };
    TrialRecord {
        sweep_index,
        sweep_value: config.sweep[sweep_index],
        trial,
        seed: config.seed,
        stream: placement.stream,
        methods,
    }
}

fn trial_methods(config: &ExperimentConfig, ctx: &RunContext, sweep_index: usize, trial: usize) -> Result<Vec<MethodOutcome>> {
    let data = trial_data(config, ctx, sweep_index, trial)?;
    let constraints = SelectionConstraints::new(config.keep.clone());
    validate_instance(&ctx.model, &data.noise, &constraints)?;
    let weights = compute_weights(&data.noise, config.weight)?;
    let gram = build_gram(&ctx.model, None, &weights)?;
    let oracle = make_oracle(config.cost, &gram, &ctx.model, &data.noise)?;
    let selector_stream = RngStream::for_trial(config.seed, sweep_index, trial, Purpose::Selector);
    let opt = OptOptions {
        cap: config.opt_cap as u128,
        exec: Exec::Sequential,
    };
    Ok(config
        .methods
        .iter()
        .map(|&method| {
            let scored = run_method(method, &*oracle, &data.noise, &constraints, selector_stream, opt).and_then(|sel| {
                let kept = sel.kept_union();
                let wfc = gram.wfp_full() - wfp(&gram, &kept)?;
                let mse = closed_form_mse(&ctx.model, &data.noise, &kept, None)?;
                let ratio = if ctx.model.is_linear() {
                    let x_hat = wls_estimate(&ctx.model, &data.noise, &kept, &data.y)?;
                    squared_error_ratio(&data.x, &x_hat)?
                } else {
                    let reference = data.x.norm_squared();
                    if !(reference > 0.0) {
                        return Err(Error::ZeroReference);
                    }
                    mse / reference
                };
                Ok(MethodOutcome {
                    method,
                    kept: one_based(&sel.kept),
                    feasible: sel.feasible,
                    error_ratio: Some(ratio),
                    nmse_db: to_db(ratio),
                    wfc: Some(wfc),
                    closed_form_mse: Some(mse),
                    failure: None,
                })
            });
            scored.unwrap_or_else(|e| MethodOutcome::failed(method, &e))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub method: Method,
    pub mean_nmse_db: f64,
    pub mean_wfc: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

/// Mean WFC of each method relative to exhaustive search, per sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptRatioRow {
    pub sweep_value: f64,
    pub method: Method,
    pub mean_ratio: f64,
    pub min_ratio: f64,
    pub trials: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub opt_ratio: Option<Vec<OptRatioRow>>,
}

fn mean(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, count) = values.fold((0.0, 0), |(s, c), v| (s + v, c + 1));
    (if count == 0 { f64::NAN } else { sum / count as f64 }, count)
}

/// Per sweep point and method, the dB value of the mean error ratio and the
/// mean WFC over the successful trials. Records are read in the given order.
pub fn summarize(sweep: &[f64], methods: &[Method], records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::with_capacity(sweep.len() * methods.len());
    for (si, &value) in sweep.iter().enumerate() {
        for &method in methods {
            let outcomes: Vec<&MethodOutcome> = records
                .iter()
                .filter(|r| r.sweep_index == si)
                .flat_map(|r| r.methods.iter().filter(|m| m.method == method))
                .collect();
            let ok: Vec<&MethodOutcome> = outcomes.iter().copied().filter(|m| m.ok()).collect();
            let (ratio, _) = mean(ok.iter().filter_map(|m| m.error_ratio));
            let (wfc, _) = mean(ok.iter().filter_map(|m| m.wfc));
            rows.push(SummaryRow {
                sweep_value: value,
                method,
                mean_nmse_db: to_db(ratio),
                mean_wfc: wfc,
                trials_ok: ok.len(),
                trials_failed: outcomes.len() - ok.len(),
            });
        }
    }
    rows
}

/// WFC ratios against the exhaustive optimum, over trials where both ran.
pub fn opt_ratios(sweep: &[f64], methods: &[Method], records: &[TrialRecord]) -> Vec<OptRatioRow> {
    let mut rows = Vec::new();
    for (si, &value) in sweep.iter().enumerate() {
        for &method in methods.iter().filter(|&&m| m != Method::Opt) {
            let ratios: Vec<f64> = records
                .iter()
                .filter(|r| r.sweep_index == si)
                .filter_map(|r| {
                    let find = |m| r.methods.iter().find(|o| o.method == m && o.ok()).and_then(|o| o.wfc);
                    let (a, b) = (find(method)?, find(Method::Opt)?);
                    (b > 0.0).then(|| a / b)
                })
                .collect();
            let (mean_ratio, trials) = mean(ratios.iter().copied());
            rows.push(OptRatioRow {
                sweep_value: value,
                method,
                mean_ratio,
                min_ratio: ratios.iter().copied().fold(f64::NAN, f64::min),
                trials,
            });
        }
    }
    rows
}

pub fn run_experiment(config: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    config.validate()?;
    let ctx = build_context(config)?;
    let trials = config.trials;
    let records = par::map_range(config.sweep.len() * trials, exec, |flat| {
        run_trial(config, &ctx, flat / trials, flat % trials)
    });
    let summary = summarize(&config.sweep, &config.methods, &records);
    let opt_ratio = config
        .methods
        .contains(&Method::Opt)
        .then(|| opt_ratios(&config.sweep, &config.methods, &records));
    Ok(ExperimentOutput {
        records,
        summary,
        opt_ratio,
    })
}
