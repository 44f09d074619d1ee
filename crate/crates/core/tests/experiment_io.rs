//! Experiment records, aggregation and noise calibration.

use hetsel::estimation::draw_noise;
use hetsel::experiments::{make_dct_model, make_doa_model, run_experiment, snr_to_sigma, ExperimentConfig};
use hetsel::model::C64;
use hetsel::par::Exec;
use hetsel::report::{fmt_float, parse_trials_jsonl, summary_csv, trials_jsonl};
use hetsel::rng::{standard_normal, RngStream};
use hetsel::selectors::Method;
use nalgebra::DVector;

fn config(extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"{{
          "model": {{"dct": {{"k": 4}}}},
          "set_sizes": [4, 6, 4],
          "keep": [2, 3, 1],
          "noise": {{"snr": {{"high_db": 40, "position": [0, 1, 0.5]}}}},
          "sweep": [0, 15, 30],
          "trials": 6,
          "seed": 21,
          {extra}
          "methods": ["jgs", "gs", "igs", "rs", "irs", "opt"]
        }}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

/// Summary rows rebuilt from the persisted trials, one CSV line each.
fn recompute_summary(records: &[hetsel::experiments::TrialRecord], sweep: &[f64], methods: &[Method]) -> String {
    let mut out = String::from("sweep_value,method,mean_nmse_db,mean_wfc,trials_ok,trials_failed\n");
    for (si, &value) in sweep.iter().enumerate() {
        for &method in methods {
            let (mut ratio_sum, mut wfc_sum, mut ok, mut failed) = (0.0, 0.0, 0usize, 0usize);
            for r in records.iter().filter(|r| r.sweep_index == si) {
                for m in r.methods.iter().filter(|m| m.method == method) {
                    match (m.failure.is_none(), m.error_ratio) {
                        (true, Some(ratio)) => {
                            ratio_sum += ratio;
                            wfc_sum += m.wfc.unwrap();
                            ok += 1;
                        }
                        _ => failed += 1,
                    }
                }
            }
            let mean_db = 10.0 * (ratio_sum / ok as f64).log10();
            out.push_str(&format!(
                "{},{},{},{},{ok},{failed}\n",
                fmt_float(value),
                method.name(),
                fmt_float(mean_db),
                fmt_float(wfc_sum / ok as f64)
            ));
        }
    }
    out
}

#[test]
fn summary_is_reproduced_from_persisted_trials() {
    for extra in ["", r#""randomize": "x", "x": "uniform", "placement": "fixed","#] {
        let cfg = config(extra);
        let out = run_experiment(&cfg, Exec::default()).unwrap();
        let persisted = trials_jsonl(&out.records).unwrap();
        let records = parse_trials_jsonl(&persisted).unwrap();
        assert_eq!(records, out.records);
        assert_eq!(records.len(), cfg.sweep.len() * cfg.trials);
        assert_eq!(recompute_summary(&records, &cfg.sweep, &cfg.methods), summary_csv(&out.summary));
    }
}

#[test]
fn every_record_lists_every_method() {
    let cfg = config("");
    let out = run_experiment(&cfg, Exec::Sequential).unwrap();
    for r in &out.records {
        let methods: Vec<Method> = r.methods.iter().map(|m| m.method).collect();
        assert_eq!(methods, cfg.methods);
        for m in r.methods.iter().filter(|m| m.method != Method::Gs) {
            assert!(m.feasible);
            assert_eq!(m.kept.iter().map(Vec::len).collect::<Vec<_>>(), cfg.keep);
        }
    }
    let opt = out.opt_ratio.expect("OPT configured");
    assert!(opt.iter().filter(|r| r.method == Method::Jgs).all(|r| r.min_ratio >= 0.5));
}

#[test]
fn quantized_and_doa_experiments_run() {
    let quantized = r#"{
      "model": {"dct": {"k": 3}},
      "set_sizes": [5, 5],
      "keep": [2, 2],
      "noise": {"quantizer": {"high_bits": 12, "position": [0, 1]}},
      "sweep": [1, 4],
      "trials": 3,
      "methods": ["jgs", "igs", "irs"]
    }"#;
    let doa = r#"{
      "model": {"doa": {"sources": 2, "wavelength": 0.5}},
      "set_sizes": [6, 6],
      "keep": [3, 3],
      "noise": {"snr": {"high_db": 30, "position": [0, 1]}},
      "sweep": [0, 20],
      "trials": 3,
      "methods": ["jgs", "gs", "irs"]
    }"#;
    for text in [quantized, doa] {
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let out = run_experiment(&cfg, Exec::default()).unwrap();
        assert!(out.summary.iter().all(|r| r.trials_ok + r.trials_failed == cfg.trials));
        assert!(out.summary.iter().all(|r| r.trials_ok > 0 && r.mean_wfc.is_finite()));
    }
}

/// Empirical SNR in dB of `draws` noisy realizations, per set.
fn measured_snr_db(signal: &DVector<C64>, sets: &[Vec<usize>], sigmas: &[f64], complex: bool, draws: usize) -> Vec<f64> {
    let sensor_sigmas: Vec<f64> = {
        let mut s = vec![0.0; signal.len()];
        for (set, &sigma) in sets.iter().zip(sigmas) {
            for &i in set {
                s[i] = sigma;
            }
        }
        s
    };
    let mut rng = RngStream::new(99, 0).rng();
    let mut noise_energy = vec![0.0; sets.len()];
    for _ in 0..draws {
        let noise = draw_noise(&mut rng, &sensor_sigmas, complex);
        for (e, set) in noise_energy.iter_mut().zip(sets) {
            *e += set.iter().map(|&i| noise[i].norm_sqr()).sum::<f64>();
        }
    }
    sets.iter()
        .zip(&noise_energy)
        .map(|(set, &e)| {
            let signal_energy: f64 = set.iter().map(|&i| signal[i].norm_sqr()).sum();
            10.0 * (signal_energy * draws as f64 / e).log10()
        })
        .collect()
}

#[test]
fn configured_snr_is_measured_back() {
    let mut rng = RngStream::new(7, 1).rng();
    let model = make_dct_model(20, 5, &mut rng).unwrap();
    let x = DVector::from_fn(5, |_, _| C64::new(5.0 * standard_normal(&mut rng), 0.0));
    let sets = vec![(0..5).collect::<Vec<_>>(), (5..15).collect(), (15..20).collect()];
    let target = [40.0, 3.0, 21.5];
    let sigmas = snr_to_sigma(&model, &x, &sets, &target).unwrap();
    let measured = measured_snr_db(&model.noise_free(&x).unwrap(), &sets, &sigmas, false, 10_000);
    for (m, t) in measured.iter().zip(target) {
        assert!((m - t).abs() <= 0.2, "measured {m} dB for target {t} dB");
    }

    let positions: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
    let doa = make_doa_model(&[0.3, -1.1], &[2.0, -4.0], &positions, 0.5).unwrap();
    let x0 = doa.nominal().unwrap().clone();
    let sets = vec![(0..6).collect::<Vec<_>>(), (6..12).collect()];
    let target = [30.0, 0.0];
    let sigmas = snr_to_sigma(&doa, &x0, &sets, &target).unwrap();
    let measured = measured_snr_db(&doa.noise_free(&x0).unwrap(), &sets, &sigmas, true, 10_000);
    for (m, t) in measured.iter().zip(target) {
        assert!((m - t).abs() <= 0.2, "measured {m} dB for target {t} dB");
    }
}
