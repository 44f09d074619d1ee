//! Randomized self-checks behind `hetsel check`. Each check draws its own
//! instances from the given seed and reports the worst violation it saw.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::bounds::{greedy_prefix_bound, two_set_bound};
use crate::costs::{wfc, wfc_delta, GramTable, WfcOracle};
use crate::estimation::wls_estimate;
use crate::experiments::{make_dct_model, make_doa_model, quantize};
use crate::model::{NoisePartition, SelectionConstraints, C64};
use crate::rng::{standard_normal, RngStream};
use crate::selectors::{exhaustive_opt, jgs, OptOptions};

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
}

fn random_gram(rng: &mut ChaCha20Rng, n: usize, k: usize) -> GramTable {
    let rows = DMatrix::from_fn(n, k, |_, _| C64::new(standard_normal(rng), standard_normal(rng)));
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
    GramTable::from_rows(&rows, &weights).expect("Gaussian rows are nonzero")
}

fn members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

fn wfc_structure(seed: u64, cases: usize) -> CheckOutcome {
    let mut rng = RngStream::new(seed, 1).rng();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(2..=8);
        let k = rng.random_range(1..=n);
        let g = random_gram(&mut rng, n, k);
        let slack = 1e-12 * g.wfp_full();
        let value: Vec<f64> = (0..1u32 << n).map(|m| wfc(&g, &members(m, n)).unwrap()).collect();
        worst = worst.max(value[0].abs() - slack);
        for s in 0..1u32 << n {
            for t in 0..n {
                if s >> t & 1 == 1 {
                    continue;
                }
                let gain_s = value[(s | 1 << t) as usize] - value[s as usize];
                worst = worst.max(-gain_s - slack);
                // Submodularity against one superset per (s, t).
                let sup = s | (rng.random::<u32>() & ((1 << n) - 1) & !(1 << t));
                let gain_sup = value[(sup | 1 << t) as usize] - value[sup as usize];
                worst = worst.max(gain_sup - gain_s - slack);
            }
        }
    }
    CheckOutcome {
        name: "wfc is normalized, monotone and submodular",
        passed: worst <= 0.0,
        cases,
        detail: format!("largest violation beyond slack {worst:e}"),
    }
}

fn wfc_increments(seed: u64, cases: usize) -> CheckOutcome {
    let mut rng = RngStream::new(seed, 2).rng();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(2..=12);
        let k = rng.random_range(1..=4);
        let g = random_gram(&mut rng, n, k);
        let picked: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
        let complement: Vec<usize> = (0..n).filter(|i| !picked.contains(i)).collect();
        for &t in &complement {
            let mut with = picked.clone();
            with.push(t);
            let direct = wfc(&g, &with).unwrap() - wfc(&g, &picked).unwrap();
            let fast = wfc_delta(&g, &complement, t).unwrap();
            worst = worst.max((direct - fast).abs() / g.wfp_full());
        }
    }
    CheckOutcome {
        name: "incremental wfc gain matches re-evaluation",
        passed: worst <= 1e-9,
        cases,
        detail: format!("largest relative gap {worst:e}"),
    }
}

fn joint_greedy_floor(seed: u64, cases: usize) -> CheckOutcome {
    let mut rng = RngStream::new(seed, 3).rng();
    let noise = NoisePartition::contiguous(&[4, 6, 4], vec![1.0; 3]);
    let constraints = SelectionConstraints::new(vec![2, 3, 1]);
    let mut worst_ratio = f64::INFINITY;
    let mut passed = true;
    for _ in 0..cases {
        let k = rng.random_range(2..=6);
        let g = random_gram(&mut rng, 14, k);
        let oracle = WfcOracle::new(&g);
        let greedy = jgs(&oracle, &noise, &constraints).unwrap();
        let opt = exhaustive_opt(&oracle, &noise, &constraints, OptOptions::default()).unwrap();
        passed &= greedy.final_cost >= 0.5 * opt.final_cost - 1e-12 * g.wfp_full();
        passed &= greedy.feasible;
        let sum: f64 = greedy.trajectory.iter().map(|s| s.gain).sum();
        passed &= (sum - greedy.final_cost).abs() <= 1e-9 * greedy.final_cost.abs().max(1e-300);
        worst_ratio = worst_ratio.min(greedy.final_cost / opt.final_cost);
    }
    CheckOutcome {
        name: "joint greedy reaches half of the optimum",
        passed,
        cases,
        detail: format!("smallest greedy/optimum ratio {worst_ratio:.6}"),
    }
}

fn two_set_recursion() -> CheckOutcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for quota in 1..=10 {
        for other in quota + 1..=100 {
            let r = 1.0 - (1.0 + quota as f64) / other as f64;
            for switch in quota..quota + other {
                let mut c = greedy_prefix_bound(switch, quota, other);
                for _ in switch..quota + other {
                    c = 1.0 / other as f64 + r * c;
                }
                let closed = two_set_bound(quota, other, switch).unwrap();
                worst = worst.max((closed - c).abs() / c.abs());
                cases += 1;
            }
        }
    }
    CheckOutcome {
        name: "two-set bound equals its step recursion",
        passed: worst <= 1e-12,
        cases,
        detail: format!("largest relative gap {worst:e}"),
    }
}

fn noiseless_recovery(seed: u64, cases: usize) -> CheckOutcome {
    let mut rng = RngStream::new(seed, 4).rng();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(6..=20);
        let k = rng.random_range(1..=5);
        let model = make_dct_model(n, k, &mut rng).unwrap();
        let noise = NoisePartition::new(vec![(0..n).collect()], vec![rng.random_range(0.1..2.0)]);
        let x = DVector::from_fn(k, |_, _| C64::new(standard_normal(&mut rng), 0.0));
        let y = model.noise_free(&x).unwrap();
        let x_hat = wls_estimate(&model, &noise, &(0..n).collect::<Vec<_>>(), &y).unwrap();
        worst = worst.max((x_hat - &x).norm() / x.norm());
    }
    CheckOutcome {
        name: "noise-free measurements are recovered exactly",
        passed: worst <= 1e-9,
        cases,
        detail: format!("largest relative error {worst:e}"),
    }
}

fn quantizer_idempotent(seed: u64, cases: usize) -> CheckOutcome {
    let mut rng = RngStream::new(seed, 5).rng();
    let mut passed = true;
    for _ in 0..cases {
        let bits = rng.random_range(1..=16);
        let range = rng.random_range(0.01..100.0);
        let y = rng.random_range(-2.0 * range..2.0 * range);
        let q = quantize(y, bits, range);
        passed &= quantize(q, bits, range) == q;
        if y.abs() <= range {
            passed &= (q - y).abs() <= range / 2f64.powi(bits as i32) * (1.0 + 1e-12);
        }
    }
    CheckOutcome {
        name: "quantizer is idempotent and within half a step",
        passed,
        cases,
        detail: String::new(),
    }
}

fn doa_jacobian(seed: u64, cases: usize) -> CheckOutcome {
    let mut rng = RngStream::new(seed, 6).rng();
    let mut worst = 0.0f64;
    let h = 1e-6;
    for _ in 0..cases {
        let k = rng.random_range(1..=5);
        let n = rng.random_range(2 * k..=50);
        let thetas: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let alphas: Vec<f64> = (0..k).map(|_| 5.0 * standard_normal(&mut rng)).collect();
        let positions: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let model = make_doa_model(&thetas, &alphas, &positions, 0.5).unwrap();
        let x0 = model.nominal().unwrap().clone();
        let jac = model.sensing_rows(None).unwrap();
        for p in 0..2 * k {
            let mut up = x0.clone();
            let mut down = x0.clone();
            up[p] += h;
            down[p] -= h;
            let fd = (model.noise_free(&up).unwrap() - model.noise_free(&down).unwrap()) / C64::new(2.0 * h, 0.0);
            let col = jac.column(p);
            worst = worst.max((fd - col).norm() / col.norm().max(1e-12));
        }
    }
    CheckOutcome {
        name: "direction-of-arrival Jacobian matches finite differences",
        passed: worst <= 1e-5,
        cases,
        detail: format!("largest relative gap {worst:e}"),
    }
}

/// Runs every check; `cases` scales the randomized ones.
pub fn run_checks(seed: u64, cases: usize) -> Vec<CheckOutcome> {
    vec![
        wfc_structure(seed, cases),
        wfc_increments(seed, cases),
        joint_greedy_floor(seed, cases.min(50)),
        two_set_recursion(),
        noiseless_recovery(seed, cases),
        quantizer_idempotent(seed, cases * 100),
        doa_jacobian(seed, cases),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_pass_on_a_small_budget() {
        for outcome in run_checks(3, 5) {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
    }
}
