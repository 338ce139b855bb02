//! Acceptance suite. Runs every check in sequence and prints one PASS/FAIL line
//! per check. Arguments that do not start with `-` filter checks by name.
//!
//! The optional real-data check reads the UCI Abalone file from `DGT_ABALONE`
//! or `tests/data/abalone.data` and is skipped when neither exists.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use dgt::backprop::{backprop, layer_gradients, SoftPathScores};
use dgt::bandit::{
    arm_probabilities, estimate_grad_classification, estimate_grad_two_point, one_point_with_direction,
    train_bandit, Action, BanditConfig, EstimatorKind, LossOracle, Round, SimulatedStream,
};
use dgt::data::{fit_apply_normalization, rmse, split, split_holdout, Dataset, Targets, Task};
use dgt::eval::{score, Metric, Predict};
use dgt::forest::train_forest;
use dgt::loss::OracleLoss;
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::train::{init_params, train_batch, OverparamSpec, TrainConfig};
use dgt::tree::{path_indicator_product, path_indicator_sum, route, PathTables, TreeParams};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 10;
/// Epochs for the synthetic supervised runs (upper end of the standard range,
/// as the training sets are small).
const EPOCHS: usize = 400;
const BANDIT_ROUNDS: usize = 50_000;
const TWO_POINT_ROUNDS: usize = 200_000;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Check {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks = [
        Check { name: "path_indicator_forms_agree", budget: Duration::from_secs(10), run: path_indicator_forms_agree },
        Check { name: "collapse_fidelity", budget: Duration::from_secs(10), run: collapse_fidelity },
        Check { name: "gradient_oracles", budget: Duration::from_secs(30), run: gradient_oracles },
        Check { name: "estimator_identities", budget: Duration::from_secs(5), run: estimator_identities },
        Check { name: "supervised_recovery", budget: Duration::from_secs(300), run: supervised_recovery },
        Check { name: "one_point_bandit_regression", budget: Duration::from_secs(600), run: one_point_bandit_regression },
        Check { name: "bandit_classification", budget: Duration::from_secs(600), run: bandit_classification },
        Check { name: "two_point_matches_supervised", budget: Duration::from_secs(600), run: two_point_matches_supervised },
        Check { name: "forest_variance_reduction", budget: Duration::from_secs(900), run: forest_variance_reduction },
        Check { name: "abalone_rmse", budget: Duration::from_secs(1800), run: abalone_rmse },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for check in &checks {
        if !filters.is_empty() && !filters.iter().any(|f| check.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check.run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::Fail(format!("panicked: {msg}"))
            });
        let elapsed = start.elapsed();
        let over = elapsed > check.budget;
        let time = format!("{:.1}s of {}s", elapsed.as_secs_f64(), check.budget.as_secs());
        match outcome {
            Outcome::Pass(d) if !over => println!("PASS {} [{time}] {d}", check.name),
            Outcome::Pass(d) | Outcome::Fail(d) => {
                failed += 1;
                let why = if over { " (over time budget)" } else { "" };
                println!("FAIL {} [{time}]{why} {d}", check.name);
            }
            Outcome::Skip(d) => println!("SKIP {} {d}", check.name),
        }
    }
    println!("acceptance: {} run, {} failed", ran, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn path_indicator_forms_agree() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = 12_000;
    let mut ties = 0;
    for _ in 0..cases {
        let h = rng.random_range(1..=6);
        let d = rng.random_range(1..=4);
        let p = random_params(&mut rng, h, d, 1);
        let x = random_vec(&mut rng, d, 2.0);
        let mut a = p.decision_activations(x.view()).unwrap();
        if rng.random_bool(0.2) {
            let r = rng.random_range(0..a.len());
            a[r] = 0.0;
            ties += 1;
        }
        let t = PathTables::new(h).unwrap();
        let prod: Vec<u8> = (0..t.num_leaves()).map(|l| path_indicator_product(a.view(), &t, l)).collect();
        let sum: Vec<u8> = (0..t.num_leaves()).map(|l| path_indicator_sum(a.view(), &t, l)).collect();
        if prod != sum {
            return Outcome::Fail(format!("h={h}: product {prod:?} vs sum {sum:?}"));
        }
        let ones: Vec<usize> = (0..prod.len()).filter(|&l| prod[l] == 1).collect();
        let expected = route_oracle(a.as_slice().unwrap(), h);
        if ones != [expected] || route(a.view(), h) != expected {
            return Outcome::Fail(format!("h={h}: indicator {ones:?}, routed leaf {expected}"));
        }
    }
    Outcome::Pass(format!("{cases} cases, h in 1..=6, {ties} with an exact zero activation"))
}

fn collapse_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut total, mut agree) = (0usize, 0usize);
    for _ in 0..100 {
        let h = rng.random_range(1..=6);
        let d = rng.random_range(1..=5);
        let hidden = vec![rng.random_range(2..=8), rng.random_range(2..=8)];
        let p = TreeParams::random(h, d, 1, &hidden, dgt::tree::LeafInit::Uniform(1.0), &mut rng).unwrap();
        let tree = p.collapse();
        for _ in 0..100 {
            let x = random_vec(&mut rng, d, 1.5);
            let layered = p.forward_hard(x.view()).unwrap().0;
            let collapsed = tree.leaf_index(x.view()).unwrap();
            total += 1;
            if layered == collapsed {
                agree += 1;
                continue;
            }
            let a = p.decision_activations(x.view()).unwrap();
            let (rows, _) = tree.path(x.view());
            let near_zero = rows
                .iter()
                .any(|&r| a[r].abs() < 1e-9 || tree.node_activation(r, x.view()).abs() < 1e-9);
            if !near_zero {
                return Outcome::Fail(format!("disagreement with all visited |a| >= 1e-9 at h={h}"));
            }
        }
    }
    let frac = agree as f64 / total as f64;
    verdict(frac >= 0.999, format!("{agree}/{total} inputs agree ({:.4}%)", 100.0 * frac))
}

fn gradient_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = [0.0f64; 3];
    let mut counted = [0usize; 4];

    // softmax mixing coefficients vs central differences of sum softmax(q) theta
    for _ in 0..500 {
        let h = rng.random_range(1..=5);
        let t = PathTables::new(h).unwrap();
        let a = random_vec(&mut rng, t.num_internal(), 2.0);
        let theta = random_vec(&mut rng, t.num_leaves(), 3.0);
        let soft = SoftPathScores::new(a.view(), &t, theta.view());
        let coef = soft.score_coefficients(theta.view());
        let q = hard_scores(a.as_slice().unwrap(), h);
        if soft.scores != q {
            return Outcome::Fail("path scores differ from the oracle".into());
        }
        let eps = 1e-5;
        for l in 0..q.len() {
            let mut up = q.clone();
            up[l] += eps;
            let mut down = q.clone();
            down[l] -= eps;
            let fd = (soft_mix(&up, theta.as_slice().unwrap()) - soft_mix(&down, theta.as_slice().unwrap())) / (2.0 * eps);
            let closed = (theta[l] - soft.mixture / soft.partition) * q[l].exp() / soft.partition;
            worst[0] = worst[0].max((fd - coef[l]).abs());
            if !close(fd, coef[l], 1e-6, 1e-9) || !close(closed, coef[l], 1e-9, 1e-15) {
                return Outcome::Fail(format!("mixing coefficient {l}: fd {fd}, got {}, closed form {closed}", coef[l]));
            }
        }
        counted[0] += 1;
    }

    // straight-through layer gradients vs the clip surrogate, inside the band
    let mut attempts = 0;
    while counted[1] < 300 && attempts < 200_000 {
        attempts += 1;
        let h = rng.random_range(1..=4);
        let d = rng.random_range(1..=3);
        let k = rng.random_range(1..=3);
        let p = random_params(&mut rng, h, d, k);
        let x = random_vec(&mut rng, d, 1.0);
        let a = activations_oracle(p.layers(), x.as_slice().unwrap());
        if a.iter().any(|v| v.abs() >= 0.999) {
            continue;
        }
        let t = PathTables::new(h).unwrap();
        let g = random_vec(&mut rng, k, 1.0);
        let theta_bar: Vec<f64> = p.leaves().dot(&g).to_vec();
        let coef = mixing_coefficients(&a, h, &theta_bar);
        let grads = backprop(&p, &t, x.view(), g.view()).unwrap();
        for m in 0..p.num_layers() {
            let fd = fd_layer(p.layers(), m, 1e-6, |ls| clip_surrogate(ls, x.as_slice().unwrap(), h, &coef));
            for (f, b) in fd.iter().zip(grads.layers[m].iter()) {
                worst[1] = worst[1].max((f - b).abs());
                if !close(*f, *b, 1e-6, 1e-6) {
                    return Outcome::Fail(format!("layer {m}: fd {f}, backprop {b}"));
                }
            }
        }
        counted[1] += 1;
    }
    if counted[1] < 300 {
        return Outcome::Fail(format!("only {} in-band cases found", counted[1]));
    }

    // linear chain: gradient of each node activation w.r.t. every layer
    for _ in 0..300 {
        let h = rng.random_range(1..=4);
        let d = rng.random_range(1..=4);
        let p = random_params(&mut rng, h, d, 1);
        let x = random_vec(&mut rng, d, 1.0);
        let n = (1 << h) - 1;
        for r in 0..n {
            let mut e = Array1::zeros(n);
            e[r] = 1.0;
            let lg = layer_gradients(&p, x.view(), e.view()).unwrap();
            for m in 0..p.num_layers() {
                let fd = fd_layer(p.layers(), m, 1e-6, |ls| activations_oracle(ls, x.as_slice().unwrap())[r]);
                for (f, b) in fd.iter().zip(lg[m].iter()) {
                    worst[2] = worst[2].max((f - b).abs());
                    if !close(*f, *b, 1e-6, 1e-6) {
                        return Outcome::Fail(format!("node {r}, layer {m}: fd {f}, chain {b}"));
                    }
                }
            }
        }
        counted[2] += 1;
    }

    // leaf gradient is exactly the routed basis vector times out_grad
    for _ in 0..1000 {
        let h = rng.random_range(1..=5);
        let d = rng.random_range(1..=4);
        let k = rng.random_range(1..=4);
        let p = random_params(&mut rng, h, d, k);
        let x = random_vec(&mut rng, d, 2.0);
        let g = random_vec(&mut rng, k, 5.0);
        let grads = backprop(&p, &PathTables::new(h).unwrap(), x.view(), g.view()).unwrap();
        let leaf = route_oracle(&activations_oracle(p.layers(), x.as_slice().unwrap()), h);
        let mut expected = Array2::zeros((1 << h, k));
        expected.row_mut(leaf).assign(&g);
        if grads.leaves != expected {
            return Outcome::Fail("leaf gradient is not e_leaf x out_grad".into());
        }
        counted[3] += 1;
    }
    Outcome::Pass(format!(
        "mixing {} cases (max abs err {:.1e}), straight-through {} cases (max abs err {:.1e}), chain {} cases (max abs err {:.1e}), leaf {} cases exact",
        counted[0], worst[0], counted[1], worst[1], counted[2], worst[2], counted[3]
    ))
}

fn estimator_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (c, t, k) = (rng.random_range(0.1..5.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0));
        let y = rng.random_range(-3.0..3.0);
        let delta = rng.random_range(1e-3..2.0);
        let mut quad = |a: Action| match a {
            Action::Value(v) => Ok(c * (v - t) * (v - t) + k),
            Action::Arm(_) => unreachable!(),
        };
        let (g, _) = estimate_grad_two_point(&mut quad, y, delta).unwrap();
        let exact = 2.0 * c * (y - t);
        let scale = 1.0 + (c * (y.abs() + t.abs() + delta).powi(2) + k) / delta;
        worst = worst.max((g - exact).abs() / scale);
        if (g - exact).abs() > 8.0 * f64::EPSILON * scale {
            return Outcome::Fail(format!("two-point {g} vs exact {exact}"));
        }

        // any loss: the average over both directions is the central difference
        let mut cubic = |a: Action| match a {
            Action::Value(v) => Ok((v - t).powi(3).abs() + (v * c).sin() + 2.0),
            Action::Arm(_) => unreachable!(),
        };
        let plus = one_point_with_direction(&mut cubic, y, delta, 1.0).unwrap().0;
        let minus = one_point_with_direction(&mut cubic, y, delta, -1.0).unwrap().0;
        let central = estimate_grad_two_point(&mut cubic, y, delta).unwrap().0;
        if ((plus + minus) / 2.0 - central).abs() > 4.0 * f64::EPSILON * (plus.abs() + minus.abs()) {
            return Outcome::Fail(format!("one-point average {} vs central {central}", (plus + minus) / 2.0));
        }
    }
    for _ in 0..10_000 {
        let k = rng.random_range(2..=10);
        let delta = rng.random_range(1e-3..=1.0);
        let scores = random_vec(&mut rng, k, 3.0);
        let p = arm_probabilities(scores.view(), delta).unwrap();
        let floor = delta / k as f64;
        let sum: f64 = p.sum();
        let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
        if (sum - 1.0).abs() > 1e-12 || (min - floor).abs() > 1e-15 || p.iter().any(|&v| v < floor - 1e-15) {
            return Outcome::Fail(format!("probabilities {p:?} for delta {delta}"));
        }
        let arm = rng.random_range(0..k);
        let loss = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let g = estimate_grad_classification(loss, arm, p.view(), scores.view()).unwrap();
        if g.iter().enumerate().any(|(i, &v)| i != arm && v != 0.0) {
            return Outcome::Fail(format!("gradient {g:?} leaks off arm {arm}"));
        }
    }
    Outcome::Pass(format!(
        "10000 quadratic two-point cases (max scaled err {worst:.1e}), one-point averages, 10000 exploration distributions"
    ))
}

fn unit_rmse(p: &impl Predict, d: &Dataset) -> f64 {
    match score(p, d).unwrap() {
        Metric::Rmse(r) => r,
        Metric::Accuracy(_) => unreachable!(),
    }
}

fn train_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        height: 2,
        epochs: EPOCHS,
        seed,
        ..TrainConfig::default()
    }
}

/// Held-out RMSE of single-layer batch training on the noiseless problem, per seed.
fn batch_single_layer() -> &'static Vec<f64> {
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    CACHE.get_or_init(|| {
        (0..SEEDS)
            .map(|seed| {
                let (train, test) = oracle_regression(seed, 0.0);
                let (p, _) = train_batch(&train, &train_cfg(seed), &OverparamSpec::single_layer(), None).unwrap();
                unit_rmse(&p, &test)
            })
            .collect()
    })
}

fn fmt(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", s.join(" "))
}

fn supervised_recovery() -> Outcome {
    for seed in 0..SEEDS {
        let (raw, truth) = gen_oracle_tree(&OracleTreeSpec::regression(2, 2, 0.0), 2500, seed).unwrap();
        let pred: Vec<f64> = (0..raw.len()).map(|i| truth.predict(raw.row(i)).unwrap()[0]).collect();
        if rmse(&pred, values(&raw)) != 0.0 {
            return Outcome::Fail(format!("ground-truth tree does not reproduce its data for seed {seed}"));
        }
    }
    let single = batch_single_layer();
    let spec = OverparamSpec::three_layer_default(2).unwrap();
    let three: Vec<f64> = (0..SEEDS)
        .map(|seed| {
            let (train, test) = oracle_regression(seed, 0.0);
            let (p, _) = train_batch(&train, &train_cfg(seed), &spec, None).unwrap();
            unit_rmse(&p, &test)
        })
        .collect();
    let hits = single.iter().filter(|&&r| r <= 0.05).count();
    let (m1, m3) = (median(single), median(&three));
    verdict(
        hits >= 8 && m3 <= m1,
        format!(
            "L=1 rmse<=0.05 in {hits}/10 seeds (need 8) {}; median L=1 {m1:.4}, L=3 {m3:.4} {}",
            fmt(single),
            fmt(&three)
        ),
    )
}

/// Trace of held-out RMSE every 1000 rounds, plus the final RMSE.
fn run_regression_bandit(seed: u64, noise: f64, estimator: EstimatorKind, rounds: usize) -> (f64, Vec<f64>) {
    let (train, test) = oracle_regression(seed, noise);
    let cfg = BanditConfig {
        estimator,
        seed,
        ..BanditConfig::default()
    };
    let init = init_params(&train, &train_cfg(seed), &OverparamSpec::single_layer()).unwrap();
    let tables = PathTables::new(2).unwrap();
    let stream = SimulatedStream::new(&train, OracleLoss::Squared, rounds, seed).unwrap();
    let eval_set = test.clone();
    let (p, trace) = train_bandit(
        stream,
        &cfg,
        init,
        &tables,
        Some(move |p: &TreeParams| Ok(unit_rmse(p, &eval_set))),
    )
    .unwrap();
    assert_eq!(trace.queries, rounds * estimator.queries_per_round());
    let metrics = trace.snapshots.iter().map(|s| s.metric.unwrap()).collect();
    (unit_rmse(&p, &test), metrics)
}

fn one_point_bandit_regression() -> Outcome {
    let batch = batch_single_layer();
    let mut finals = Vec::new();
    let mut traces = Vec::new();
    for seed in 0..SEEDS {
        let (r, trace) = run_regression_bandit(seed, 0.0, EstimatorKind::OnePoint, BANDIT_ROUNDS);
        finals.push(r);
        traces.push(trace);
    }
    let hits = finals.iter().zip(batch).filter(|(b, s)| **b <= 2.0 * **s).count();
    // mean over seeds, then averaged within 5k-round windows
    let n = traces[0].len();
    let mean: Vec<f64> = (0..n).map(|i| traces.iter().map(|t| t[i]).sum::<f64>() / traces.len() as f64).collect();
    let windows: Vec<f64> = mean.chunks(5).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let increases = windows.windows(2).filter(|w| w[1] > w[0]).count();
    verdict(
        hits >= 8 && increases == 0,
        format!(
            "bandit <= 2x batch in {hits}/10 seeds (need 8) bandit {} batch {}; smoothed mean trace {} ({increases} increases)",
            fmt(&finals),
            fmt(batch),
            fmt(&windows)
        ),
    )
}

/// Counts every query reaching the labelled oracle.
struct Counting<O> {
    inner: O,
    count: std::rc::Rc<std::cell::Cell<usize>>,
}

impl<O: LossOracle> LossOracle for Counting<O> {
    fn evaluate(&mut self, action: Action) -> dgt::Result<f64> {
        self.count.set(self.count.get() + 1);
        self.inner.evaluate(action)
    }
}

fn bandit_classification() -> Outcome {
    let mut best = Vec::new();
    for seed in 0..SEEDS {
        let (data, _) = gen_oracle_tree(&OracleTreeSpec::classification(2, 2, 3), 2500, seed).unwrap();
        let (train, test) = split_holdout(&data, 0.2, seed).unwrap();
        let test = test.with_num_classes(3).unwrap();
        let (train, mut rest, _) = fit_apply_normalization(&train, &[&test]).unwrap();
        let test = rest.pop().unwrap();
        let cfg = BanditConfig {
            seed,
            ..BanditConfig::classification()
        };
        let init = init_params(&train, &train_cfg(seed), &OverparamSpec::single_layer()).unwrap();
        let count = std::rc::Rc::new(std::cell::Cell::new(0));
        let stream = SimulatedStream::new(&train, OracleLoss::ZeroOne, BANDIT_ROUNDS, seed)
            .unwrap()
            .map(|r| Round {
                features: r.features,
                oracle: Counting {
                    inner: r.oracle,
                    count: count.clone(),
                },
            });
        let eval_set = test.clone();
        let (_, trace) = train_bandit(
            stream,
            &cfg,
            init,
            &PathTables::new(2).unwrap(),
            Some(move |p: &TreeParams| Ok(score(p, &eval_set)?.value())),
        )
        .unwrap();
        if count.get() != BANDIT_ROUNDS || trace.queries != BANDIT_ROUNDS {
            return Outcome::Fail(format!("{} oracle queries for {BANDIT_ROUNDS} rounds", count.get()));
        }
        best.push(trace.snapshots.iter().filter_map(|s| s.metric).fold(0.0, f64::max));
    }
    let hits = best.iter().filter(|&&a| a >= 0.9).count();
    verdict(
        hits >= 8,
        format!("best held-out accuracy >= 90% in {hits}/10 seeds (need 8) {}; one query per round audited", fmt(&best)),
    )
}

fn two_point_matches_supervised() -> Outcome {
    let mut bandit = Vec::new();
    let mut batch = Vec::new();
    for seed in 0..SEEDS {
        let (train, test) = oracle_regression(seed, 0.1);
        let (p, _) = train_batch(&train, &train_cfg(seed), &OverparamSpec::single_layer(), None).unwrap();
        batch.push(unit_rmse(&p, &test));
        bandit.push(run_regression_bandit(seed, 0.1, EstimatorKind::TwoPoint, TWO_POINT_ROUNDS).0);
    }
    let (mb, ms) = (median(&bandit), median(&batch));
    verdict(
        mb <= 1.1 * ms,
        format!(
            "median two-point rmse {mb:.4} vs batch {ms:.4} (ratio {:.3}, need <= 1.1) bandit {} batch {}",
            mb / ms,
            fmt(&bandit),
            fmt(&batch)
        ),
    )
}

fn forest_variance_reduction() -> Outcome {
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..SEEDS {
        let (train, test) = oracle_regression(seed, 0.1);
        let forest = train_forest(&train, 10, &train_cfg(seed), &OverparamSpec::single_layer(), 1.0, seed).unwrap();
        let forest_rmse = unit_rmse(&forest, &test);
        let member_mean =
            forest.members().iter().map(|m| unit_rmse(m, &test)).sum::<f64>() / forest.members().len() as f64;
        if forest_rmse <= member_mean {
            wins += 1;
        }
        rows.push(format!("{forest_rmse:.4}/{member_mean:.4}"));
    }
    verdict(
        wins >= 9,
        format!("forest <= mean member rmse in {wins}/10 seeds (need 9) [{}]", rows.join(" ")),
    )
}

fn abalone_path() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("DGT_ABALONE").map(PathBuf::from),
        Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/abalone.data")),
    ];
    candidates.into_iter().flatten().find(|p| p.is_file())
}

/// Reads the UCI file (sex, seven measurements, rings), one-hot encoding sex.
fn load_abalone(path: &PathBuf) -> Dataset {
    let text = std::fs::read_to_string(path).unwrap();
    let mut feats = Vec::new();
    let mut rings = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        assert_eq!(cells.len(), 9, "unexpected abalone row: {line}");
        let sex = match cells[0] {
            "M" => [1.0, 0.0, 0.0],
            "F" => [0.0, 1.0, 0.0],
            _ => [0.0, 0.0, 1.0],
        };
        feats.extend_from_slice(&sex);
        feats.extend(cells[1..8].iter().map(|c| c.parse::<f64>().unwrap()));
        rings.push(cells[8].parse::<f64>().unwrap());
    }
    let n = rings.len();
    Dataset::new(Array2::from_shape_vec((n, 10), feats).unwrap(), Targets::Values(rings), Task::Regression).unwrap()
}

fn abalone_rmse() -> Outcome {
    let Some(path) = abalone_path() else {
        return Outcome::Skip("dataset not found (set DGT_ABALONE or add tests/data/abalone.data)".into());
    };
    let data = load_abalone(&path);
    let (train, _val, test) = split(&data, [0.8, 0.1, 0.1], 0).unwrap();
    let (train, mut rest, stats) = fit_apply_normalization(&train, &[&test]).unwrap();
    let test = rest.pop().unwrap();
    let cfg = TrainConfig {
        height: 6,
        epochs: 100,
        seed: 0,
        ..TrainConfig::default()
    };
    let (p, _) = train_batch(&train, &cfg, &OverparamSpec::three_layer_default(6).unwrap(), None).unwrap();
    let r = unit_rmse(&p, &test) * stats.target_span();
    verdict(r <= 2.35, format!("test rmse {r:.3} rings (need <= 2.35)"))
}
