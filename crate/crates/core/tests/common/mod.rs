//! Shared oracles and experiment helpers for the integration tests.
//!
//! The oracles below are written with plain loops and index arithmetic on
//! purpose: they must not route through the library code they check.

#![allow(dead_code)]

use dgt::data::{fit_apply_normalization, split_holdout, Dataset, Targets};
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::tree::{LeafInit, TreeParams};
use ndarray::{Array1, Array2};
use rand::Rng;

/// Node activations `W_L ... W_1 [x; 1]` by explicit loops.
pub fn activations_oracle(layers: &[Array2<f64>], x: &[f64]) -> Vec<f64> {
    let mut h: Vec<f64> = x.iter().copied().chain(std::iter::once(1.0)).collect();
    for w in layers {
        let mut next = vec![0.0; w.nrows()];
        for (r, out) in next.iter_mut().enumerate() {
            for (c, v) in h.iter().enumerate() {
                *out += w[[r, c]] * v;
            }
        }
        h = next;
    }
    h
}

/// Breadth-first row of the depth-`i` ancestor of leaf `l` in a height-`h` tree.
pub fn ancestor_row(h: usize, i: usize, l: usize) -> usize {
    (1usize << i) - 1 + (l >> (h - i))
}

/// +1 if the path to `l` turns right at depth `i`, else -1.
pub fn turn(h: usize, i: usize, l: usize) -> f64 {
    if (l >> (h - 1 - i)) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Leaf reached by descending with `a >= 0` meaning right.
pub fn route_oracle(a: &[f64], h: usize) -> usize {
    let mut j = 0;
    for i in 0..h {
        j = 2 * j + usize::from(a[(1 << i) - 1 + j] >= 0.0);
    }
    j
}

/// `sum_l softmax(q)_l theta_l`.
pub fn soft_mix(q: &[f64], theta: &[f64]) -> f64 {
    let z: f64 = q.iter().map(|v| v.exp()).sum();
    q.iter().zip(theta).map(|(v, t)| v.exp() * t).sum::<f64>() / z
}

/// Hard sum-form scores `q_l = sum_i sign(a) S(i, l)` with `sign(0) = +1`.
pub fn hard_scores(a: &[f64], h: usize) -> Vec<f64> {
    (0..1usize << h)
        .map(|l| {
            (0..h)
                .map(|i| {
                    let s = if a[ancestor_row(h, i, l)] >= 0.0 { 1.0 } else { -1.0 };
                    s * turn(h, i, l)
                })
                .sum()
        })
        .collect()
}

/// Mixing coefficients `p_l (theta_l - sum_k p_k theta_k)` at the hard scores.
pub fn mixing_coefficients(a: &[f64], h: usize, theta: &[f64]) -> Vec<f64> {
    let q = hard_scores(a, h);
    let z: f64 = q.iter().map(|v| v.exp()).sum();
    let p: Vec<f64> = q.iter().map(|v| v.exp() / z).collect();
    let mean: f64 = p.iter().zip(theta).map(|(p, t)| p * t).sum();
    p.iter().zip(theta).map(|(p, t)| p * (t - mean)).collect()
}

/// `sum_l c_l sum_i S(i, l) clip(a_{i, I(i, l)}, -1, 1)`: the smooth surrogate
/// whose gradient the straight-through pass reproduces inside the band.
pub fn clip_surrogate(layers: &[Array2<f64>], x: &[f64], h: usize, coef: &[f64]) -> f64 {
    let a = activations_oracle(layers, x);
    (0..1usize << h)
        .map(|l| {
            coef[l]
                * (0..h)
                    .map(|i| turn(h, i, l) * a[ancestor_row(h, i, l)].clamp(-1.0, 1.0))
                    .sum::<f64>()
        })
        .sum()
}

/// Central finite differences of `f` over every entry of layer `m`.
pub fn fd_layer<F: Fn(&[Array2<f64>]) -> f64>(layers: &[Array2<f64>], m: usize, eps: f64, f: F) -> Array2<f64> {
    let mut out = Array2::zeros(layers[m].raw_dim());
    let mut work = layers.to_vec();
    for idx in ndarray::indices(layers[m].raw_dim()) {
        let orig = work[m][idx];
        work[m][idx] = orig + eps;
        let up = f(&work);
        work[m][idx] = orig - eps;
        let down = f(&work);
        work[m][idx] = orig;
        out[idx] = (up - down) / (2.0 * eps);
    }
    out
}

pub fn random_params<R: Rng>(rng: &mut R, height: usize, dim: usize, outputs: usize) -> TreeParams {
    let hidden: Vec<usize> = match rng.random_range(0..3) {
        0 => vec![],
        1 => vec![rng.random_range(1..6)],
        _ => vec![rng.random_range(1..6), rng.random_range(1..6)],
    };
    TreeParams::random(height, dim, outputs, &hidden, LeafInit::Uniform(1.0), rng).unwrap()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, r: f64) -> Array1<f64> {
    (0..n).map(|_| rng.random_range(-r..=r)).collect()
}

/// Noisy or noiseless regression problem from a random height-2 oracle tree in
/// 2-D: 2000 training and 500 held-out rows, normalized with training statistics.
pub fn oracle_regression(seed: u64, noise: f64) -> (Dataset, Dataset) {
    let (data, _) = gen_oracle_tree(&OracleTreeSpec::regression(2, 2, noise), 2500, seed).unwrap();
    let (train, test) = split_holdout(&data, 0.2, seed).unwrap();
    let (train, mut rest, _) = fit_apply_normalization(&train, &[&test]).unwrap();
    (train, rest.pop().unwrap())
}

pub fn values(d: &Dataset) -> &[f64] {
    match d.targets() {
        Targets::Values(v) => v,
        Targets::Classes(_) => panic!("regression data expected"),
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Relative closeness with an absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + floor
}
