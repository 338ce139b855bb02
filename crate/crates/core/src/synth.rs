//! Synthetic data labelled by a random oblique tree, used where a known
//! ground-truth model is needed.

use ndarray::{Array1, Array2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{Dataset, Targets, Task};
use crate::error::{Error, Result};
use crate::tree::{check_height, node_row, ObliqueTree};

const MAX_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleTreeSpec {
    pub height: usize,
    pub input_dim: usize,
    /// Standard deviation of Gaussian label noise (regression only).
    pub noise: f64,
    pub task: Task,
}

impl OracleTreeSpec {
    pub fn regression(height: usize, input_dim: usize, noise: f64) -> Self {
        Self {
            height,
            input_dim,
            noise,
            task: Task::Regression,
        }
    }

    pub fn classification(height: usize, input_dim: usize, num_classes: usize) -> Self {
        Self {
            height,
            input_dim,
            noise: 0.0,
            task: Task::Classification { num_classes },
        }
    }
}

/// Samples `n` points uniformly from `[-1, 1]^d` and labels them with a random
/// oblique tree whose every leaf receives at least `max(10, n / 2^(h+2))` points.
pub fn gen_oracle_tree(spec: &OracleTreeSpec, n: usize, seed: u64) -> Result<(Dataset, ObliqueTree)> {
    check_height(spec.height)?;
    if n == 0 || spec.input_dim == 0 {
        return Err(Error::config("generator needs n >= 1 and input_dim >= 1"));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::config("noise must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.input_dim;
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..=1.0));
    let leaves = 1usize << spec.height;
    let min_per_leaf = 10.max(n / (1 << (spec.height + 2)));

    let (weights, biases) = (0..MAX_ATTEMPTS)
        .find_map(|_| {
            let (w, b) = draw_predicates(&x, spec.height, &mut rng);
            let tree = ObliqueTree::from_parts(
                spec.height,
                w.clone(),
                b.clone(),
                Array2::zeros((leaves, 1)),
            )
            .expect("valid shapes");
            let mut counts = vec![0usize; leaves];
            for row in x.rows() {
                counts[tree.leaf_index(row).expect("dims match")] += 1;
            }
            counts.iter().all(|&c| c >= min_per_leaf).then_some((w, b))
        })
        .ok_or_else(|| {
            Error::data(format!(
                "could not cover all {leaves} leaves with >= {min_per_leaf} of {n} points \
                 after {MAX_ATTEMPTS} predicate draws"
            ))
        })?;

    match spec.task {
        Task::Regression => {
            let values = Array2::from_shape_fn((leaves, 1), |_| rng.random_range(0.0..=1.0));
            let tree = ObliqueTree::from_parts(spec.height, weights, biases, values)?;
            let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::config(e.to_string()))?;
            let y = x
                .rows()
                .into_iter()
                .map(|row| tree.predict(row).expect("dims match")[0] + noise.sample(&mut rng))
                .collect();
            Ok((Dataset::new(x, Targets::Values(y), Task::Regression)?, tree))
        }
        Task::Classification { num_classes } => {
            // every class owns at least one leaf when there are enough leaves
            let mut classes: Vec<usize> = (0..leaves).map(|l| l % num_classes).collect();
            classes.shuffle(&mut rng);
            let mut values = Array2::zeros((leaves, num_classes));
            for (l, &c) in classes.iter().enumerate() {
                values[[l, c]] = 1.0;
            }
            let tree = ObliqueTree::from_parts(spec.height, weights, biases, values)?;
            let y = x
                .rows()
                .into_iter()
                .map(|row| classes[tree.leaf_index(row).expect("dims match")])
                .collect();
            Ok((Dataset::new(x, Targets::Classes(y), spec.task)?, tree))
        }
    }
}

/// Random unit-normal hyperplanes, each passing through a sample point that
/// reaches its node.
fn draw_predicates(x: &Array2<f64>, height: usize, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols();
    let internal = (1usize << height) - 1;
    let mut weights = Array2::zeros((internal, d));
    let mut biases = Array1::zeros(internal);
    let mut members: Vec<Vec<usize>> = vec![(0..x.nrows()).collect()];
    for depth in 0..height {
        let mut next = Vec::with_capacity(members.len() * 2);
        for (j, idx) in members.iter().enumerate() {
            let row = node_row(depth, j);
            let mut w: Array1<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let norm = w.dot(&w).sqrt().max(1e-12);
            w /= norm;
            let anchor = match idx.choose(rng) {
                Some(&i) => x.row(i).to_owned(),
                None => Array1::zeros(d),
            };
            biases[row] = -w.dot(&anchor);
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for &i in idx {
                if w.dot(&x.row(i)) + biases[row] >= 0.0 {
                    right.push(i);
                } else {
                    left.push(i);
                }
            }
            weights.row_mut(row).assign(&w);
            next.push(left);
            next.push(right);
        }
        members = next;
    }
    (weights, biases)
}
