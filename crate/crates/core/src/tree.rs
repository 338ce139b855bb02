//! Complete binary oblique trees: the layered (trainable) form, the collapsed
//! (deployable) form, and the path bookkeeping shared by both.
//!
//! Internal nodes are numbered breadth-first: node `j` at depth `i` lives in
//! row `2^i - 1 + j` of the decision matrix. Leaves are numbered left to right.
//! A node sends an example to its right child when its activation is `>= 0`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported tree height; leaf storage grows as `2^h`.
pub const MAX_HEIGHT: usize = 16;

/// Flat row of internal node `(depth, j)`.
#[inline]
pub fn node_row(depth: usize, j: usize) -> usize {
    (1 << depth) - 1 + j
}

/// Hard step: 1 for `a >= 0`, else 0.
#[inline]
pub fn step(a: f64) -> f64 {
    if a >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `2 * step(a) - 1`, so `sign(0) = +1`.
#[inline]
pub fn sign(a: f64) -> f64 {
    if a >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Predecessor indices and subtree directions for every (depth, leaf) pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathTables {
    height: usize,
    pred_index: Vec<usize>,
    sign: Vec<i8>,
}

impl PathTables {
    pub fn new(height: usize) -> Result<Self> {
        check_height(height)?;
        let leaves = 1usize << height;
        let mut pred_index = Vec::with_capacity(height * leaves);
        let mut sign = Vec::with_capacity(height * leaves);
        for depth in 0..height {
            for leaf in 0..leaves {
                pred_index.push(leaf >> (height - depth));
                sign.push(if (leaf >> (height - 1 - depth)) & 1 == 1 { 1 } else { -1 });
            }
        }
        Ok(Self {
            height,
            pred_index,
            sign,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_leaves(&self) -> usize {
        1 << self.height
    }

    pub fn num_internal(&self) -> usize {
        (1 << self.height) - 1
    }

    /// `I(depth, leaf)`: index (within its depth) of the leaf's ancestor at `depth`.
    #[inline]
    pub fn pred(&self, depth: usize, leaf: usize) -> usize {
        self.pred_index[depth * self.num_leaves() + leaf]
    }

    /// `S(depth, leaf)`: -1 if the leaf sits in the left subtree of its ancestor at `depth`.
    #[inline]
    pub fn sign(&self, depth: usize, leaf: usize) -> i8 {
        self.sign[depth * self.num_leaves() + leaf]
    }

    /// Flat row of the ancestor of `leaf` at `depth`.
    #[inline]
    pub fn pred_row(&self, depth: usize, leaf: usize) -> usize {
        node_row(depth, self.pred(depth, leaf))
    }
}

pub(crate) fn check_height(height: usize) -> Result<()> {
    if height == 0 || height > MAX_HEIGHT {
        return Err(Error::config(format!(
            "tree height must be in 1..={MAX_HEIGHT}, got {height}"
        )));
    }
    Ok(())
}

/// Descends the tree given all node activations and returns the reached leaf.
pub fn route(activations: ArrayView1<'_, f64>, height: usize) -> usize {
    let mut j = 0usize;
    for depth in 0..height {
        let go_right = activations[node_row(depth, j)] >= 0.0;
        j = 2 * j + go_right as usize;
    }
    j
}

/// Factor contributed by the node at `depth` on the path to `leaf`: the hard
/// step of the activation oriented by `S(depth, leaf)`. At exactly zero the
/// right branch gets 1 and the left branch 0.
#[inline]
fn oriented_step(a: f64, s: i8) -> f64 {
    if s > 0 {
        step(a)
    } else {
        1.0 - step(a)
    }
}

/// Product-form path indicator of `leaf` given activations.
pub fn path_indicator_product(
    activations: ArrayView1<'_, f64>,
    tables: &PathTables,
    leaf: usize,
) -> u8 {
    let q: f64 = (0..tables.height())
        .map(|i| oriented_step(activations[tables.pred_row(i, leaf)], tables.sign(i, leaf)))
        .product();
    q as u8
}

/// Sum-form path indicator: `step(sum_i step(a_i S_i) - h)`.
pub fn path_indicator_sum(
    activations: ArrayView1<'_, f64>,
    tables: &PathTables,
    leaf: usize,
) -> u8 {
    let total: f64 = (0..tables.height())
        .map(|i| oriented_step(activations[tables.pred_row(i, leaf)], tables.sign(i, leaf)))
        .sum();
    step(total - tables.height() as f64) as u8
}

/// How leaves are initialised by [`TreeParams::random`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LeafInit {
    /// Uniform in `[-r, r]`.
    Uniform(f64),
    Zeros,
}

/// The trainable model: a stack of linear layers producing one activation per
/// internal node, plus a leaf-value matrix of shape `2^h x K`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeParams {
    height: usize,
    input_dim: usize,
    num_outputs: usize,
    layers: Vec<Array2<f64>>,
    leaves: Array2<f64>,
}

impl TreeParams {
    /// Validates and assembles a parameter set. The first layer takes `input_dim + 1`
    /// columns (the trailing column multiplies the constant bias coordinate).
    pub fn new(height: usize, layers: Vec<Array2<f64>>, leaves: Array2<f64>) -> Result<Self> {
        check_height(height)?;
        let first = layers
            .first()
            .ok_or_else(|| Error::shape("at least one layer is required"))?;
        if first.ncols() < 1 {
            return Err(Error::shape("first layer needs a bias column"));
        }
        let input_dim = first.ncols() - 1;
        for (m, pair) in layers.windows(2).enumerate() {
            if pair[1].ncols() != pair[0].nrows() {
                return Err(Error::shape(format!(
                    "layer {} has {} columns but layer {} has {} rows",
                    m + 2,
                    pair[1].ncols(),
                    m + 1,
                    pair[0].nrows()
                )));
            }
        }
        let internal = (1usize << height) - 1;
        let last = layers.last().expect("non-empty");
        if last.nrows() != internal {
            return Err(Error::shape(format!(
                "last layer must have {internal} rows for height {height}, got {}",
                last.nrows()
            )));
        }
        if leaves.nrows() != 1 << height || leaves.ncols() == 0 {
            return Err(Error::shape(format!(
                "leaf matrix must be {} x K with K >= 1, got {} x {}",
                1 << height,
                leaves.nrows(),
                leaves.ncols()
            )));
        }
        Ok(Self {
            height,
            input_dim,
            num_outputs: leaves.ncols(),
            layers,
            leaves,
        })
    }

    /// Random initialisation: layer entries uniform in `±1/sqrt(fan_in)`.
    /// `hidden` lists the intermediate widths `d_1 .. d_{L-1}` (empty for `L = 1`).
    pub fn random<R: Rng + ?Sized>(
        height: usize,
        input_dim: usize,
        num_outputs: usize,
        hidden: &[usize],
        leaf_init: LeafInit,
        rng: &mut R,
    ) -> Result<Self> {
        check_height(height)?;
        if num_outputs == 0 {
            return Err(Error::config("num_outputs must be at least 1"));
        }
        if hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim + 1);
        dims.extend_from_slice(hidden);
        dims.push((1 << height) - 1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound))
            })
            .collect();
        let leaves = match leaf_init {
            LeafInit::Zeros => Array2::zeros((1 << height, num_outputs)),
            LeafInit::Uniform(r) => {
                Array2::from_shape_fn((1 << height, num_outputs), |_| rng.random_range(-r..=r))
            }
        };
        Self::new(height, layers, leaves)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub fn leaves(&self) -> &Array2<f64> {
        &self.leaves
    }

    pub fn layer_mut(&mut self, m: usize) -> ArrayViewMut2<'_, f64> {
        self.layers[m].view_mut()
    }

    pub fn leaves_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.leaves.view_mut()
    }

    /// Output widths of every layer, ending with `2^h - 1`.
    pub fn layer_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|w| w.nrows()).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|w| w.len()).sum::<usize>() + self.leaves.len()
    }

    pub(crate) fn check_input(&self, x: ArrayView1<'_, f64>) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "expected {} features, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Outputs of every layer for one example, starting with the bias-augmented input.
    pub(crate) fn forward_states(&self, x: ArrayView1<'_, f64>) -> Result<Vec<Array1<f64>>> {
        self.check_input(x)?;
        let mut states = Vec::with_capacity(self.layers.len() + 1);
        states.push(augment(x));
        for w in &self.layers {
            let next = w.dot(states.last().expect("non-empty"));
            states.push(next);
        }
        Ok(states)
    }

    /// Node activations `W^(L) ... W^(1) [x; 1]`, one per internal node.
    pub fn decision_activations(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        let mut h = augment(x);
        for w in &self.layers {
            h = w.dot(&h);
        }
        Ok(h)
    }

    /// Hard forward pass: reached leaf and its value vector.
    pub fn forward_hard(&self, x: ArrayView1<'_, f64>) -> Result<(usize, ArrayView1<'_, f64>)> {
        let a = self.decision_activations(x)?;
        let leaf = route(a.view(), self.height);
        Ok((leaf, self.leaves.row(leaf)))
    }

    /// Product of the layer stack, shape `(2^h - 1) x (d + 1)`.
    pub fn decision_matrix(&self) -> Array2<f64> {
        let mut layers = self.layers.iter();
        let mut m = layers.next().expect("non-empty").clone();
        for w in layers {
            m = w.dot(&m);
        }
        m
    }

    /// Multiplies out the layer stack into a single oblique tree.
    pub fn collapse(&self) -> ObliqueTree {
        let m = self.decision_matrix();
        let d = self.input_dim;
        ObliqueTree {
            height: self.height,
            weights: m.slice(s![.., ..d]).to_owned(),
            biases: m.column(d).to_owned(),
            leaves: self.leaves.clone(),
        }
    }
}

pub(crate) fn augment(x: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut out = Array1::ones(x.len() + 1);
    out.slice_mut(s![..x.len()]).assign(&x);
    out
}

/// Deployment form: one hyperplane per internal node, one value vector per leaf.
/// Inference costs exactly `h` dot products.
#[derive(Clone, Debug, PartialEq)]
pub struct ObliqueTree {
    height: usize,
    weights: Array2<f64>,
    biases: Array1<f64>,
    leaves: Array2<f64>,
}

impl ObliqueTree {
    pub fn from_parts(
        height: usize,
        weights: Array2<f64>,
        biases: Array1<f64>,
        leaves: Array2<f64>,
    ) -> Result<Self> {
        check_height(height)?;
        let internal = (1usize << height) - 1;
        if weights.nrows() != internal || biases.len() != internal {
            return Err(Error::shape(format!(
                "height {height} needs {internal} node hyperplanes, got {} weights / {} biases",
                weights.nrows(),
                biases.len()
            )));
        }
        if leaves.nrows() != 1 << height || leaves.ncols() == 0 {
            return Err(Error::shape("leaf matrix must be 2^h x K with K >= 1"));
        }
        Ok(Self {
            height,
            weights,
            biases,
            leaves,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.leaves.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f64> {
        &self.biases
    }

    pub fn leaves(&self) -> &Array2<f64> {
        &self.leaves
    }

    /// `<w_row, x> + b_row`.
    #[inline]
    pub fn node_activation(&self, row: usize, x: ArrayView1<'_, f64>) -> f64 {
        self.weights.row(row).dot(&x) + self.biases[row]
    }

    /// Rows of the internal nodes visited by `x`, root first, followed by the leaf index.
    pub fn path(&self, x: ArrayView1<'_, f64>) -> (Vec<usize>, usize) {
        let mut rows = Vec::with_capacity(self.height);
        let mut j = 0usize;
        for depth in 0..self.height {
            let row = node_row(depth, j);
            rows.push(row);
            j = 2 * j + (self.node_activation(row, x) >= 0.0) as usize;
        }
        (rows, j)
    }

    pub fn leaf_index(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "expected {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut j = 0usize;
        for depth in 0..self.height {
            j = 2 * j + (self.node_activation(node_row(depth, j), x) >= 0.0) as usize;
        }
        Ok(j)
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<ArrayView1<'_, f64>> {
        let leaf = self.leaf_index(x)?;
        Ok(self.leaves.row(leaf))
    }
}
