//! Dense backward pass through a hard tree.
//!
//! The forward value is always the hard prediction `theta_{l*}`. For the layer
//! gradients the path indicator is replaced by a softmax over the sum-form path
//! scores `q~_l = sum_i sign(a_{i,I(i,l)}) S(i,l)`, and `d sign(a) / da` is taken
//! as `1{|a| <= 1}` (straight-through). The leaf gradient is `e_{l*}` routed
//! through the caller's output gradient.
//!
//! For `K > 1` outputs every gradient is that of the scalar `<out_grad, f(x)>`,
//! so leaves are scalarised as `theta_bar_l = <out_grad, theta_l>`.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::tree::{route, sign, PathTables, TreeParams};

/// Width of the straight-through band: `d sign(a)/da = 1{|a| <= STE_THRESHOLD}`.
pub const STE_THRESHOLD: f64 = 1.0;

/// Gradients with the same shapes as a [`TreeParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Array2<f64>>,
    pub leaves: Array2<f64>,
}

impl GradientSet {
    pub fn zeros_like(params: &TreeParams) -> Self {
        Self {
            layers: params
                .layers()
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            leaves: Array2::zeros(params.leaves().raw_dim()),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.layers {
            *w *= factor;
        }
        self.leaves *= factor;
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &GradientSet, factor: f64) {
        for (w, o) in self.layers.iter_mut().zip(&other.layers) {
            w.scaled_add(factor, o);
        }
        self.leaves.scaled_add(factor, &other.leaves);
    }

    pub fn norm_squared(&self) -> f64 {
        self.arrays().map(|a| a.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().all(|a| a.iter().all(|v| v.is_finite()))
    }

    pub fn arrays(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.layers.iter().chain(std::iter::once(&self.leaves))
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.layers.iter_mut().chain(std::iter::once(&mut self.leaves))
    }
}

/// Softmax view of the path scores used by the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftPathScores {
    /// Hard-routed leaf `l*`.
    pub leaf: usize,
    /// `q~_l`, integers in `[-h, h]`.
    pub scores: Vec<f64>,
    /// `softmax(q~)`.
    pub weights: Vec<f64>,
    /// `z = sum_l exp(q~_l)`.
    pub partition: f64,
    /// `v = sum_l exp(q~_l) theta_bar_l`.
    pub mixture: f64,
}

impl SoftPathScores {
    pub fn new(
        activations: ArrayView1<'_, f64>,
        tables: &PathTables,
        scalarized_leaves: ArrayView1<'_, f64>,
    ) -> Self {
        let h = tables.height();
        let scores: Vec<f64> = (0..tables.num_leaves())
            .map(|l| {
                (0..h)
                    .map(|i| sign(activations[tables.pred_row(i, l)]) * tables.sign(i, l) as f64)
                    .sum()
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = scores.iter().map(|q| (q - max).exp()).collect();
        let total: f64 = shifted.iter().sum();
        let weights: Vec<f64> = shifted.iter().map(|e| e / total).collect();
        let partition = total * max.exp();
        let mixture = scores
            .iter()
            .zip(scalarized_leaves.iter())
            .map(|(q, t)| q.exp() * t)
            .sum();
        Self {
            leaf: route(activations, h),
            scores,
            weights,
            partition,
            mixture,
        }
    }

    /// `d/dq~_l sum_k softmax(q~)_k theta_bar_k = (1/z)(theta_bar_l - v/z) exp(q~_l)`,
    /// evaluated as `p_l (theta_bar_l - sum_k p_k theta_bar_k)`.
    pub fn score_coefficients(&self, scalarized_leaves: ArrayView1<'_, f64>) -> Vec<f64> {
        let mix: f64 = self
            .weights
            .iter()
            .zip(scalarized_leaves.iter())
            .map(|(p, t)| p * t)
            .sum();
        self.weights
            .iter()
            .zip(scalarized_leaves.iter())
            .map(|(p, t)| p * (t - mix))
            .collect()
    }
}

/// Gradient of `sum_l coef_l q~_l` with respect to the node activations, using the
/// straight-through derivative of `sign`.
pub fn node_coefficients(
    activations: ArrayView1<'_, f64>,
    tables: &PathTables,
    score_coefficients: &[f64],
) -> Array1<f64> {
    let mut out = Array1::zeros(tables.num_internal());
    for (l, &c) in score_coefficients.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for i in 0..tables.height() {
            let row = tables.pred_row(i, l);
            if activations[row].abs() <= STE_THRESHOLD {
                out[row] += c * tables.sign(i, l) as f64;
            }
        }
    }
    out
}

fn check_out_grad(params: &TreeParams, out_grad: ArrayView1<'_, f64>) -> Result<()> {
    if out_grad.len() != params.num_outputs() {
        return Err(Error::shape(format!(
            "output gradient has length {}, model has {} outputs",
            out_grad.len(),
            params.num_outputs()
        )));
    }
    Ok(())
}

/// Gradients of `<node_delta, a(x)>` with respect to every layer matrix, where
/// `a = W^(L) ... W^(1) [x; 1]`.
pub fn layer_gradients(
    params: &TreeParams,
    x: ArrayView1<'_, f64>,
    node_delta: ArrayView1<'_, f64>,
) -> Result<Vec<Array2<f64>>> {
    if node_delta.len() != (1 << params.height()) - 1 {
        return Err(Error::shape("one delta per internal node is required"));
    }
    let states = params.forward_states(x)?;
    Ok(chain_backward(params, &states, node_delta.to_owned()))
}

fn chain_backward(params: &TreeParams, states: &[Array1<f64>], mut delta: Array1<f64>) -> Vec<Array2<f64>> {
    let mut out: Vec<Array2<f64>> = params
        .layers()
        .iter()
        .map(|w| Array2::zeros(w.raw_dim()))
        .collect();
    for m in (0..params.num_layers()).rev() {
        let input = &states[m];
        for (r, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                out[m].row_mut(r).scaled_add(d, input);
            }
        }
        if m > 0 {
            delta = params.layers()[m].t().dot(&delta);
        }
    }
    out
}

/// Gradients of `<out_grad, f(x)>` for a single example.
pub fn backprop(
    params: &TreeParams,
    tables: &PathTables,
    x: ArrayView1<'_, f64>,
    out_grad: ArrayView1<'_, f64>,
) -> Result<GradientSet> {
    check_out_grad(params, out_grad)?;
    let states = params.forward_states(x)?;
    let a = states.last().expect("non-empty");
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::numeric("non-finite node activation"));
    }
    let theta_bar = params.leaves().dot(&out_grad);
    let soft = SoftPathScores::new(a.view(), tables, theta_bar.view());
    let coef = soft.score_coefficients(theta_bar.view());
    let delta = node_coefficients(a.view(), tables, &coef);

    let mut grads = GradientSet::zeros_like(params);
    grads.layers = chain_backward(params, &states, delta);
    grads.leaves.row_mut(soft.leaf).assign(&out_grad);
    Ok(grads)
}

/// Layer outputs for a batch, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchForward {
    /// `states[0]` is the bias-augmented input (`n x (d+1)`), `states[L]` the activations.
    states: Vec<Array2<f64>>,
    leaf: Vec<usize>,
}

impl BatchForward {
    pub fn new(params: &TreeParams, xs: ArrayView2<'_, f64>) -> Result<Self> {
        if xs.ncols() != params.input_dim() {
            return Err(Error::shape(format!(
                "expected {} features, got {}",
                params.input_dim(),
                xs.ncols()
            )));
        }
        let ones = Array2::ones((xs.nrows(), 1));
        let mut states = Vec::with_capacity(params.num_layers() + 1);
        states.push(concatenate(Axis(1), &[xs, ones.view()]).expect("same row count"));
        for w in params.layers() {
            let next = states.last().expect("non-empty").dot(&w.t());
            states.push(next);
        }
        let acts = states.last().expect("non-empty");
        if !acts.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("non-finite node activation"));
        }
        let leaf = acts
            .rows()
            .into_iter()
            .map(|a| route(a, params.height()))
            .collect();
        Ok(Self { states, leaf })
    }

    pub fn leaf_indices(&self) -> &[usize] {
        &self.leaf
    }

    pub fn activations(&self) -> ArrayView2<'_, f64> {
        self.states.last().expect("non-empty").view()
    }

    /// Hard predictions, `n x K`.
    pub fn predictions(&self, params: &TreeParams) -> Array2<f64> {
        params.leaves().select(Axis(0), &self.leaf)
    }

    /// Minibatch-averaged gradients: `(1/n) sum_i backprop(x_i, out_grad_i)`.
    pub fn backward(
        &self,
        params: &TreeParams,
        tables: &PathTables,
        out_grads: ArrayView2<'_, f64>,
    ) -> Result<GradientSet> {
        let n = self.leaf.len();
        if out_grads.nrows() != n || out_grads.ncols() != params.num_outputs() {
            return Err(Error::shape(format!(
                "output gradients must be {n} x {}, got {} x {}",
                params.num_outputs(),
                out_grads.nrows(),
                out_grads.ncols()
            )));
        }
        let mut grads = GradientSet::zeros_like(params);
        if n == 0 {
            return Ok(grads);
        }
        let inv_n = 1.0 / n as f64;
        let theta_bar = out_grads.dot(&params.leaves().t());
        let acts = self.activations();
        let mut delta = Array2::zeros((n, tables.num_internal()));
        for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
            let tb = theta_bar.row(i);
            let soft = SoftPathScores::new(acts.row(i), tables, tb);
            let coef = soft.score_coefficients(tb);
            row.assign(&node_coefficients(acts.row(i), tables, &coef));
        }
        for m in (0..params.num_layers()).rev() {
            grads.layers[m] = delta.t().dot(&self.states[m]) * inv_n;
            if m > 0 {
                delta = delta.dot(&params.layers()[m]);
            }
        }
        for (i, &leaf) in self.leaf.iter().enumerate() {
            grads
                .leaves
                .row_mut(leaf)
                .scaled_add(inv_n, &out_grads.row(i));
        }
        Ok(grads)
    }
}
