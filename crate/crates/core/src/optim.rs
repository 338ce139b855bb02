//! Adaptive-RMS optimizer with momentum, cosine learning-rate restarts,
//! gradient clipping and the L1 + L2 weight penalty.

use std::f64::consts::PI;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::backprop::GradientSet;
use crate::error::{Error, Result};
use crate::tree::TreeParams;

/// L1 + L2 penalty `l1 * |W|_1 + l2 * |W|_2^2` over the layer matrices
/// (and optionally the leaves).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub l1: f64,
    pub l2: f64,
    pub include_leaves: bool,
}

impl Regularizer {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        if !(l1 >= 0.0 && l2 >= 0.0) {
            return Err(Error::config("regularization weights must be non-negative"));
        }
        Ok(Self {
            l1,
            l2,
            include_leaves: false,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.l1 == 0.0 && self.l2 == 0.0
    }

    /// Subgradient `l1 * sign(w) + 2 l2 w`, with `sign(0) = 0`.
    pub fn gradient(&self, params: &TreeParams) -> GradientSet {
        let mut out = GradientSet::zeros_like(params);
        let l1 = self.l1;
        let l2 = self.l2;
        let penal = |g: &mut f64, &w: &f64| {
            let s = if w > 0.0 {
                1.0
            } else if w < 0.0 {
                -1.0
            } else {
                0.0
            };
            *g = l1 * s + 2.0 * l2 * w;
        };
        for (g, w) in out.layers.iter_mut().zip(params.layers()) {
            Zip::from(g).and(w).for_each(penal);
        }
        if self.include_leaves {
            Zip::from(&mut out.leaves)
                .and(params.leaves())
                .for_each(penal);
        }
        out
    }
}

/// Cosine schedule with `restarts` equal-length cycles over `total_steps`:
/// `base * (1 + cos(pi t / C)) / 2` at offset `t` into a cycle of length `C`.
pub fn cosine_lr(step: usize, total_steps: usize, restarts: usize, base: f64) -> f64 {
    let restarts = restarts.max(1);
    let cycle = total_steps.max(1) as f64 / restarts as f64;
    let offset = (step as f64) % cycle;
    (base * (1.0 + (PI * offset / cycle).cos()) / 2.0).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clip {
    None,
    /// Rescale all gradients together when their global L2 norm exceeds the threshold.
    Norm(f64),
    /// Clamp every entry to `[-c, c]`.
    Value(f64),
}

impl Clip {
    pub fn apply(&self, grads: &mut GradientSet) {
        match *self {
            Clip::None => {}
            Clip::Norm(c) => {
                let norm = grads.norm_squared().sqrt();
                if norm > c {
                    grads.scale(c / norm);
                }
            }
            Clip::Value(c) => {
                for a in grads.arrays_mut() {
                    a.mapv_inplace(|v| v.clamp(-c, c));
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    /// Squared-gradient decay.
    pub rho: f64,
    pub eps: f64,
    pub momentum: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            rho: 0.99,
            eps: 1e-8,
            momentum: 0.0,
        }
    }
}

/// Optimizer state; buffers mirror the parameter shapes.
#[derive(Clone, Debug)]
pub struct RmsProp {
    cfg: RmsPropConfig,
    square_avg: GradientSet,
    momentum_buf: GradientSet,
}

impl RmsProp {
    pub fn new(params: &TreeParams, cfg: RmsPropConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.rho) {
            return Err(Error::config(format!("rho must be in [0, 1), got {}", cfg.rho)));
        }
        if !(cfg.eps >= 0.0) || !(cfg.momentum >= 0.0) {
            return Err(Error::config("eps and momentum must be non-negative"));
        }
        Ok(Self {
            cfg,
            square_avg: GradientSet::zeros_like(params),
            momentum_buf: GradientSet::zeros_like(params),
        })
    }

    /// Clips, then applies one update with learning rate `lr`. Any regularizer
    /// gradient must already be folded into `grads`.
    pub fn step(
        &mut self,
        params: &mut TreeParams,
        mut grads: GradientSet,
        lr: f64,
        clip: Clip,
    ) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::numeric("non-finite gradient"));
        }
        clip.apply(&mut grads);
        let RmsPropConfig { rho, eps, momentum } = self.cfg;
        let update = |p: &mut f64, &g: &f64, s: &mut f64, b: &mut f64| {
            *s = rho * *s + (1.0 - rho) * g * g;
            let v = g / (*s + eps).sqrt();
            *b = momentum * *b + v;
            *p -= lr * *b;
        };
        for m in 0..params.num_layers() {
            Zip::from(params.layer_mut(m))
                .and(&grads.layers[m])
                .and(&mut self.square_avg.layers[m])
                .and(&mut self.momentum_buf.layers[m])
                .for_each(update);
        }
        Zip::from(params.leaves_mut())
            .and(&grads.leaves)
            .and(&mut self.square_avg.leaves)
            .and(&mut self.momentum_buf.leaves)
            .for_each(update);
        Ok(())
    }
}
