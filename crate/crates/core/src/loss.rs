//! Losses: the differentiable ones used for supervised training, and the
//! black-box ones hidden behind bandit oracles.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label of one supervised example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label {
    Value(f64),
    Class(usize),
}

/// Supervised training loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Squared,
    CrossEntropy,
}

/// Loss value and its gradient with respect to the prediction vector.
pub fn loss_and_grad(
    prediction: ArrayView1<'_, f64>,
    label: Label,
    kind: LossKind,
) -> Result<(f64, Array1<f64>)> {
    match (kind, label) {
        (LossKind::Squared, Label::Value(y)) => {
            if prediction.len() != 1 {
                return Err(Error::shape("squared loss expects a scalar prediction"));
            }
            let r = prediction[0] - y;
            Ok((r * r, Array1::from_elem(1, 2.0 * r)))
        }
        (LossKind::CrossEntropy, Label::Class(c)) => {
            let k = prediction.len();
            if c >= k {
                return Err(Error::data(format!("class {c} out of range for {k} outputs")));
            }
            let max = prediction.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let exp = prediction.mapv(|v| (v - max).exp());
            let total = exp.sum();
            let mut grad = exp / total;
            let loss = -(grad[c].ln());
            grad[c] -= 1.0;
            Ok((loss, grad))
        }
        (kind, label) => Err(Error::config(format!(
            "loss {kind:?} does not apply to label {label:?}"
        ))),
    }
}

/// Loss used by simulated oracles. Only its value is ever revealed to a learner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleLoss {
    Squared,
    /// Quadratic within `|r| <= xi`, then `xi |r| - xi^2 / 2`.
    Huber(f64),
    ZeroOne,
}

impl OracleLoss {
    pub fn is_classification(&self) -> bool {
        matches!(self, OracleLoss::ZeroOne)
    }

    /// Regression loss of predicting `y_hat` when the target is `y`.
    pub fn regression(&self, y_hat: f64, y: f64) -> Result<f64> {
        let r = (y_hat - y).abs();
        match *self {
            OracleLoss::Squared => Ok(r * r),
            OracleLoss::Huber(xi) => Ok(huber(r, xi)),
            OracleLoss::ZeroOne => Err(Error::config("zero_one loss needs a class prediction")),
        }
    }

    pub fn classification(&self, arm: usize, class: usize) -> Result<f64> {
        match self {
            OracleLoss::ZeroOne => Ok(if arm == class { 0.0 } else { 1.0 }),
            _ => Err(Error::config("regression loss cannot score a class prediction")),
        }
    }
}

fn huber(abs_residual: f64, xi: f64) -> f64 {
    if abs_residual <= xi {
        abs_residual * abs_residual
    } else {
        xi * abs_residual - 0.5 * xi * xi
    }
}

impl FromStr for OracleLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(OracleLoss::Squared),
            "zero_one" => Ok(OracleLoss::ZeroOne),
            _ => {
                let xi = s
                    .strip_prefix("huber:")
                    .ok_or_else(|| Error::config(format!("unknown loss '{s}'")))?;
                let xi: f64 = xi
                    .parse()
                    .map_err(|_| Error::config(format!("bad huber threshold in '{s}'")))?;
                if !(xi > 0.0 && xi.is_finite()) {
                    return Err(Error::config("huber threshold must be positive"));
                }
                Ok(OracleLoss::Huber(xi))
            }
        }
    }
}

impl fmt::Display for OracleLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleLoss::Squared => write!(f, "squared"),
            OracleLoss::Huber(xi) => write!(f, "huber:{xi}"),
            OracleLoss::ZeroOne => write!(f, "zero_one"),
        }
    }
}
