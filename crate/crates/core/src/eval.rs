use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{accuracy, argmax, rmse, Dataset, Targets};
use crate::error::Result;
use crate::prune::PrunedTree;
use crate::tree::{ObliqueTree, TreeParams};

/// Anything that maps a feature row to a leaf value vector.
pub trait Predict {
    fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>>;
}

impl Predict for TreeParams {
    fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.forward_hard(x)?.1.to_owned())
    }
}

impl Predict for ObliqueTree {
    fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.predict(x)?.to_owned())
    }
}

impl Predict for PrunedTree {
    fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.predict(x)?.to_owned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse(f64),
    Accuracy(f64),
}

impl Metric {
    pub fn value(&self) -> f64 {
        match *self {
            Metric::Rmse(v) | Metric::Accuracy(v) => v,
        }
    }

    /// Whether `self` is strictly better than `other` (same kind assumed).
    pub fn better_than(&self, other: &Metric) -> bool {
        match (self, other) {
            (Metric::Rmse(a), Metric::Rmse(b)) => a < b,
            (Metric::Accuracy(a), Metric::Accuracy(b)) => a > b,
            _ => false,
        }
    }
}

/// RMSE for regression data (in the data's own units), accuracy otherwise.
pub fn score<M: Predict + ?Sized>(model: &M, data: &Dataset) -> Result<Metric> {
    let n = data.len();
    match data.targets() {
        Targets::Values(y) => {
            let pred = (0..n)
                .map(|i| Ok(model.predict_row(data.row(i))?[0]))
                .collect::<Result<Vec<_>>>()?;
            Ok(Metric::Rmse(rmse(&pred, y)))
        }
        Targets::Classes(c) => {
            let pred = (0..n)
                .map(|i| Ok(argmax(model.predict_row(data.row(i))?.view())))
                .collect::<Result<Vec<_>>>()?;
            Ok(Metric::Accuracy(accuracy(&pred, c)))
        }
    }
}
