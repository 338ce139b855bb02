//! Bagged forests of independently trained trees.

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{argmax, Dataset, Task};
use crate::error::{Error, Result};
use crate::eval::Predict;
use crate::train::{train_batch, OverparamSpec, TrainConfig};
use crate::tree::ObliqueTree;

/// `ceil(fraction * n)` rows drawn uniformly with replacement.
pub fn bootstrap_sample<R: Rng + ?Sized>(data: &Dataset, fraction: f64, rng: &mut R) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!("sample fraction must be in (0, 1], got {fraction}")));
    }
    let n = data.len();
    let m = ((fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    data.subset(&idx)
}

/// Seed of member `i`, independent of training order.
pub fn member_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    task: Task,
    members: Vec<ObliqueTree>,
    member_seeds: Vec<u64>,
    fraction: f64,
}

/// Forest output: mean of member values, or the plurality class.
#[derive(Clone, Debug, PartialEq)]
pub enum ForestPrediction {
    Value(Array1<f64>),
    Class(usize),
}

impl ForestModel {
    pub fn new(task: Task, members: Vec<ObliqueTree>, member_seeds: Vec<u64>, fraction: f64) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::config("a forest needs at least one member"))?;
        if members.len() != member_seeds.len() {
            return Err(Error::shape("one seed per member is required"));
        }
        let (d, k) = (first.input_dim(), first.num_outputs());
        if k != task.num_outputs() || members.iter().any(|m| m.input_dim() != d || m.num_outputs() != k) {
            return Err(Error::shape("forest members disagree on input or output width"));
        }
        Ok(Self {
            task,
            members,
            member_seeds,
            fraction,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn members(&self) -> &[ObliqueTree] {
        &self.members
    }

    pub fn member_seeds(&self) -> &[u64] {
        &self.member_seeds
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<ForestPrediction> {
        match self.task {
            Task::Regression => {
                let mut sum = Array1::zeros(self.task.num_outputs());
                for m in &self.members {
                    sum += &m.predict(x)?;
                }
                Ok(ForestPrediction::Value(sum / self.members.len() as f64))
            }
            Task::Classification { num_classes } => {
                let mut votes = Array1::<f64>::zeros(num_classes);
                for m in &self.members {
                    votes[argmax(m.predict(x)?)] += 1.0;
                }
                Ok(ForestPrediction::Class(argmax(votes.view())))
            }
        }
    }
}

/// Mean member output for regression; vote counts per class for classification,
/// so that `argmax` of the row is the plurality class.
impl Predict for ForestModel {
    fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        match self.predict(x)? {
            ForestPrediction::Value(v) => Ok(v),
            ForestPrediction::Class(_) => {
                let mut votes = Array1::zeros(self.task.num_outputs());
                for m in &self.members {
                    votes[argmax(m.predict(x)?)] += 1.0;
                }
                Ok(votes)
            }
        }
    }
}

/// Trains `n_trees` members on independent bootstrap samples. Members run on the
/// rayon pool; each derives its sample and initialisation from [`member_seed`],
/// so the result does not depend on scheduling.
pub fn train_forest(
    data: &Dataset,
    n_trees: usize,
    cfg: &TrainConfig,
    spec: &OverparamSpec,
    fraction: f64,
    seed: u64,
) -> Result<ForestModel> {
    if n_trees == 0 {
        return Err(Error::config("n_trees must be at least 1"));
    }
    cfg.validate()?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!("sample fraction must be in (0, 1], got {fraction}")));
    }
    let seeds: Vec<u64> = (0..n_trees).map(|i| member_seed(seed, i)).collect();
    let members = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let run = || -> Result<ObliqueTree> {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let sample = bootstrap_sample(data, fraction, &mut rng)?;
                let member_cfg = TrainConfig {
                    seed: rng.random(),
                    ..cfg.clone()
                };
                let (params, _) = train_batch(&sample, &member_cfg, spec, None)?;
                Ok(params.collapse())
            };
            run().map_err(|e| Error::Member {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ForestModel::new(data.task(), members, seeds, fraction)
}
