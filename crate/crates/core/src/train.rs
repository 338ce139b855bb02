//! Supervised minibatch training of a layered tree.

use std::io::Write;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backprop::BatchForward;
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::eval::{score, Metric};
use crate::loss::{loss_and_grad, LossKind};
use crate::optim::{cosine_lr, Clip, Regularizer, RmsProp, RmsPropConfig};
use crate::tree::{check_height, LeafInit, PathTables, TreeParams};

/// Which parameters [`train_batch`] returns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checkpoint {
    #[default]
    FinalEpoch,
    /// Parameters of the epoch with the best validation metric.
    BestValidation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub height: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: RmsPropConfig,
    /// Cosine cycles over the whole run; `None` keeps the rate constant.
    pub restarts: Option<usize>,
    pub clip: Clip,
    pub regularizer: Regularizer,
    /// Defaults to squared loss for regression and cross-entropy for classification.
    pub loss: Option<LossKind>,
    pub checkpoint: Checkpoint,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            height: 2,
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-2,
            optimizer: RmsPropConfig::default(),
            restarts: Some(3),
            clip: Clip::Norm(1e-2),
            regularizer: Regularizer::default(),
            loss: None,
            checkpoint: Checkpoint::FinalEpoch,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_height(self.height)?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be a finite non-negative number"));
        }
        if self.restarts == Some(0) {
            return Err(Error::config("restarts must be at least 1"));
        }
        match self.clip {
            Clip::Norm(c) | Clip::Value(c) if !(c > 0.0) => {
                return Err(Error::config("clip threshold must be positive"))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.optimizer.rho) {
            return Err(Error::config("rho must be in (0, 1)"));
        }
        Ok(())
    }

    fn loss_for(&self, task: Task) -> Result<LossKind> {
        let kind = self.loss.unwrap_or(match task {
            Task::Regression => LossKind::Squared,
            Task::Classification { .. } => LossKind::CrossEntropy,
        });
        match (kind, task) {
            (LossKind::Squared, Task::Regression)
            | (LossKind::CrossEntropy, Task::Classification { .. }) => Ok(kind),
            _ => Err(Error::config(format!("loss {kind:?} does not fit task {task:?}"))),
        }
    }
}

/// Hidden widths of the linear overparameterization (`L - 1` entries).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverparamSpec {
    pub hidden: Vec<usize>,
}

impl OverparamSpec {
    pub fn single_layer() -> Self {
        Self::default()
    }

    pub fn new(hidden: Vec<usize>) -> Result<Self> {
        if hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        Ok(Self { hidden })
    }

    /// Standard three-layer widths for even heights 2..=10.
    pub fn three_layer_default(height: usize) -> Result<Self> {
        let width = match height {
            2 => 240,
            4 => 600,
            6 => 1008,
            8 => 1530,
            10 => 2046,
            _ => {
                return Err(Error::config(format!(
                    "no default hidden widths for height {height}; pass them explicitly"
                )))
            }
        };
        Ok(Self {
            hidden: vec![width, width],
        })
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// All layer output widths, ending with `2^h - 1`.
    pub fn dims(&self, height: usize) -> Vec<usize> {
        let mut d = self.hidden.clone();
        d.push((1 << height) - 1);
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub train_loss: f64,
    pub val_metric: Option<Metric>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Leaf initialisation used for a task: small uniform values for regression
/// (targets live in `[0, 1]`), zeros for classification.
pub fn default_leaf_init(task: Task) -> LeafInit {
    match task {
        Task::Regression => LeafInit::Uniform(0.1),
        Task::Classification { .. } => LeafInit::Zeros,
    }
}

/// Randomly initialised parameters for `data`'s shape and task.
pub fn init_params(data: &Dataset, cfg: &TrainConfig, spec: &OverparamSpec) -> Result<TreeParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    TreeParams::random(
        cfg.height,
        data.dim(),
        data.task().num_outputs(),
        &spec.hidden,
        default_leaf_init(data.task()),
        &mut rng,
    )
}

/// Trains a fresh tree on `data` (expected normalized).
pub fn train_batch(
    data: &Dataset,
    cfg: &TrainConfig,
    spec: &OverparamSpec,
    validation: Option<&Dataset>,
) -> Result<(TreeParams, TrainingLog)> {
    cfg.validate()?;
    let params = init_params(data, cfg, spec)?;
    train_batch_from(params, data, cfg, validation)
}

/// Continues training from existing parameters.
pub fn train_batch_from(
    mut params: TreeParams,
    data: &Dataset,
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<(TreeParams, TrainingLog)> {
    cfg.validate()?;
    if params.height() != cfg.height {
        return Err(Error::config("parameter height differs from configured height"));
    }
    if data.dim() != params.input_dim() || data.task().num_outputs() != params.num_outputs() {
        return Err(Error::shape("dataset shape does not match the model"));
    }
    let loss = cfg.loss_for(data.task())?;
    let tables = PathTables::new(cfg.height)?;
    let mut opt = RmsProp::new(&params, cfg.optimizer)?;
    // the shuffle stream is kept apart from the initialisation stream
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_5EED);

    let n = data.len();
    let b = cfg.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(b);
    let total_steps = cfg.epochs * steps_per_epoch;
    let k = params.num_outputs();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;
    let mut log = TrainingLog::default();
    let mut best: Option<(Metric, TreeParams)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut lr = cfg.learning_rate;
        for chunk in order.chunks(b) {
            let xs = data.features().select(Axis(0), chunk);
            let fwd = BatchForward::new(&params, xs.view())?;
            let preds = fwd.predictions(&params);
            let mut out_grads = Array2::zeros((chunk.len(), k));
            for (r, &i) in chunk.iter().enumerate() {
                let (l, g) = loss_and_grad(preds.row(r), data.label(i), loss)?;
                epoch_loss += l;
                out_grads.row_mut(r).assign(&g);
            }
            if !epoch_loss.is_finite() {
                return Err(Error::numeric(format!("non-finite training loss in epoch {epoch}")));
            }
            let mut grads = fwd.backward(&params, &tables, out_grads.view())?;
            if !cfg.regularizer.is_zero() {
                grads.add_scaled(&cfg.regularizer.gradient(&params), 1.0);
            }
            lr = match cfg.restarts {
                Some(r) => cosine_lr(step, total_steps, r, cfg.learning_rate),
                None => cfg.learning_rate,
            };
            opt.step(&mut params, grads, lr, cfg.clip)
                .map_err(|e| Error::numeric(format!("epoch {epoch}, step {step}: {e}")))?;
            step += 1;
        }
        let val_metric = validation.map(|v| score(&params, v)).transpose()?;
        if cfg.checkpoint == Checkpoint::BestValidation {
            if let Some(m) = val_metric {
                if best.as_ref().is_none_or(|(bm, _)| m.better_than(bm)) {
                    best = Some((m, params.clone()));
                }
            }
        }
        log.records.push(EpochRecord {
            epoch,
            step,
            lr,
            train_loss: epoch_loss / n as f64,
            val_metric,
        });
    }
    match best {
        Some((_, p)) => Ok((p, log)),
        None => Ok((params, log)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Targets, Task};
    use ndarray::Array2;

    fn constant_data(y: f64) -> Dataset {
        let x = Array2::from_shape_fn((64, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        Dataset::new(x, Targets::Values(vec![y; 64]), Task::Regression).unwrap()
    }

    #[test]
    fn identical_targets_are_fit() {
        let data = constant_data(0.7);
        let cfg = TrainConfig {
            height: 1,
            epochs: 200,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (params, log) = train_batch(&data, &cfg, &OverparamSpec::single_layer(), None).unwrap();
        let Metric::Rmse(r) = score(&params, &data).unwrap() else { unreachable!() };
        assert!(r < 1e-2, "rmse {r}");
        assert_eq!(log.records.len(), 200);
    }

    #[test]
    fn zero_learning_rate_is_bit_identical() {
        let data = constant_data(0.3);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            ..TrainConfig::default()
        };
        let spec = OverparamSpec::new(vec![4]).unwrap();
        let init = init_params(&data, &cfg, &spec).unwrap();
        let (params, _) = train_batch(&data, &cfg, &spec, None).unwrap();
        assert_eq!(params, init);
    }

    #[test]
    fn table_widths() {
        assert_eq!(OverparamSpec::three_layer_default(6).unwrap().dims(6), vec![1008, 1008, 63]);
        assert_eq!(OverparamSpec::three_layer_default(2).unwrap().dims(2), vec![240, 240, 3]);
        assert!(OverparamSpec::three_layer_default(3).is_err());
    }

    #[test]
    fn loss_must_fit_task() {
        let data = constant_data(0.1);
        let cfg = TrainConfig {
            loss: Some(LossKind::CrossEntropy),
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_batch(&data, &cfg, &OverparamSpec::single_layer(), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bad_config_rejected() {
        let data = constant_data(0.1);
        for cfg in [
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { clip: Clip::Norm(0.0), ..TrainConfig::default() },
            TrainConfig { height: 0, ..TrainConfig::default() },
        ] {
            assert!(train_batch(&data, &cfg, &OverparamSpec::single_layer(), None).is_err());
        }
    }
}
