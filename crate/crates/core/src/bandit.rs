//! Online training from bandit feedback.
//!
//! Each round the learner sees features only, deploys a prediction, and receives
//! a scalar loss from a [`LossOracle`]. The loss derivative at the prediction is
//! estimated from those values and pushed through the dense backward pass.

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backprop::{backprop, GradientSet};
use crate::data::{argmax, Dataset, Targets};
use crate::error::{Error, Result};
use crate::loss::OracleLoss;
use crate::optim::{Clip, Regularizer, RmsProp, RmsPropConfig};
use crate::tree::{PathTables, TreeParams};

/// What the learner deploys in a round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Action {
    Value(f64),
    Arm(usize),
}

/// Black-box loss for the current round's (hidden) example.
pub trait LossOracle {
    fn evaluate(&mut self, action: Action) -> Result<f64>;
}

impl<F: FnMut(Action) -> Result<f64>> LossOracle for F {
    fn evaluate(&mut self, action: Action) -> Result<f64> {
        self(action)
    }
}

/// Counts queries and refuses any beyond its budget.
#[derive(Debug)]
pub struct MeteredOracle<O> {
    inner: O,
    budget: usize,
    used: usize,
}

impl<O: LossOracle> MeteredOracle<O> {
    pub fn new(inner: O, budget: usize) -> Self {
        Self {
            inner,
            budget,
            used: 0,
        }
    }

    pub fn queries(&self) -> usize {
        self.used
    }
}

impl<O: LossOracle> LossOracle for MeteredOracle<O> {
    fn evaluate(&mut self, action: Action) -> Result<f64> {
        if self.used >= self.budget {
            return Err(Error::Oracle(format!(
                "query budget of {} per round exhausted",
                self.budget
            )));
        }
        self.used += 1;
        let loss = self.inner.evaluate(action)?;
        if !loss.is_finite() {
            return Err(Error::Oracle(format!("oracle returned non-finite loss {loss}")));
        }
        Ok(loss)
    }
}

/// One-point estimate `l(y + delta u) u / delta`, `u` uniform on `{-1, +1}`.
/// Returns the estimate, the deployed value `y + delta u`, and its loss.
pub fn estimate_grad_one_point<O: LossOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &mut O,
    y_hat: f64,
    delta: f64,
    rng: &mut R,
) -> Result<(f64, f64, f64)> {
    let u = if rng.random::<bool>() { 1.0 } else { -1.0 };
    one_point_with_direction(oracle, y_hat, delta, u)
}

/// [`estimate_grad_one_point`] with a fixed direction `u`.
pub fn one_point_with_direction<O: LossOracle + ?Sized>(
    oracle: &mut O,
    y_hat: f64,
    delta: f64,
    u: f64,
) -> Result<(f64, f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::config("perturbation delta must be positive"));
    }
    let deployed = y_hat + delta * u;
    let loss = oracle.evaluate(Action::Value(deployed))?;
    Ok((loss * u / delta, deployed, loss))
}

/// Central difference `(l(y + delta) - l(y - delta)) / (2 delta)`. Also returns the
/// mean of the two observed losses.
pub fn estimate_grad_two_point<O: LossOracle + ?Sized>(
    oracle: &mut O,
    y_hat: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::config("perturbation delta must be positive"));
    }
    let up = oracle.evaluate(Action::Value(y_hat + delta))?;
    let down = oracle.evaluate(Action::Value(y_hat - delta))?;
    Ok(((up - down) / (2.0 * delta), 0.5 * (up + down)))
}

/// Exploration distribution: `(1 - delta)` on the best-scoring arm (lowest index
/// on ties) plus `delta / K` everywhere.
pub fn arm_probabilities(leaf_scores: ArrayView1<'_, f64>, delta_explore: f64) -> Result<Array1<f64>> {
    let k = leaf_scores.len();
    if k < 2 {
        return Err(Error::config("arm sampling needs at least two arms"));
    }
    if !(delta_explore > 0.0 && delta_explore <= 1.0) {
        return Err(Error::config(format!(
            "exploration probability must be in (0, 1], got {delta_explore}"
        )));
    }
    let mut p = Array1::from_elem(k, delta_explore / k as f64);
    p[argmax(leaf_scores)] += 1.0 - delta_explore;
    Ok(p)
}

pub fn sample_arm<R: Rng + ?Sized>(
    leaf_scores: ArrayView1<'_, f64>,
    delta_explore: f64,
    rng: &mut R,
) -> Result<(usize, Array1<f64>)> {
    let p = arm_probabilities(leaf_scores, delta_explore)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut arm = p.len() - 1;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            arm = i;
            break;
        }
    }
    Ok((arm, p))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Importance-weighted gradient for the pulled arm:
/// `2 / p(arm) * (loss - (1 - s)) * s * (1 - s) * e_arm` with `s = sigmoid(score[arm])`.
///
/// This is the derivative of `(s - (1 - loss))^2`, pulling `s` toward the
/// observed reward `1 - loss`, so losses are expected in `[0, 1]`.
pub fn estimate_grad_classification(
    loss: f64,
    arm: usize,
    probs: ArrayView1<'_, f64>,
    leaf_scores: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let k = leaf_scores.len();
    if arm >= k || probs.len() != k {
        return Err(Error::shape("arm or probability vector out of range"));
    }
    let p = probs[arm];
    if !(p > 0.0) {
        return Err(Error::precondition(format!(
            "arm {arm} has zero probability; cannot importance-weight"
        )));
    }
    let s = sigmoid(leaf_scores[arm]);
    let mut g = Array1::zeros(k);
    g[arm] = 2.0 / p * (loss - (1.0 - s)) * s * (1.0 - s);
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    OnePoint,
    TwoPoint,
    Classification,
}

impl EstimatorKind {
    /// Oracle queries allowed per round.
    pub fn queries_per_round(&self) -> usize {
        match self {
            EstimatorKind::TwoPoint => 2,
            _ => 1,
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_point" => Ok(Self::OnePoint),
            "two_point" => Ok(Self::TwoPoint),
            "classification" => Ok(Self::Classification),
            _ => Err(Error::config(format!("unknown estimator '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub estimator: EstimatorKind,
    /// Probability mass spread uniformly over arms (classification).
    pub delta_explore: f64,
    /// Perturbation size for the regression estimators.
    pub delta_perturb: f64,
    /// Round `t` (1-based) uses `delta_perturb * t^(-decay)`; 0 keeps it constant.
    pub perturb_decay: f64,
    pub learning_rate: f64,
    pub optimizer: RmsPropConfig,
    pub clip: Clip,
    pub regularizer: Regularizer,
    /// Rounds whose gradients are averaged into one update.
    pub accumulate: usize,
    /// Held-out evaluation period in rounds.
    pub snapshot_every: usize,
    pub seed: u64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorKind::OnePoint,
            delta_explore: 0.3,
            delta_perturb: 0.5,
            perturb_decay: 0.0,
            learning_rate: 1e-3,
            optimizer: RmsPropConfig::default(),
            clip: Clip::None,
            regularizer: Regularizer::default(),
            accumulate: 4,
            snapshot_every: 1000,
            seed: 0,
        }
    }
}

impl BanditConfig {
    pub fn classification() -> Self {
        Self {
            estimator: EstimatorKind::Classification,
            ..Self::default()
        }
    }

    pub fn validate(&self, num_outputs: usize) -> Result<()> {
        if !(self.delta_explore > 0.0 && self.delta_explore <= 1.0) {
            return Err(Error::config("delta_explore must be in (0, 1]"));
        }
        if !(self.delta_perturb > 0.0) {
            return Err(Error::config("delta_perturb must be positive"));
        }
        if !(self.perturb_decay >= 0.0) {
            return Err(Error::config("perturb_decay must be non-negative"));
        }
        if self.accumulate == 0 || self.snapshot_every == 0 {
            return Err(Error::config("accumulate and snapshot_every must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::config("learning rate must be non-negative"));
        }
        match (self.estimator, num_outputs) {
            (EstimatorKind::Classification, k) if k < 2 => Err(Error::config(
                "classification estimator needs a model with at least two outputs",
            )),
            (EstimatorKind::OnePoint | EstimatorKind::TwoPoint, k) if k != 1 => Err(Error::config(
                "regression estimators need a single-output model",
            )),
            _ => Ok(()),
        }
    }

    fn delta_at(&self, round: usize) -> f64 {
        if self.perturb_decay == 0.0 {
            self.delta_perturb
        } else {
            self.delta_perturb * (round as f64).powf(-self.perturb_decay)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub round: usize,
    pub cumulative_loss: f64,
    pub queries: usize,
    pub metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    /// Cumulative deployed loss after each round.
    pub cumulative_loss: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub queries: usize,
}

impl RegretTrace {
    pub fn rounds(&self) -> usize {
        self.cumulative_loss.len()
    }

    /// Average deployed loss over all rounds so far.
    pub fn mean_loss(&self) -> f64 {
        match self.cumulative_loss.last() {
            Some(&c) => c / self.rounds() as f64,
            None => 0.0,
        }
    }

    /// CSV with one row per snapshot: `round,cumulative_loss,queries,heldout_metric`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "cumulative_loss", "queries", "heldout_metric"])?;
        for s in &self.snapshots {
            w.write_record([
                s.round.to_string(),
                s.cumulative_loss.to_string(),
                s.queries.to_string(),
                s.metric.map(|m| m.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One round of the stream: features plus the oracle that scores actions on them.
pub struct Round<O> {
    pub features: Array1<f64>,
    pub oracle: O,
}

/// Runs the online loop over `stream`, starting from `init`.
///
/// `evaluate` is called on a snapshot of the parameters every
/// `cfg.snapshot_every` rounds and after the last round.
pub fn train_bandit<I, O, E>(
    stream: I,
    cfg: &BanditConfig,
    init: TreeParams,
    tables: &PathTables,
    mut evaluate: Option<E>,
) -> Result<(TreeParams, RegretTrace)>
where
    I: IntoIterator<Item = Round<O>>,
    O: LossOracle,
    E: FnMut(&TreeParams) -> Result<f64>,
{
    cfg.validate(init.num_outputs())?;
    if tables.height() != init.height() {
        return Err(Error::config("path tables and model have different heights"));
    }
    let mut params = init;
    let mut opt = RmsProp::new(&params, cfg.optimizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = RegretTrace::default();
    let mut pending = GradientSet::zeros_like(&params);
    let mut pending_rounds = 0usize;
    let mut total_loss = 0.0;

    for (idx, round) in stream.into_iter().enumerate() {
        let t = idx + 1;
        let Round { features, oracle } = round;
        let mut oracle = MeteredOracle::new(oracle, cfg.estimator.queries_per_round());
        let (_, scores) = params.forward_hard(features.view())?;
        let scores = scores.to_owned();

        let (out_grad, loss) = match cfg.estimator {
            EstimatorKind::OnePoint => {
                let (g, _, loss) =
                    estimate_grad_one_point(&mut oracle, scores[0], cfg.delta_at(t), &mut rng)?;
                (Array1::from_elem(1, g), loss)
            }
            EstimatorKind::TwoPoint => {
                let (g, loss) = estimate_grad_two_point(&mut oracle, scores[0], cfg.delta_at(t))?;
                (Array1::from_elem(1, g), loss)
            }
            EstimatorKind::Classification => {
                let (arm, probs) = sample_arm(scores.view(), cfg.delta_explore, &mut rng)?;
                let loss = oracle.evaluate(Action::Arm(arm))?;
                let g = estimate_grad_classification(loss, arm, probs.view(), scores.view())?;
                (g, loss)
            }
        };
        trace.queries += oracle.queries();
        total_loss += loss;
        trace.cumulative_loss.push(total_loss);

        if out_grad.iter().any(|&g| g != 0.0) {
            let grads = backprop(&params, tables, features.view(), out_grad.view())?;
            pending.add_scaled(&grads, 1.0);
        }
        pending_rounds += 1;
        if pending_rounds == cfg.accumulate {
            apply_update(&mut params, &mut opt, &mut pending, pending_rounds, cfg)?;
            pending_rounds = 0;
        }

        if t % cfg.snapshot_every == 0 {
            let metric = evaluate.as_mut().map(|f| f(&params)).transpose()?;
            trace.snapshots.push(Snapshot {
                round: t,
                cumulative_loss: total_loss,
                queries: trace.queries,
                metric,
            });
        }
    }
    if pending_rounds > 0 {
        apply_update(&mut params, &mut opt, &mut pending, pending_rounds, cfg)?;
    }
    let rounds = trace.rounds();
    if rounds > 0 && rounds % cfg.snapshot_every != 0 {
        let metric = evaluate.as_mut().map(|f| f(&params)).transpose()?;
        trace.snapshots.push(Snapshot {
            round: rounds,
            cumulative_loss: total_loss,
            queries: trace.queries,
            metric,
        });
    }
    Ok((params, trace))
}

fn apply_update(
    params: &mut TreeParams,
    opt: &mut RmsProp,
    pending: &mut GradientSet,
    rounds: usize,
    cfg: &BanditConfig,
) -> Result<()> {
    let mut grads = std::mem::replace(pending, GradientSet::zeros_like(params));
    grads.scale(1.0 / rounds as f64);
    if !cfg.regularizer.is_zero() {
        grads.add_scaled(&cfg.regularizer.gradient(params), 1.0);
    }
    opt.step(params, grads, cfg.learning_rate, cfg.clip)
}

/// Oracle built from a labelled example; the label never leaves it.
#[derive(Clone, Debug)]
pub struct LabelOracle {
    target: Hidden,
    loss: OracleLoss,
}

#[derive(Clone, Copy, Debug)]
enum Hidden {
    Value(f64),
    Class(usize),
}

impl LossOracle for LabelOracle {
    fn evaluate(&mut self, action: Action) -> Result<f64> {
        match (action, self.target) {
            (Action::Value(v), Hidden::Value(y)) => self.loss.regression(v, y),
            (Action::Arm(a), Hidden::Class(c)) => self.loss.classification(a, c),
            _ => Err(Error::Oracle("action kind does not match the task".into())),
        }
    }
}

/// Replays a labelled dataset as a bandit stream: shuffled, cycling through the
/// data again (reshuffled) when `rounds` exceeds its size.
pub struct SimulatedStream<'a> {
    data: &'a Dataset,
    loss: OracleLoss,
    rounds: usize,
    emitted: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl<'a> SimulatedStream<'a> {
    pub fn new(data: &'a Dataset, loss: OracleLoss, rounds: usize, seed: u64) -> Result<Self> {
        if loss.is_classification() != data.task().is_classification() {
            return Err(Error::config(format!(
                "loss '{loss}' does not match a {:?} dataset",
                data.task()
            )));
        }
        let mut s = Self {
            data,
            loss,
            rounds,
            emitted: 0,
            order: (0..data.len()).collect(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.reshuffle();
        Ok(s)
    }

    fn reshuffle(&mut self) {
        use rand::seq::SliceRandom;
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }
}

impl Iterator for SimulatedStream<'_> {
    type Item = Round<LabelOracle>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.emitted == self.rounds {
            return None;
        }
        if self.cursor == self.order.len() {
            self.reshuffle();
        }
        let i = self.order[self.cursor];
        self.cursor += 1;
        self.emitted += 1;
        let target = match self.data.targets() {
            Targets::Values(v) => Hidden::Value(v[i]),
            Targets::Classes(c) => Hidden::Class(c[i]),
        };
        Some(Round {
            features: self.data.row(i).to_owned(),
            oracle: LabelOracle {
                target,
                loss: self.loss,
            },
        })
    }
}
