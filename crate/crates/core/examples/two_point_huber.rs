//! With two loss queries per round the central difference replaces the noisy
//! one-point estimate. Here the hidden loss is Huber on noisy targets.
//!
//! cargo run --release --example two_point_huber

use dgt::bandit::{train_bandit, BanditConfig, EstimatorKind, SimulatedStream};
use dgt::data::{fit_apply_normalization, split_holdout};
use dgt::eval::score;
use dgt::loss::OracleLoss;
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::train::{init_params, OverparamSpec, TrainConfig};
use dgt::tree::PathTables;

fn main() -> dgt::Result<()> {
    let (data, _) = gen_oracle_tree(&OracleTreeSpec::regression(2, 2, 0.1), 2500, 7)?;
    let (train, test) = split_holdout(&data, 0.2, 7)?;
    let (train, rest, _) = fit_apply_normalization(&train, &[&test])?;
    let init = init_params(&train, &TrainConfig::default(), &OverparamSpec::single_layer())?;
    let tables = PathTables::new(2)?;

    for (estimator, loss) in [
        (EstimatorKind::OnePoint, OracleLoss::Squared),
        (EstimatorKind::TwoPoint, OracleLoss::Squared),
        (EstimatorKind::TwoPoint, OracleLoss::Huber(0.2)),
    ] {
        let cfg = BanditConfig {
            estimator,
            seed: 7,
            ..BanditConfig::default()
        };
        let stream = SimulatedStream::new(&train, loss, 50_000, 7)?;
        let (params, trace) = train_bandit(stream, &cfg, init.clone(), &tables, None::<fn(&_) -> _>)?;
        println!(
            "{estimator:?} on {loss}: {} queries, held-out rmse {:.4}",
            trace.queries,
            score(&params, &rest[0])?.value()
        );
    }
    Ok(())
}
