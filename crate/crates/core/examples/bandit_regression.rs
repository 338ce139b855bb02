//! Learn a regression tree when each round only reveals the loss of one
//! perturbed prediction.
//!
//! cargo run --release --example bandit_regression

use dgt::bandit::{train_bandit, BanditConfig, SimulatedStream};
use dgt::data::{fit_apply_normalization, split_holdout};
use dgt::eval::score;
use dgt::loss::OracleLoss;
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::train::{init_params, OverparamSpec, TrainConfig};
use dgt::tree::{PathTables, TreeParams};

fn main() -> dgt::Result<()> {
    let (data, _) = gen_oracle_tree(&OracleTreeSpec::regression(2, 2, 0.0), 2500, 1)?;
    let (train, test) = split_holdout(&data, 0.2, 1)?;
    let (train, rest, _) = fit_apply_normalization(&train, &[&test])?;
    let test = rest.into_iter().next().expect("one held-out set");

    let cfg = BanditConfig {
        seed: 1,
        ..BanditConfig::default()
    };
    let init = init_params(&train, &TrainConfig { seed: 1, ..TrainConfig::default() }, &OverparamSpec::single_layer())?;
    let rounds = 50_000;
    let stream = SimulatedStream::new(&train, OracleLoss::Squared, rounds, 1)?;
    let eval = |p: &TreeParams| Ok(score(p, &test)?.value());
    let (_, trace) = train_bandit(stream, &cfg, init, &PathTables::new(2)?, Some(eval))?;

    for s in trace.snapshots.iter().step_by(5) {
        println!("round {:>6}  mean loss {:.4}  held-out rmse {:.4}", s.round, s.cumulative_loss / s.round as f64, s.metric.unwrap_or(f64::NAN));
    }
    println!("{} queries for {} rounds", trace.queries, trace.rounds());
    Ok(())
}
