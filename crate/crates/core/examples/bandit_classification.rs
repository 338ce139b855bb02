//! Contextual bandit over three arms: the learner picks a class and only sees
//! whether it was right.
//!
//! cargo run --release --example bandit_classification

use dgt::bandit::{train_bandit, BanditConfig, SimulatedStream};
use dgt::data::{fit_apply_normalization, split_holdout};
use dgt::eval::score;
use dgt::loss::OracleLoss;
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::train::{init_params, OverparamSpec, TrainConfig};
use dgt::tree::{PathTables, TreeParams};

fn main() -> dgt::Result<()> {
    let (data, _) = gen_oracle_tree(&OracleTreeSpec::classification(2, 2, 3), 2500, 4)?;
    let (train, test) = split_holdout(&data, 0.2, 4)?;
    let (train, rest, _) = fit_apply_normalization(&train, &[&test])?;
    let test = rest.into_iter().next().expect("one held-out set");

    let cfg = BanditConfig {
        seed: 4,
        ..BanditConfig::classification()
    };
    let init = init_params(&train, &TrainConfig::default(), &OverparamSpec::single_layer())?;
    let stream = SimulatedStream::new(&train, OracleLoss::ZeroOne, 50_000, 4)?;
    let eval = |p: &TreeParams| Ok(score(p, &test)?.value());
    let (params, trace) = train_bandit(stream, &cfg, init, &PathTables::new(2)?, Some(eval))?;

    for s in trace.snapshots.iter().step_by(5) {
        println!("round {:>6}  regret/round {:.3}  held-out accuracy {:.1}%", s.round, s.cumulative_loss / s.round as f64, 100.0 * s.metric.unwrap_or(0.0));
    }
    println!("final accuracy {:.1}%", 100.0 * score(&params, &test)?.value());
    Ok(())
}
