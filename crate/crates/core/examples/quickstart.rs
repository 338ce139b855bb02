//! Fit a depth-2 tree to data labelled by a random oblique tree and report
//! held-out RMSE.
//!
//! cargo run --release --example quickstart

use dgt::data::{fit_apply_normalization, split_holdout};
use dgt::eval::score;
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::train::{train_batch, OverparamSpec, TrainConfig};

fn main() -> dgt::Result<()> {
    let (data, _truth) = gen_oracle_tree(&OracleTreeSpec::regression(2, 2, 0.0), 2500, 0)?;
    let (train, test) = split_holdout(&data, 0.2, 0)?;
    let (train, rest, stats) = fit_apply_normalization(&train, &[&test])?;

    let cfg = TrainConfig {
        height: 2,
        epochs: 100,
        ..TrainConfig::default()
    };
    let (params, log) = train_batch(&train, &cfg, &OverparamSpec::single_layer(), None)?;
    let last = log.records.last().expect("at least one epoch");
    println!("epoch {} train loss {:.5}", last.epoch, last.train_loss);

    let rmse = score(&params, &rest[0])?.value();
    println!("held-out rmse {:.4} (normalized), {:.4} (original units)", rmse, rmse * stats.target_span());

    let tree = params.collapse();
    for (r, (w, b)) in tree.weights().rows().into_iter().zip(tree.biases()).enumerate() {
        println!("node {r}: {:.3} . x + {:.3} >= 0", w, b);
    }
    Ok(())
}
