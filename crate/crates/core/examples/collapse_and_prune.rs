//! Collapse a trained layer stack into one oblique tree, then drop branches
//! that no training example reaches.
//!
//! cargo run --release --example collapse_and_prune

use dgt::data::{fit_apply_normalization, split_holdout};
use dgt::eval::score;
use dgt::prune::prune_unreached;
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::train::{train_batch, OverparamSpec, TrainConfig};

fn main() -> dgt::Result<()> {
    // a height-5 model on data that only needs height 2
    let (data, _) = gen_oracle_tree(&OracleTreeSpec::regression(2, 3, 0.0), 3000, 5)?;
    let (train, test) = split_holdout(&data, 0.2, 5)?;
    let (train, rest, _) = fit_apply_normalization(&train, &[&test])?;
    let test = &rest[0];

    let cfg = TrainConfig {
        height: 5,
        epochs: 60,
        seed: 5,
        ..TrainConfig::default()
    };
    let (params, _) = train_batch(&train, &cfg, &OverparamSpec::new(vec![32, 32])?, None)?;
    let tree = params.collapse();
    let (pruned, report) = prune_unreached(&tree, train.features())?;

    println!("layers {:?} -> one {}x{} decision matrix", params.layer_dims(), tree.weights().nrows(), tree.weights().ncols());
    println!("reachable: {}/{} nodes, {}/{} leaves", report.reachable_internal, report.node_visits.len(), report.reachable_leaves, report.leaf_visits.len());
    println!("pruned tree: {} splits, {} leaves", pruned.num_splits(), pruned.num_leaves());
    let same = (0..train.len()).all(|i| tree.predict(train.row(i)).ok() == pruned.predict(train.row(i)).ok());
    println!("pruned tree matches on every training row: {same}");
    println!(
        "held-out rmse layered {:.4}, collapsed {:.4}, pruned {:.4}",
        score(&params, test)?.value(),
        score(&tree, test)?.value(),
        score(&pruned, test)?.value()
    );
    Ok(())
}
