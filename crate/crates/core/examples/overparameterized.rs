//! A height-4 model on height-3 data, trained through a stack of linear layers. The stack collapses to
//! a single oblique tree after training.
//!
//! cargo run --release --example overparameterized

use dgt::data::{fit_apply_normalization, split_holdout};
use dgt::eval::score;
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::train::{train_batch, OverparamSpec, TrainConfig};

fn main() -> dgt::Result<()> {
    let (data, _) = gen_oracle_tree(&OracleTreeSpec::regression(3, 3, 0.05), 4000, 3)?;
    let (train, test) = split_holdout(&data, 0.2, 3)?;
    let (train, rest, _) = fit_apply_normalization(&train, &[&test])?;
    let test = &rest[0];

    let cfg = TrainConfig {
        height: 4,
        epochs: 60,
        seed: 3,
        ..TrainConfig::default()
    };
    for spec in [
        OverparamSpec::single_layer(),
        OverparamSpec::three_layer_default(4)?,
        OverparamSpec::new(vec![64])?,
    ] {
        let (params, _) = train_batch(&train, &cfg, &spec, None)?;
        let tree = params.collapse();
        println!(
            "dims {:?}: {} trainable parameters, held-out rmse {:.4}, collapsed rmse {:.4}",
            spec.dims(cfg.height),
            params.num_parameters(),
            score(&params, test)?.value(),
            score(&tree, test)?.value(),
        );
    }
    Ok(())
}
