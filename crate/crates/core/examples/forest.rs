//! Bagging: average trees trained on bootstrap samples.
//!
//! cargo run --release --example forest

use dgt::data::{fit_apply_normalization, split_holdout};
use dgt::eval::score;
use dgt::forest::train_forest;
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::train::{OverparamSpec, TrainConfig};

fn main() -> dgt::Result<()> {
    let (data, _) = gen_oracle_tree(&OracleTreeSpec::regression(3, 4, 0.1), 2500, 2)?;
    let (train, test) = split_holdout(&data, 0.2, 2)?;
    let (train, rest, _) = fit_apply_normalization(&train, &[&test])?;
    let test = &rest[0];

    let cfg = TrainConfig {
        height: 3,
        epochs: 50,
        ..TrainConfig::default()
    };
    let forest = train_forest(&train, 10, &cfg, &OverparamSpec::single_layer(), 0.85, 2)?;
    for (i, m) in forest.members().iter().enumerate() {
        println!("member {i}: rmse {:.4}", score(m, test)?.value());
    }
    println!("forest of {}: rmse {:.4}", forest.members().len(), score(&forest, test)?.value());
    Ok(())
}
