//! CSV in, model file out, predictions back in original units.
//!
//! cargo run --release --example csv_pipeline -- data.csv [label-column]
//!
//! Without arguments a small synthetic file is written to the temp dir first.

use std::fmt::Write as _;
use std::path::PathBuf;

use dgt::data::{fit_apply_normalization, load_csv, split, LabelColumn, Targets, TaskKind};
use dgt::eval::{score, Predict};
use dgt::model_file::{Model, ModelFile};
use dgt::synth::{gen_oracle_tree, OracleTreeSpec};
use dgt::train::{train_batch, OverparamSpec, TrainConfig};

fn synthetic_csv() -> dgt::Result<PathBuf> {
    let (data, _) = gen_oracle_tree(&OracleTreeSpec::regression(3, 3, 0.05), 1500, 9)?;
    let mut text = String::from("a,b,c,price\n");
    for i in 0..data.len() {
        let row = data.row(i);
        let Targets::Values(v) = data.targets() else { unreachable!() };
        let target = v[i];
        writeln!(text, "{},{},{},{}", row[0], row[1], row[2], 100.0 + 50.0 * target).unwrap();
    }
    let path = std::env::temp_dir().join("dgt_example.csv");
    std::fs::write(&path, text)?;
    Ok(path)
}

fn main() -> dgt::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = match args.next() {
        Some(p) => PathBuf::from(p),
        None => synthetic_csv()?,
    };
    let label: LabelColumn = args.next().as_deref().unwrap_or("last").parse().unwrap();

    let raw = load_csv(&path, &label, true, TaskKind::Regression)?;
    let (train, val, test) = split(&raw, [0.8, 0.1, 0.1], 0)?;
    let (train, rest, stats) = fit_apply_normalization(&train, &[&val, &test])?;

    let cfg = TrainConfig {
        height: 3,
        epochs: 80,
        checkpoint: dgt::train::Checkpoint::BestValidation,
        ..TrainConfig::default()
    };
    let (params, _) = train_batch(&train, &cfg, &OverparamSpec::single_layer(), Some(&rest[0]))?;
    let rmse = score(&params, &rest[1])?.value() * stats.target_span();
    println!("test rmse {rmse:.3} (label units)");

    let model = Model::Tree(params.collapse());
    let out = std::env::temp_dir().join("dgt_example_model.json");
    let config = serde_json::to_value(&cfg)?;
    ModelFile::new(&model, train.task(), Some(stats.clone()), config, cfg.seed)?.save(&out)?;

    let back = ModelFile::load(&out)?.model()?;
    let x = stats.transform_features(test.features())?;
    for i in 0..3 {
        let y = stats.inverse_target(back.predict_row(x.row(i))?[0]);
        println!("row {i}: predicted {y:.2}");
    }
    println!("model written to {}", out.display());
    Ok(())
}
