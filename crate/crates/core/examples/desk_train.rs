//! Trains the tiny preset on synthetic data and reports held-out ODS/OIS.
//!
//! `cargo run --release -p ctfn-core --example desk_train -- [lr] [epochs] [wce|fl|dfl]`

use ctfn::data::synth_dataset;
use ctfn::eval::default_thresholds;
use ctfn::loss::{LossConfig, LossKind};
use ctfn::train::{evaluate_model, train, TrainConfig, TrainOutput};
use ctfn::{Ctfn32, ModelConfig};

fn main() -> ctfn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let lr = args.first().map_or(1e-3, |s| s.parse().expect("lr"));
    let epochs = args.get(1).map_or(20, |s| s.parse().expect("epochs"));
    let kind: LossKind = args.get(2).map_or(Ok(LossKind::DynamicFocal), |s| s.parse())?;

    let train_set = synth_dataset::<f32>(1, 64, 64)?;
    let test_set = synth_dataset::<f32>(2, 16, 64)?;
    let mut model = Ctfn32::new(ModelConfig::tiny(), 0)?;
    let loss = match kind {
        LossKind::Wce => LossConfig::wce(1.1),
        LossKind::Focal => LossConfig::focal(1.1, 1.0),
        LossKind::DynamicFocal => LossConfig::dynamic_focal(1.1, 1.0, 0.5),
    };
    let cfg = TrainConfig {
        lr,
        epochs,
        loss,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    train(&mut model, &train_set, None, &cfg, &TrainOutput::default(), |e| {
        eprintln!("epoch {:2} loss {:10.3} {:6.2}s", e.epoch, e.mean_loss, e.seconds)
    })?;
    let elapsed = t0.elapsed().as_secs_f64();
    if let Ok(path) = std::env::var("DESK_CKPT") {
        ctfn::model::save_checkpoint(&model, path)?;
    }
    for tol in [0.0075, 0.015, 0.03] {
        let r = evaluate_model(&model, &test_set, tol, &default_thresholds())?;
        println!("tol {tol}: {}", r.summary());
    }
    println!("{elapsed:.1}s");
    Ok(())
}
