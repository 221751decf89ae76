//! `ctfn` command-line tool: synthesise data, train, predict, evaluate,
//! check gradients and count parameters.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ctfn::config::RunConfig;
use ctfn::data::{self, load_image, load_samples, read_edge_map, synth_dataset, write_dataset, Manifest, Split};
use ctfn::diagnostics::{gradient_suite, SUITE_TOLERANCE};
use ctfn::eval::{evaluate, uniform_thresholds, DEFAULT_TOLERANCE};
use ctfn::loss::LossKind;
use ctfn::model::load_checkpoint;
use ctfn::train::{train, TrainOutput};
use ctfn::{Ctfn32, EdgeMap};

#[derive(Parser)]
#[command(name = "ctfn", version, about = "Compact twice-fusion edge detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic edge dataset (images, ground truth, manifest).
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        /// Tag written into the manifest.
        #[arg(long)]
        split: Option<String>,
    },
    /// Train a model; writes log.csv, best.ckpt and final.ckpt.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Validation manifest used to pick best.ckpt.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// wce | fl | dfl
        #[arg(long)]
        loss: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Write fused and side edge maps for one image as 16-bit PGM.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Benchmark a directory of `<id>.pgm` predictions against a manifest.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Matching tolerance as a fraction of the image diagonal.
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = 99)]
        thresholds: usize,
        /// Skip non-maximum suppression (predictions already thin).
        #[arg(long)]
        no_nms: bool,
        /// Where to write the PR table (default: <pred>/pr.csv).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Finite-difference gradient checks; fails if any error exceeds 1e-4.
    Gradcheck {
        /// Include end-to-end checks through the whole network.
        #[arg(long)]
        full: bool,
    },
    /// Print total and non-backbone parameter counts.
    Params {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn synth(seed: u64, count: usize, size: usize, out: &Path, split: Option<String>) -> Result<()> {
    let split = split.map(|s| s.parse::<Split>()).transpose()?;
    let samples = synth_dataset::<f32>(seed, count, size)?;
    let manifest = write_dataset(&samples, out, split)?;
    eprintln!(
        "wrote {} samples to {}",
        manifest.entries.len(),
        out.join("manifest.tsv").display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_train(
    config: Option<&Path>,
    data_path: &Path,
    out: &Path,
    val: Option<&Path>,
    epochs: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    loss: Option<String>,
    gamma: Option<f64>,
    mu: Option<f64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    let t = &mut cfg.train;
    if let Some(v) = epochs {
        t.epochs = v;
    }
    if let Some(v) = lr {
        t.lr = v;
    }
    if let Some(v) = seed {
        t.seed = v;
    }
    if let Some(v) = loss {
        t.loss.kind = v.parse::<LossKind>()?;
    }
    if let Some(v) = gamma {
        t.loss.gamma = v;
    }
    if let Some(v) = mu {
        t.loss.mu = v;
    }
    cfg.validate()?;

    let train_set = load_samples::<f32>(&Manifest::load(data_path)?)?;
    let val_set = val.map(|p| Manifest::load(p).and_then(|m| load_samples::<f32>(&m))).transpose()?;
    let mut model = Ctfn32::new(cfg.model.clone(), cfg.train.seed)?;
    let output = TrainOutput {
        dir: Some(out.to_path_buf()),
    };
    let report = train(&mut model, &train_set, val_set.as_deref(), &cfg.train, &output, |e| {
        eprintln!("epoch {:3}  loss {:.4}  {:.1}s", e.epoch, e.mean_loss, e.seconds)
    })?;
    eprintln!(
        "best epoch {} (loss {:.4}); checkpoints in {}",
        report.best_epoch,
        report.best_loss,
        out.display()
    );
    Ok(())
}

fn predict(ckpt: &Path, image: &Path, out: &Path) -> Result<()> {
    let model: Ctfn32 = load_checkpoint(ckpt)?;
    let img = load_image::<f32>(image)?;
    let shape = img.shape().to_vec();
    let batch = img.reshape(&[1, shape[0], shape[1], shape[2]])?;
    let pred = model.predict(&batch)?;
    let stem = image
        .file_stem()
        .context("image path has no file name")?
        .to_string_lossy()
        .into_owned();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    data::write_edge_map(&pred.fused, out.join(format!("{stem}.pgm")))?;
    for (i, side) in pred.side.iter().enumerate() {
        data::write_edge_map(side, out.join(format!("{stem}_side{}.pgm", i + 1)))?;
    }
    Ok(())
}

fn eval(pred_dir: &Path, gt: &Path, tol: f64, thresholds: usize, nms: bool, csv: Option<PathBuf>) -> Result<()> {
    if !(tol > 0.0 && tol < 1.0) {
        bail!("--tol must lie in (0, 1), got {tol}");
    }
    if thresholds == 0 {
        bail!("--thresholds must be at least 1");
    }
    let manifest = Manifest::load(gt)?;
    let mut ids = Vec::new();
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for entry in &manifest.entries {
        let id = entry.id();
        let p: EdgeMap<f64> = read_edge_map(pred_dir.join(format!("{id}.pgm")))?;
        let g = entry
            .gts
            .iter()
            .map(|g| read_edge_map::<f64>(g).map(|m| data::gt_boundary(&m)))
            .collect::<ctfn::Result<Vec<_>>>()?;
        ids.push(id);
        preds.push(p);
        gts.push(g);
    }
    let result = evaluate(&preds, &gts, tol, &uniform_thresholds(thresholds), nms)?;
    let csv = csv.unwrap_or_else(|| pred_dir.join("pr.csv"));
    let mut file = std::fs::File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
    result
        .write_csv(&mut file, &ids)
        .with_context(|| format!("writing {}", csv.display()))?;
    println!("ODS={:.4} OIS={:.4}", result.ods_f, result.ois_f);
    eprintln!("{}; PR table in {}", result.summary(), csv.display());
    Ok(())
}

fn gradcheck(full: bool) -> Result<bool> {
    let entries = gradient_suite(full)?;
    let mut ok = true;
    for e in &entries {
        println!(
            "{:<32} max_rel_error {:.3e} {} ({:.3e} vs {:.3e})",
            e.name,
            e.report.max_rel_error,
            if e.passed() { "ok" } else { "FAIL" },
            e.report.analytic,
            e.report.numeric
        );
        ok &= e.passed();
    }
    let worst = entries.iter().map(|e| e.report.max_rel_error).fold(0.0, f64::max);
    println!("{} checks, worst {worst:.3e} (tolerance {SUITE_TOLERANCE:e})", entries.len());
    Ok(ok)
}

fn params(config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let count = Ctfn32::new(cfg.model.clone(), 0)?.count_params();
    println!("preset {}", cfg.model.backbone.preset);
    println!("total {}", count.total);
    println!("backbone {}", count.backbone());
    println!("non_backbone {}", count.non_backbone);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth {
            seed,
            count,
            size,
            out,
            split,
        } => synth(seed, count, size, &out, split)?,
        Command::Train {
            config,
            data,
            out,
            val,
            epochs,
            lr,
            seed,
            loss,
            gamma,
            mu,
        } => run_train(config.as_deref(), &data, &out, val.as_deref(), epochs, lr, seed, loss, gamma, mu)?,
        Command::Predict { ckpt, image, out } => predict(&ckpt, &image, &out)?,
        Command::Eval {
            pred,
            gt,
            tol,
            thresholds,
            no_nms,
            csv,
        } => eval(&pred, &gt, tol, thresholds, !no_nms, csv)?,
        Command::Gradcheck { full } => return gradcheck(full),
        Command::Params { config } => params(config.as_deref())?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
