//! `ssdp` — train/eval/analyze/oracle-check entry point for the SSDP
//! training laboratory.
//!
//! Exit codes: 0 ok, 2 config/usage error, 3 data error, 4 check failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ssdp_core::analysis::{synchrony_index, RunExports, TrainingHistory};
use ssdp_core::config::RunConfig;
use ssdp_core::data::{load_idx, EncoderKind};
use ssdp_core::error::{Error, Result};
use ssdp_core::network::{forward, load_checkpoint};
use ssdp_core::plasticity::oracle_check;
use ssdp_core::train::{evaluate_on_test_split, run_training, write_confusion_csv};

#[derive(Parser)]
#[command(
    name = "ssdp",
    version,
    about = "Spiking-network training laboratory with spike-synchrony-dependent plasticity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model as described by a TOML config file.
    Train {
        /// Path to the run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the config's test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the confusion-matrix CSV (default: checkpoint dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export jitter, synchrony and representation metrics for a checkpoint.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: "analysis").
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run randomized SSDP oracle-equivalence trials.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>, out: Option<&PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&config, seed, out.as_ref())?;
    let artifacts = run_training(&cfg)?;
    println!("run directory: {}", artifacts.run_dir.display());
    println!("epochs run: {}", artifacts.metrics.epochs_run);
    if let Some(loss) = artifacts.metrics.final_train_loss {
        println!("final train loss: {loss:.6}");
    }
    if let Some(loss) = artifacts.metrics.final_val_loss {
        println!("final val loss: {loss:.6}");
    }
    if let (Some(acc), Some(epoch)) = (artifacts.metrics.best_val_acc, artifacts.metrics.best_epoch)
    {
        println!("best val accuracy: {acc:.4} (epoch {epoch})");
    }
    match artifacts.metrics.stabilization_epoch {
        Some(e) => println!("loss stabilization epoch: {e}"),
        None => println!("loss stabilization epoch: not reached"),
    }
    if let Some(ckpt) = &artifacts.checkpoint_path {
        println!("best checkpoint: {}", ckpt.display());
    }
    Ok(())
}

fn cmd_eval(
    config: PathBuf,
    checkpoint: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&config, seed, None)?;
    let (model, _) = load_checkpoint(&checkpoint)?;
    let report = evaluate_on_test_split(&model, &cfg)?;
    println!("samples: {}", report.samples);
    println!("top-1 accuracy: {:.4}", report.accuracy);
    let out_dir = out.unwrap_or_else(|| {
        checkpoint
            .parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    std::fs::create_dir_all(&out_dir)?;
    let confusion_path = out_dir.join("confusion.csv");
    write_confusion_csv(&report, &confusion_path)?;
    println!("confusion matrix: {}", confusion_path.display());
    Ok(())
}

fn cmd_analyze(
    config: PathBuf,
    checkpoint: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&config, seed, None)?;
    let (model, _) = load_checkpoint(&checkpoint)?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from("analysis"));

    let mut test = load_idx(
        &cfg.resolve_data_path(&cfg.data.test_images),
        &cfg.resolve_data_path(&cfg.data.test_labels),
    )?;
    test.truncate(cfg.data.test_limit.unwrap_or(256).min(256));
    let flat = test.flat_images();

    let encoded = match cfg.data.encoder {
        EncoderKind::Latency => ssdp_core::data::encode_latency(flat.view(), model.spec.t_steps)?,
        EncoderKind::Rate => ssdp_core::data::encode_rate(
            flat.view(),
            model.spec.t_steps,
            cfg.data.max_rate,
            cfg.seed,
        )?,
    };
    let record = forward(&model, &encoded)?;
    let sync = synchrony_index(&record.hidden);
    println!("hidden-layer synchrony index: {:.4}", sync.0);

    let jitter_images = flat.slice(ndarray::s![..flat.shape()[0].min(16), ..]).to_owned();
    let jitter_report = ssdp_core::analysis::jitter(
        &model,
        jitter_images.view(),
        cfg.data.encoder,
        cfg.data.max_rate,
        20,
        cfg.seed,
        ssdp_core::analysis::JITTER_MAX_NEURONS,
    );
    let jitter_report = match jitter_report {
        Ok(r) => {
            if let Some(mean) = r.mean_jitter() {
                println!("mean hidden-layer jitter: {mean:.4} steps over {} repeats", r.repeats);
            }
            Some(r)
        }
        Err(Error::Check(msg)) => {
            println!("jitter skipped: {msg}");
            None
        }
        Err(e) => return Err(e),
    };

    let (t_steps, batch, neurons) = record.hidden.dims();
    let mut counts = ndarray::Array2::zeros((batch, neurons));
    for t in 0..t_steps {
        for b in 0..batch {
            for n in 0..neurons {
                counts[(b, n)] += record.hidden.get(t, b, n) as f64;
            }
        }
    }
    let history = TrainingHistory::new(ssdp_core::train::VARIANCE_WINDOW);
    let exports = RunExports {
        eval_raster: Some(&record.hidden),
        hidden_repr: Some((&counts, &test.labels)),
        jitter: jitter_report.as_ref(),
    };
    ssdp_core::analysis::export_run(&out_dir, &history, &exports)?;
    println!("analysis artifacts: {}", out_dir.display());
    Ok(())
}

fn cmd_oracle_check(trials: usize, seed: u64) -> Result<()> {
    let report = oracle_check(trials, seed)?;
    println!("{report}");
    if !report.passed() {
        return Err(Error::Check(format!(
            "oracle deviation {:.3e} exceeds tolerance {:.1e}",
            report.max_deviation(),
            report.tolerance
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, seed, out } => cmd_train(config, seed, out),
        Command::Eval {
            config,
            checkpoint,
            seed,
            out,
        } => cmd_eval(config, checkpoint, seed, out),
        Command::Analyze {
            config,
            checkpoint,
            seed,
            out,
        } => cmd_analyze(config, checkpoint, seed, out),
        Command::OracleCheck { trials, seed } => cmd_oracle_check(trials, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
