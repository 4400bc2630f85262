use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sargan_core::config::ExperimentConfig;
use sargan_core::gan::GanMode;
use sargan_core::gradcheck::{gradient_suite, FD_TOLERANCE};
use sargan_core::pipeline::{cmd_eval, cmd_recover, cmd_synth, cmd_train, run_dir, CHECKPOINT_FILE};
use sargan_core::{Error, Result};

/// Recover notched radar spectra with an adversarially trained generator.
#[derive(Parser)]
#[command(name = "sargan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test datasets.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the generator and discriminator.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory holding train.sgds (and optionally val.sgds).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Total epoch budget; overrides the config file.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_parser = ["wgan", "standard"])]
        mode: Option<String>,
    },
    /// Recover a full-spectrum signal from notched data.
    Recover {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Notched signal as an index,real,imag CSV.
        #[arg(long)]
        input: PathBuf,
        /// Where to write the recovered signal CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory holding test.sgds.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write SVG profile plots.
        #[arg(long)]
        svg: bool,
    },
    /// Check analytic loss gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { cfg } => {
            let cfg = load_config(&cfg)?;
            let dir = run_dir(&cfg, None);
            let splits = cmd_synth(&cfg, &dir)?;
            println!(
                "wrote {} train, {} val, {} test pairs to {}",
                splits.train.len(),
                splits.val.len(),
                splits.test.len(),
                dir.display()
            );
        }
        Command::Train {
            cfg,
            data,
            resume,
            epochs,
            mode,
        } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(m) = mode {
                cfg = cfg.with_mode(m.parse::<GanMode>()?);
            }
            let out = run_dir(&cfg, None);
            let data = data.unwrap_or_else(|| out.clone());
            let state = cmd_train(&cfg, &data, &out, resume.as_deref())?;
            if let Some(last) = state.loss_history.last() {
                println!(
                    "epoch {}: content {:.4}, adversarial {:.4}, discriminator {:.4}, val SNR {:.2} dB",
                    state.epoch, last.content, last.adversarial, last.discriminator, last.val_snr_db
                );
            }
            println!("checkpoint: {}", out.join(CHECKPOINT_FILE).display());
        }
        Command::Recover { checkpoint, input, out } => {
            let zhat = cmd_recover(&checkpoint, &input, &out)?;
            println!("recovered {} samples to {}", zhat.len(), out.display());
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            svg,
        } => {
            let report = cmd_eval(&checkpoint, &data, &out, svg)?;
            print!("{}", report.to_text());
        }
        Command::Gradcheck { seed } => {
            let mut failed = false;
            for n in [4, 8] {
                let hidden = if n == 4 { 6 } else { 5 };
                for check in gradient_suite(n, hidden, seed)? {
                    let ok = check.report.passed;
                    failed |= !ok;
                    println!(
                        "{} {:<45} params={:<4} max_rel_err={:.3e}",
                        if ok { "PASS" } else { "FAIL" },
                        check.name,
                        check.n_params,
                        check.report.max_rel_error
                    );
                }
            }
            if failed {
                return Err(Error::Training(format!(
                    "gradient check exceeded tolerance {FD_TOLERANCE:e}"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
