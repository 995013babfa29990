use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use dfdnet::dataset::{self, SceneSource};
use dfdnet::{eval, imageio, metrics, train, Checkpoint, Error, TrainConfig};

#[derive(Parser)]
#[command(name = "dfdnet", version, about = "Flare removal: data synthesis, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic paired dataset.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Square image size in pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Directory of PNG backgrounds; procedural scenes when omitted.
        #[arg(long)]
        scenes: Option<PathBuf>,
    },
    /// Train on a dataset; writes loss_log.csv and final.ckpt.
    Train {
        /// key = value configuration file; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint; writes report.json.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write restored images.
        #[arg(long)]
        save_images: bool,
    },
    /// Write the centered log-amplitude spectrum of an image as grayscale PNG.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth {
            n,
            out,
            seed,
            size,
            scenes,
        } => {
            let source = match scenes {
                Some(dir) => SceneSource::from_dir(&dir)?,
                None => SceneSource::Procedural,
            };
            dataset::write_dataset(&out, n, seed, size, &source)?;
            info!("wrote {n} samples to {}", out.display());
        }
        Command::Train { config, data, out } => {
            let cfg = match config {
                Some(path) => TrainConfig::load(&path)?,
                None => TrainConfig::default(),
            };
            let outputs = train::train_to_dir(&cfg, &data, &out)?;
            info!("checkpoint {}", outputs.checkpoint.display());
        }
        Command::Eval {
            ckpt,
            data,
            out,
            save_images,
        } => {
            let model = Checkpoint::load(&ckpt)?.model()?;
            let report = eval::evaluate_to_dir(&model, &data, &out, save_images)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{v:.3}"));
            println!(
                "images {} psnr {:.3} ssim {:.4} g_psnr {} s_psnr {}",
                report.count,
                report.mean.psnr,
                report.mean.ssim,
                fmt(report.mean.g_psnr),
                fmt(report.mean.s_psnr)
            );
        }
        Command::Spectrum { input, out } => {
            let image = imageio::load_rgb(&input)?;
            imageio::save_gray(&out, &metrics::spectrum_image(&image)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            if let Error::Diverged { iteration, .. } = &e {
                error!("last good state before iteration {iteration} saved as {}", train::LAST_GOOD_FILE);
            }
            ExitCode::FAILURE
        }
    }
}
