use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rgvfm_core::train::EpochStats;

use crate::commands::{self, RunDir};
use crate::config::RunConfig;
use crate::error::Result;
use crate::io;

#[derive(Debug, Parser)]
#[command(
    name = "rgvfm",
    version,
    about = "Flow matching on the sphere: train, sample, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint and loss curve.
    Train(ConfigArgs),
    /// Generate samples from a checkpoint.
    Sample {
        #[command(flatten)]
        config: ConfigArgs,
        /// Defaults to checkpoint.txt in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compute norm and occupancy statistics of a samples file.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Defaults to samples.csv in the output directory.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Defaults to residuals.csv next to the samples, if present.
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Write plotting data for a run directory.
    ExportFigures(ConfigArgs),
    /// Train, sample and evaluate all five variants on the same seed.
    RunMatrix(ConfigArgs),
}

/// `--config` plus one override flag per configuration key.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub manifold: Option<String>,
    #[arg(long)]
    pub grid_azimuth: Option<String>,
    #[arg(long)]
    pub grid_z: Option<String>,
    #[arg(long)]
    pub grid_parity: Option<String>,
    #[arg(long)]
    pub hidden_dim: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub samples_per_epoch: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    #[arg(long)]
    pub t_end: Option<String>,
    /// true, false or auto.
    #[arg(long)]
    pub retract: Option<String>,
    #[arg(long)]
    pub trajectory: Option<String>,
    #[arg(long)]
    pub n_samples: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Relative paths are resolved against $RGVFM_OUTPUT_ROOT when set.
    #[arg(long)]
    pub output_dir: Option<String>,
    /// Suppress progress output.
    #[arg(long, short)]
    pub quiet: bool,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("variant", &self.variant),
            ("manifold", &self.manifold),
            ("grid_azimuth", &self.grid_azimuth),
            ("grid_z", &self.grid_z),
            ("grid_parity", &self.grid_parity),
            ("hidden_dim", &self.hidden_dim),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("samples_per_epoch", &self.samples_per_epoch),
            ("sigma", &self.sigma),
            ("steps", &self.steps),
            ("t_end", &self.t_end),
            ("retract", &self.retract),
            ("trajectory", &self.trajectory),
            ("n_samples", &self.n_samples),
            ("seed", &self.seed),
            ("output_dir", &self.output_dir),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    /// Loads `--config` (or, without one, the `config.txt` of the output
    /// directory when it exists), applies the flag overrides and validates.
    /// Returns the configuration and its resolved run directory.
    pub fn resolve(&self) -> Result<(RunConfig, RunDir)> {
        let apply = |mut cfg: RunConfig| -> Result<RunConfig> {
            for (k, v) in self.overrides() {
                cfg.set(k, v)?;
            }
            Ok(cfg)
        };
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut cfg = apply(base)?;
        if self.config.is_none() {
            let stored = RunDir::new(cfg.resolved_output_dir()).config();
            if stored.exists() {
                let mut from_run = apply(RunConfig::load(&stored)?)?;
                from_run.output_dir = cfg.output_dir.clone();
                cfg = from_run;
            }
        }
        cfg.validate()?;
        let run = RunDir::new(cfg.resolved_output_dir());
        Ok((cfg, run))
    }
}

fn progress(quiet: bool, epochs: usize) -> impl FnMut(&EpochStats) {
    let every = (epochs / 20).max(1);
    move |s| {
        if !quiet && (s.epoch == 1 || s.epoch % every == 0 || s.epoch == epochs) {
            eprintln!(
                "epoch {:>5}/{epochs}  loss {:.6}  antipodal clamps {}",
                s.epoch, s.mean_loss, s.antipodal_clamps
            );
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let (cfg, run) = args.resolve()?;
            let history = commands::cmd_train(&cfg, &run, progress(args.quiet, cfg.epochs))?;
            let first = history.first().map_or(f64::NAN, |s| s.mean_loss);
            let last = history.last().map_or(f64::NAN, |s| s.mean_loss);
            let clamps: usize = history.iter().map(|s| s.antipodal_clamps).sum();
            println!("checkpoint = {}", run.checkpoint().display());
            println!("initial_loss = {first}");
            println!("final_loss = {last}");
            println!("antipodal_clamps = {clamps}");
        }
        Command::Sample { config, checkpoint } => {
            let (cfg, run) = config.resolve()?;
            let checkpoint = checkpoint.unwrap_or_else(|| run.checkpoint());
            let g = commands::cmd_sample(&cfg, &run, &checkpoint)?;
            println!("samples = {}", run.samples().display());
            println!("failed = {}", g.failures.len());
            for (i, e) in &g.failures {
                eprintln!("sample {i} failed: {e}");
            }
        }
        Command::Eval {
            config,
            samples,
            residuals,
        } => {
            let (cfg, run) = config.resolve()?;
            let samples = samples.unwrap_or_else(|| run.samples());
            let residuals = residuals.unwrap_or_else(|| samples.with_file_name("residuals.csv"));
            let report = commands::cmd_eval(&cfg, &run, &samples, Some(&residuals))?;
            for (k, v) in io::report_rows(&report) {
                println!("{k} = {v}");
            }
        }
        Command::ExportFigures(args) => {
            let (cfg, run) = args.resolve()?;
            for p in commands::cmd_export_figures(&cfg, &run)? {
                println!("{}", p.display());
            }
        }
        Command::RunMatrix(args) => {
            let (cfg, run) = args.resolve()?;
            let quiet = args.quiet;
            let mut current = None;
            let rows = commands::cmd_run_matrix(&cfg, run.path(), |v, s| {
                if !quiet && current != Some(v) {
                    eprintln!("== {v}");
                    current = Some(v);
                }
                progress(quiet, cfg.epochs)(s);
            })?;
            println!("{}", commands::COMPARISON_HEADER.join("\t"));
            for r in rows {
                println!(
                    "{}\t{:.6}\t{:.6}\t{:.3e}\t{:.4}\t{:.4}\t{}",
                    r.variant,
                    r.final_loss,
                    r.report.norm_mean,
                    r.report.norm_std,
                    r.report.on_cell_fraction,
                    r.report.occupancy_l1,
                    r.report
                        .endpoint_residual_mean
                        .map_or("-".into(), |v| format!("{v:.3e}"))
                );
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
/// Failures print `error[<category>]: <message>` on one line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            1
        }
    }
}
