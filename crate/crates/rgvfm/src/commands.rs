//! The train, sample, eval, export-figures and run-matrix commands.

use std::path::{Path, PathBuf};

use rgvfm_core::data::unwrap;
use rgvfm_core::metrics::{evaluate, EvalReport};
use rgvfm_core::objectives::Variant;
use rgvfm_core::sampler::{generate, Generated};
use rgvfm_core::train::{train, EpochStats};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io;

/// Trajectory snapshot times, as fractions of the integration interval.
pub const SNAPSHOT_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self(path.into())
    }

    pub fn path(&self) -> &Path {
        &self.0
    }
    pub fn config(&self) -> PathBuf {
        self.0.join("config.txt")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.0.join("checkpoint.txt")
    }
    pub fn loss_curve(&self) -> PathBuf {
        self.0.join("loss.csv")
    }
    pub fn samples(&self) -> PathBuf {
        self.0.join("samples.csv")
    }
    pub fn priors(&self) -> PathBuf {
        self.0.join("priors.csv")
    }
    pub fn trajectory(&self) -> PathBuf {
        self.0.join("trajectory.csv")
    }
    pub fn residuals(&self) -> PathBuf {
        self.0.join("residuals.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.0.join("eval.csv")
    }
    pub fn histogram(&self) -> PathBuf {
        self.0.join("histogram.csv")
    }
    pub fn figures(&self) -> PathBuf {
        self.0.join("figures")
    }

    fn create(&self) -> Result<()> {
        std::fs::create_dir_all(&self.0).map_err(CliError::io(&self.0))
    }
}

fn remove_stale(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::io(path)(e)),
        _ => Ok(()),
    }
}

fn write_config(run: &RunDir, cfg: &RunConfig) -> Result<()> {
    std::fs::write(run.config(), cfg.to_text()).map_err(CliError::io(run.config()))
}

/// Trains a model and writes `config.txt`, `checkpoint.txt` and `loss.csv`.
pub fn cmd_train<F: FnMut(&EpochStats)>(
    cfg: &RunConfig,
    run: &RunDir,
    on_epoch: F,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    run.create()?;
    write_config(run, cfg)?;
    let trained = train(&cfg.train_settings(), on_epoch)?;
    Checkpoint::from_model(&trained.model, cfg).save(&run.checkpoint())?;
    io::write_loss_curve(&run.loss_curve(), &trained.history)?;
    Ok(trained.history)
}

/// Integrates `cfg.n_samples` prior draws through the checkpointed model and
/// writes `samples.csv` and `priors.csv`, plus `trajectory.csv` when enabled
/// and `residuals.csv` for variational variants.
pub fn cmd_sample(cfg: &RunConfig, run: &RunDir, checkpoint: &Path) -> Result<Generated> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let cfg = RunConfig {
        variant: ck.variant,
        ..cfg.clone()
    };
    let model = ck.into_model()?;
    let integrator = cfg.integrator();
    let generated = generate(&model, cfg.n_samples, cfg.seed, &integrator)?;
    run.create()?;
    io::write_points(&run.samples(), &generated.samples)?;
    io::write_points(&run.priors(), &generated.priors)?;
    match &generated.trajectory {
        Some(states) => io::write_trajectory(
            &run.trajectory(),
            &io::Trajectory {
                n_samples: cfg.n_samples,
                steps: integrator.steps,
                times: (0..=integrator.steps).map(|k| integrator.time(k)).collect(),
                states: states.clone(),
            },
        )?,
        None => remove_stale(&run.trajectory())?,
    }
    match &generated.endpoint_residuals {
        Some(r) => io::write_residuals(&run.residuals(), r)?,
        None => remove_stale(&run.residuals())?,
    }
    Ok(generated)
}

/// Evaluates a samples file; residuals are included when the file exists.
/// Writes `eval.csv` and `histogram.csv` into the run directory.
pub fn cmd_eval(
    cfg: &RunConfig,
    run: &RunDir,
    samples: &Path,
    residuals: Option<&Path>,
) -> Result<EvalReport> {
    let points = io::read_points(samples)?;
    let residuals = match residuals {
        Some(p) if p.exists() => Some(io::read_residuals(p)?),
        _ => None,
    };
    let report = evaluate(&cfg.grid, &points, residuals.as_deref())?;
    run.create()?;
    io::write_report(&run.report(), &report)?;
    io::write_histogram(&run.histogram(), &report.norm_histogram)?;
    Ok(report)
}

/// Writes plotting data into `figures/`: the unwrapped scatter, the cell
/// overlay, the norm histogram and trajectory snapshots. Without a recorded
/// trajectory the snapshots hold only the prior draws and the samples.
pub fn cmd_export_figures(cfg: &RunConfig, run: &RunDir) -> Result<Vec<PathBuf>> {
    let grid = &cfg.grid;
    let samples = io::read_points(&run.samples())?;
    if samples.is_empty() {
        return Err(rgvfm_core::Error::EmptyInput.into());
    }
    let fig = run.figures();
    std::fs::create_dir_all(&fig).map_err(CliError::io(&fig))?;
    let mut written = Vec::new();

    let path = fig.join("unwrapped.csv");
    io::write_table(
        &path,
        &["phi", "z", "on_cell"],
        samples.chunks_exact(3).map(|p| {
            let (phi, z) = unwrap(p);
            vec![
                phi.to_string(),
                z.to_string(),
                u8::from(grid.is_on_cell(p)).to_string(),
            ]
        }),
    )?;
    written.push(path);

    let path = fig.join("overlay_grid.csv");
    let cells = (0..grid.n_z()).flat_map(|iz| (0..grid.n_azimuth()).map(move |ia| (ia, iz)));
    io::write_table(
        &path,
        &["i_azimuth", "i_z", "phi_lo", "phi_hi", "z_lo", "z_hi", "on"],
        cells.map(|(ia, iz)| {
            let (a, b, c, d) = grid.cell_bounds(ia, iz);
            vec![
                ia.to_string(),
                iz.to_string(),
                a.to_string(),
                b.to_string(),
                c.to_string(),
                d.to_string(),
                u8::from(grid.is_on_index(ia, iz)).to_string(),
            ]
        }),
    )?;
    written.push(path);

    let report = evaluate(grid, &samples, None)?;
    let path = fig.join("norm_histogram.csv");
    io::write_histogram(&path, &report.norm_histogram)?;
    written.push(path);

    let path = fig.join("snapshots.csv");
    let header = ["t_fraction", "step", "t", "sample_id", "x", "y", "z"];
    let row = |f: f64, k: usize, t: f64, i: usize, p: &[f64]| {
        let mut r = vec![f.to_string(), k.to_string(), t.to_string(), i.to_string()];
        r.extend(p.iter().map(f64::to_string));
        r
    };
    if run.trajectory().exists() {
        let traj = io::read_trajectory(&run.trajectory())?;
        let mut rows = Vec::new();
        for f in SNAPSHOT_FRACTIONS {
            let k = (f * traj.steps as f64).round() as usize;
            for i in 0..traj.n_samples {
                rows.push(row(f, k, traj.times[k], i, traj.state(i, k)));
            }
        }
        io::write_table(&path, &header, rows)?;
    } else {
        let priors = io::read_points(&run.priors())?;
        let integrator = cfg.integrator();
        let last = integrator.steps;
        let t_last = integrator.time(last);
        let rows = priors
            .chunks_exact(3)
            .enumerate()
            .map(|(i, p)| row(0.0, 0, 0.0, i, p))
            .chain(
                samples
                    .chunks_exact(3)
                    .enumerate()
                    .map(|(i, p)| row(1.0, last, t_last, i, p)),
            );
        io::write_table(&path, &header, rows)?;
    }
    written.push(path);
    Ok(written)
}

/// One line of the cross-variant comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub variant: Variant,
    pub final_loss: f64,
    pub report: EvalReport,
}

pub const COMPARISON_HEADER: [&str; 7] = [
    "variant",
    "final_loss",
    "norm_mean",
    "norm_std",
    "on_cell_fraction",
    "occupancy_l1",
    "endpoint_residual_mean",
];

/// Trains, samples and evaluates every variant with the same settings and
/// seed, each in `<output_dir>/<variant>`, and writes `comparison.csv`.
pub fn cmd_run_matrix<F: FnMut(Variant, &EpochStats)>(
    cfg: &RunConfig,
    root: &Path,
    mut on_epoch: F,
) -> Result<Vec<MatrixRow>> {
    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let vcfg = RunConfig {
            variant,
            output_dir: root.join(variant.name()),
            ..cfg.clone()
        };
        let run = RunDir::new(vcfg.output_dir.clone());
        let history = cmd_train(&vcfg, &run, |s| on_epoch(variant, s))?;
        cmd_sample(&vcfg, &run, &run.checkpoint())?;
        let report = cmd_eval(&vcfg, &run, &run.samples(), Some(&run.residuals()))?;
        rows.push(MatrixRow {
            variant,
            final_loss: history.last().map_or(f64::NAN, |s| s.mean_loss),
            report,
        });
    }
    let path = root.join("comparison.csv");
    io::write_table(
        &path,
        &COMPARISON_HEADER,
        rows.iter().map(|r| {
            vec![
                r.variant.name().to_string(),
                r.final_loss.to_string(),
                r.report.norm_mean.to_string(),
                r.report.norm_std.to_string(),
                r.report.on_cell_fraction.to_string(),
                r.report.occupancy_l1.to_string(),
                r.report
                    .endpoint_residual_mean
                    .map_or(String::new(), |v| v.to_string()),
            ]
        }),
    )?;
    Ok(rows)
}
