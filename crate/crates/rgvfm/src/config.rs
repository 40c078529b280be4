//! Run configuration: flat `key = value` text, one entry per line.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; the resolved configuration is written into each run directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rgvfm_core::data::{CheckerboardGrid, Parity};
use rgvfm_core::objectives::Variant;
use rgvfm_core::sampler::{IntegratorConfig, DEFAULT_STEPS, DEFAULT_T_END};
use rgvfm_core::train::TrainSettings;
use rgvfm_core::ManifoldKind;

use crate::error::{CliError, Result};

/// Relative output directories are resolved against this variable when set.
pub const OUTPUT_ROOT_ENV: &str = "RGVFM_OUTPUT_ROOT";

pub const KEYS: &[&str] = &[
    "variant",
    "manifold",
    "grid_azimuth",
    "grid_z",
    "grid_parity",
    "hidden_dim",
    "epochs",
    "batch_size",
    "learning_rate",
    "samples_per_epoch",
    "sigma",
    "steps",
    "t_end",
    "retract",
    "trajectory",
    "n_samples",
    "seed",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub manifold: ManifoldKind,
    pub grid: CheckerboardGrid,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub samples_per_epoch: usize,
    /// Scale of the endpoint Gaussian. Constant factor of the loss; it does
    /// not change the optimum and is recorded for completeness.
    pub sigma: f64,
    pub steps: usize,
    pub t_end: f64,
    /// `None` follows the variant: on for the on-manifold variants.
    pub retract: Option<bool>,
    pub trajectory: bool,
    pub n_samples: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::RgVfmM,
            manifold: ManifoldKind::Sphere(3),
            grid: CheckerboardGrid::default(),
            hidden_dim: 128,
            epochs: 3000,
            batch_size: 512,
            learning_rate: 1e-3,
            samples_per_epoch: 10_000,
            sigma: std::f64::consts::FRAC_1_SQRT_2,
            steps: DEFAULT_STEPS,
            t_end: DEFAULT_T_END,
            retract: None,
            trajectory: false,
            n_samples: 5000,
            seed: 0,
            output_dir: PathBuf::from("run"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

pub fn parse_manifold(s: &str) -> Result<ManifoldKind> {
    let (name, dim) = s.split_once(':').unwrap_or((s, ""));
    let dim = if dim.is_empty() {
        None
    } else {
        Some(parse_num::<usize>("manifold", dim)?)
    };
    let kind = match name {
        "sphere" => ManifoldKind::Sphere(dim.unwrap_or(3)),
        "euclidean" => ManifoldKind::Euclidean(dim.unwrap_or(3)),
        "torus" => ManifoldKind::FlatTorus(dim.unwrap_or(2)),
        _ => {
            return Err(CliError::Config(format!(
                "manifold: unknown kind {name:?} (sphere, euclidean, torus)"
            )))
        }
    };
    kind.validate()?;
    Ok(kind)
}

pub fn format_manifold(kind: ManifoldKind) -> String {
    match kind {
        ManifoldKind::Sphere(d) => format!("sphere:{d}"),
        ManifoldKind::Euclidean(d) => format!("euclidean:{d}"),
        ManifoldKind::FlatTorus(d) => format!("torus:{d}"),
    }
}

impl RunConfig {
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    /// Sets one field from its text form. Grid fields are checked together
    /// in [`validate`](Self::validate).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "variant" => {
                self.variant = value
                    .parse()
                    .map_err(|e: rgvfm_core::Error| CliError::Config(e.to_string()))?;
            }
            "manifold" => self.manifold = parse_manifold(value)?,
            "grid_azimuth" | "grid_z" | "grid_parity" => {
                let mut a = self.grid.n_azimuth();
                let mut z = self.grid.n_z();
                let mut p = self.grid.parity();
                match key {
                    "grid_azimuth" => a = parse_num(key, value)?,
                    "grid_z" => z = parse_num(key, value)?,
                    _ => {
                        p = Parity::parse(value).ok_or_else(|| {
                            CliError::Config(format!(
                                "grid_parity: expected even or odd, got {value:?}"
                            ))
                        })?
                    }
                }
                self.grid = CheckerboardGrid::new(a, z, p)
                    .map_err(|e| CliError::Config(format!("{key}: {e}")))?;
            }
            "hidden_dim" => self.hidden_dim = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "samples_per_epoch" => self.samples_per_epoch = parse_num(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "steps" => self.steps = parse_num(key, value)?,
            "t_end" => self.t_end = parse_num(key, value)?,
            "retract" => {
                self.retract = match value {
                    "auto" => None,
                    v => Some(parse_bool(key, v)?),
                }
            }
            "trajectory" => self.trajectory = parse_bool(key, value)?,
            "n_samples" => self.n_samples = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses configuration text on top of the defaults and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.hidden_dim == 0
            || self.epochs == 0
            || self.batch_size == 0
            || self.samples_per_epoch == 0
        {
            return bad("hidden_dim, epochs, batch_size and samples_per_epoch must be >= 1");
        }
        if self.n_samples == 0 || self.steps == 0 {
            return bad("n_samples and steps must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.t_end > 0.0 && self.t_end <= 1.0) {
            return bad("t_end must lie in (0, 1]");
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir must not be empty");
        }
        self.train_settings().validate()?;
        Ok(())
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            variant: self.variant,
            manifold: self.manifold,
            grid: self.grid,
            hidden_dim: self.hidden_dim,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            samples_per_epoch: self.samples_per_epoch,
            seed: self.seed,
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let default = IntegratorConfig::for_variant(self.variant);
        IntegratorConfig {
            steps: self.steps,
            t_end: self.t_end,
            retract_each_step: self.retract.unwrap_or(default.retract_each_step),
            record_trajectory: self.trajectory,
        }
    }

    /// Output directory, resolved against `root` when relative.
    pub fn output_dir_in(&self, root: Option<&Path>) -> PathBuf {
        match root {
            Some(r) if self.output_dir.is_relative() => r.join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Output directory, resolved against `$RGVFM_OUTPUT_ROOT` when set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
        self.output_dir_in(root.as_deref())
    }

    /// Canonical text with every key spelled out.
    /// SHA-256 of [`to_text`](Self::to_text) without the output directory,
    /// so that relocating a run keeps its fingerprint.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("output_dir "))
            .flat_map(|l| [l, "\n"])
            .collect();
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("variant", self.variant.name().into());
        put("manifold", format_manifold(self.manifold));
        put("grid_azimuth", self.grid.n_azimuth().to_string());
        put("grid_z", self.grid.n_z().to_string());
        put("grid_parity", self.grid.parity().name().into());
        put("hidden_dim", self.hidden_dim.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("samples_per_epoch", self.samples_per_epoch.to_string());
        put("sigma", self.sigma.to_string());
        put("steps", self.steps.to_string());
        put("t_end", self.t_end.to_string());
        put(
            "retract",
            match self.retract {
                None => "auto".into(),
                Some(b) => b.to_string(),
            },
        );
        put("trajectory", self.trajectory.to_string());
        put("n_samples", self.n_samples.to_string());
        put("seed", self.seed.to_string());
        put("output_dir", self.output_dir.display().to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::for_variant(Variant::Cfm);
        c.learning_rate = 3.3e-4;
        c.retract = Some(true);
        c.grid = CheckerboardGrid::new(6, 2, Parity::Odd).unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.to_text().lines().count(), KEYS.len());
        for (line, key) in c.to_text().lines().zip(KEYS) {
            assert!(line.starts_with(key));
        }
    }

    #[test]
    fn comments_and_defaults() {
        let c = RunConfig::parse("# comment\n\nvariant = rfm\n  epochs=7 \n").unwrap();
        assert_eq!(c.variant, Variant::Rfm);
        assert_eq!(c.epochs, 7);
        assert_eq!(c.hidden_dim, 128);
        assert!(c.integrator().retract_each_step);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "epochs = 0",
            "epochs = -1",
            "nonsense = 1",
            "variant = gan",
            "grid_azimuth = 7",
            "t_end = 1.5",
            "learning_rate = 0",
            "retract = maybe",
            "sigma = -1",
            "just text",
            "manifold = euclidean:3\nvariant = rfm",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn output_root() {
        let c = RunConfig::default();
        assert_eq!(
            c.output_dir_in(Some(Path::new("/tmp/x"))),
            Path::new("/tmp/x/run")
        );
        let abs = RunConfig {
            output_dir: "/abs".into(),
            ..c
        };
        assert_eq!(
            abs.output_dir_in(Some(Path::new("/tmp/x"))),
            Path::new("/abs")
        );
    }

    #[test]
    fn fingerprint_ignores_location() {
        let a = RunConfig::default();
        let moved = RunConfig {
            output_dir: "elsewhere".into(),
            ..a.clone()
        };
        let reseeded = RunConfig {
            seed: 1,
            ..a.clone()
        };
        assert_eq!(a.fingerprint(), moved.fingerprint());
        assert_ne!(a.fingerprint(), reseeded.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
