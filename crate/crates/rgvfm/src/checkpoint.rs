//! Plain-text checkpoints.
//!
//! A header of `key = value` lines, a `params` marker line, then one
//! parameter per line in shortest round-trip decimal form, so reloading
//! reproduces the parameters bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use rgvfm_core::net::Mlp;
use rgvfm_core::objectives::Variant;
use rgvfm_core::sampler::FlowModel;
use rgvfm_core::ManifoldKind;

use crate::config::{format_manifold, parse_manifold, RunConfig};
use crate::error::{CliError, Result};

pub const FORMAT: &str = "rgvfm-checkpoint-1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub variant: Variant,
    pub manifold: ManifoldKind,
    pub net: Mlp,
    /// Seed of the training run.
    pub seed: u64,
    /// Fingerprint of the training configuration.
    pub config_hash: String,
}

impl Checkpoint {
    pub fn from_model(model: &FlowModel, cfg: &RunConfig) -> Self {
        Self {
            variant: model.variant(),
            manifold: rgvfm_core::sampler::VelocityField::manifold(model),
            net: model.net().clone(),
            seed: cfg.seed,
            config_hash: cfg.fingerprint(),
        }
    }

    pub fn into_model(self) -> Result<FlowModel> {
        Ok(FlowModel::new(self.variant, self.manifold, self.net)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format = {FORMAT}");
        let _ = writeln!(s, "variant = {}", self.variant);
        let _ = writeln!(s, "manifold = {}", format_manifold(self.manifold));
        let _ = writeln!(s, "activation = {}", self.net.activation().name());
        let _ = writeln!(s, "input_dim = {}", self.net.input_dim());
        let _ = writeln!(s, "hidden_dim = {}", self.net.hidden_dim());
        let _ = writeln!(s, "output_dim = {}", self.net.output_dim());
        let _ = writeln!(s, "num_params = {}", self.net.num_params());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        s.push_str("params\n");
        for p in self.net.params() {
            let _ = writeln!(s, "{p}");
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |m: String| CliError::format(path, m);
        let mut lines = text.lines();
        let mut header = std::collections::BTreeMap::new();
        for line in lines.by_ref() {
            if line == "params" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("malformed header line {line:?}")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| err(format!("missing header key {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| err(format!("bad value for {k}")))
        };
        if get("format")? != FORMAT {
            return Err(err(format!("unsupported format {:?}", get("format")?)));
        }
        if get("activation")? != "silu" {
            return Err(err("unsupported activation".into()));
        }
        let variant = get("variant")?
            .parse()
            .map_err(|e: rgvfm_core::Error| err(e.to_string()))?;
        let manifold = parse_manifold(get("manifold")?)?;
        let n = num("num_params")?;
        let seed = get("seed")?
            .parse()
            .map_err(|_| err("bad value for seed".into()))?;
        let config_hash = get("config_hash")?.clone();
        let params = lines
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|_| err(format!("bad parameter {l:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if params.len() != n {
            return Err(err(format!(
                "expected {n} parameters, found {}",
                params.len()
            )));
        }
        let net = Mlp::from_params(
            num("input_dim")?,
            num("hidden_dim")?,
            num("output_dim")?,
            params,
        )?;
        Ok(Self {
            variant,
            manifold,
            net,
            seed,
            config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitwise_roundtrip() {
        let net = Mlp::init(17, 4, 32, 3).unwrap();
        let ck = Checkpoint {
            variant: Variant::Rfm,
            manifold: ManifoldKind::Sphere(3),
            net,
            seed: 17,
            config_hash: RunConfig::default().fingerprint(),
        };
        let back = Checkpoint::parse(&ck.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.net.params().iter().zip(ck.net.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_truncation() {
        let ck = Checkpoint {
            variant: Variant::Cfm,
            manifold: ManifoldKind::Sphere(3),
            net: Mlp::init(1, 4, 8, 3).unwrap(),
            seed: 1,
            config_hash: "0".into(),
        };
        let text = ck.to_text();
        let cut = &text[..text.len() - 30];
        assert!(Checkpoint::parse(cut, Path::new("mem")).is_err());
        assert!(Checkpoint::parse("format = other\nparams\n", Path::new("mem")).is_err());
    }
}
