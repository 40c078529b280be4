//! Epoch loop: fresh target and prior draws every epoch, one Adam step per
//! minibatch.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::CheckerboardGrid;
use crate::error::{Error, Result};
use crate::manifold::ManifoldKind;
use crate::net::{Adam, ForwardCache, Mlp};
use crate::objectives::{sample_path_from_prior, Objective, PathBatch, Variant};
use crate::rng::{substream, STREAM_TRAIN};
use crate::sampler::FlowModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub variant: Variant,
    pub manifold: ManifoldKind,
    pub grid: CheckerboardGrid,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fresh target draws per epoch.
    pub samples_per_epoch: usize,
    pub seed: u64,
}

impl TrainSettings {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            manifold: ManifoldKind::Sphere(3),
            grid: CheckerboardGrid::default(),
            hidden_dim: 128,
            epochs: 3000,
            batch_size: 512,
            learning_rate: 1e-3,
            samples_per_epoch: 10_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.variant.check_manifold(self.manifold)?;
        if self.manifold != ManifoldKind::Sphere(3) {
            return Err(Error::UnsupportedManifold(
                "the checkerboard target lives on the 2-sphere",
            ));
        }
        if self.hidden_dim == 0
            || self.epochs == 0
            || self.batch_size == 0
            || self.samples_per_epoch == 0
        {
            return Err(Error::InvalidArgument(
                "hidden_dim, epochs, batch_size and samples_per_epoch must be >= 1",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// One-based.
    pub epoch: usize,
    /// Sample-weighted mean of the minibatch losses.
    pub mean_loss: f64,
    pub antipodal_clamps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: FlowModel,
    pub history: Vec<EpochStats>,
}

/// Trains a fresh network. `on_epoch` sees every epoch's statistics as they
/// are produced. Errors carry the one-based epoch they occurred in.
pub fn train<F: FnMut(&EpochStats)>(settings: &TrainSettings, mut on_epoch: F) -> Result<Trained> {
    settings.validate()?;
    let kind = settings.manifold;
    let d = kind.ambient_dim();
    let objective = Objective::new(settings.variant, kind)?;
    let mut net = Mlp::init(settings.seed, d + 1, settings.hidden_dim, d)?;
    let mut adam = Adam::new(net.num_params(), settings.learning_rate)?;
    let mut rng = substream(settings.seed, STREAM_TRAIN);

    let mut cache = ForwardCache::default();
    let mut grads = vec![0.0; net.num_params()];
    let mut batch = PathBatch::new(d);
    let mut history = Vec::with_capacity(settings.epochs);

    for epoch in 1..=settings.epochs {
        let at = |e: Error| Error::AtEpoch {
            epoch,
            source: Box::new(e),
        };
        let targets = settings.grid.sample(&mut rng, settings.samples_per_epoch);
        let mut weighted = 0.0;
        let mut clamps = 0;
        for chunk in targets.chunks(settings.batch_size * d) {
            batch.clear();
            for x1 in chunk.chunks_exact(d) {
                let s = sample_path_from_prior(settings.variant, kind, &mut rng, x1).map_err(at)?;
                batch.push(&s).map_err(at)?;
            }
            let value = objective
                .loss_and_grad_with(&net, &batch, &mut cache, &mut grads)
                .map_err(at)?;
            adam.step(net.params_mut(), &grads).map_err(at)?;
            weighted += value.value * batch.len() as f64;
            clamps += value.antipodal_clamps;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: weighted / settings.samples_per_epoch as f64,
            antipodal_clamps: clamps,
        };
        on_epoch(&stats);
        history.push(stats);
    }

    Ok(Trained {
        model: FlowModel::new(settings.variant, kind, net)?,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variant: Variant) -> TrainSettings {
        TrainSettings {
            hidden_dim: 16,
            epochs: 3,
            batch_size: 64,
            samples_per_epoch: 200,
            ..TrainSettings::new(variant)
        }
    }

    #[test]
    fn deterministic_history() {
        for v in Variant::ALL {
            let a = train(&small(v), |_| {}).unwrap();
            let b = train(&small(v), |_| {}).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.history.len(), 3);
            assert!(a.history.iter().all(|s| s.mean_loss.is_finite()));
        }
    }

    #[test]
    fn callback_sees_every_epoch() {
        let mut seen = Vec::new();
        train(&small(Variant::RgVfmM), |s| seen.push(s.epoch)).unwrap();
        assert_eq!(seen, [1, 2, 3]);
    }

    #[test]
    fn settings_validation() {
        let mut s = small(Variant::Cfm);
        s.epochs = 0;
        assert!(train(&s, |_| {}).is_err());
        let mut s = small(Variant::Rfm);
        s.manifold = ManifoldKind::Euclidean(3);
        assert!(s.validate().is_err());
        let mut s = small(Variant::Cfm);
        s.learning_rate = f64::NAN;
        assert!(s.validate().is_err());
    }

    #[test]
    fn loss_decreases_quickly_at_first() {
        let s = TrainSettings {
            epochs: 15,
            ..small(Variant::VfmGauss)
        };
        let t = train(&s, |_| {}).unwrap();
        assert!(t.history.last().unwrap().mean_loss < t.history[0].mean_loss);
    }
}
