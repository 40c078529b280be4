//! Velocity fields of trained models and a fixed-step RK4 integrator.

use alloc::vec;
use alloc::vec::Vec;

use crate::data;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::manifold::ManifoldKind;
use crate::net::Mlp;
use crate::objectives::Variant;
use crate::rng::substream;

/// Smallest `1 − t` at which a variational velocity is evaluated.
pub const MIN_REMAINING_TIME: f64 = 1e-6;
/// Default end time for every variant.
pub const DEFAULT_T_END: f64 = 1.0 - 1e-3;
pub const DEFAULT_STEPS: usize = 100;
/// Samples integrated together in one batch.
pub const CHUNK: usize = 512;
/// Largest tolerated fraction of failed samples in [`generate`].
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub steps: usize,
    pub t_end: f64,
    pub retract_each_step: bool,
    pub record_trajectory: bool,
}

impl IntegratorConfig {
    /// Defaults: 100 steps to `1 − 1e−3`, retraction for the on-manifold
    /// variants, no trajectory.
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            steps: DEFAULT_STEPS,
            t_end: DEFAULT_T_END,
            retract_each_step: variant.on_manifold(),
            record_trajectory: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be >= 1"));
        }
        if !(self.t_end > 0.0 && self.t_end <= 1.0) {
            return Err(Error::InvalidArgument("t_end must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Time of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t_end * k as f64 / self.steps as f64
    }
}

/// A time-dependent velocity field evaluated on batches of states.
pub trait VelocityField {
    fn manifold(&self) -> ManifoldKind;

    /// Writes one velocity per row of `xs` into `out`. A row whose
    /// evaluation fails gets an error in `status`; rows that already carry
    /// an error may be skipped and their output left unspecified.
    fn velocity_batch(&self, xs: &[f64], t: f64, out: &mut [f64], status: &mut [Option<Error>]);
}

/// Field defined by a pointwise function.
pub struct FnField<F> {
    manifold: ManifoldKind,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) -> Result<()>,
{
    pub fn new(manifold: ManifoldKind, f: F) -> Self {
        Self { manifold, f }
    }
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) -> Result<()>,
{
    fn manifold(&self) -> ManifoldKind {
        self.manifold
    }

    fn velocity_batch(&self, xs: &[f64], t: f64, out: &mut [f64], status: &mut [Option<Error>]) {
        let d = self.manifold.ambient_dim();
        for ((x, o), s) in xs
            .chunks_exact(d)
            .zip(out.chunks_exact_mut(d))
            .zip(status.iter_mut())
        {
            if s.is_some() {
                continue;
            }
            if let Err(e) = (self.f)(x, t, o) {
                *s = Some(e);
            }
        }
    }
}

/// A trained network together with the variant that gives its output a
/// meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    variant: Variant,
    manifold: ManifoldKind,
    net: Mlp,
}

impl FlowModel {
    pub fn new(variant: Variant, manifold: ManifoldKind, net: Mlp) -> Result<Self> {
        variant.check_manifold(manifold)?;
        let d = manifold.ambient_dim();
        if net.input_dim() != d + 1 || net.output_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: net.output_dim(),
            });
        }
        Ok(Self {
            variant,
            manifold,
            net,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn into_net(self) -> Mlp {
        self.net
    }

    /// Velocity at a single state.
    pub fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let d = self.manifold.ambient_dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; d];
        let mut status = [None];
        self.velocity_batch(x, t, &mut out, &mut status);
        match status[0].take() {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// Predicted endpoints `project(μ_θ(x, t))` of a variational model.
    pub fn endpoint_batch(
        &self,
        xs: &[f64],
        t: f64,
        out: &mut [f64],
        status: &mut [Option<Error>],
    ) {
        let d = self.manifold.ambient_dim();
        let n = xs.len() / d;
        let raw = match self.net.forward_batch(xs, &vec![t; n]) {
            Ok(r) => r,
            Err(e) => return fail_all(status, e),
        };
        for ((r, o), s) in raw
            .chunks_exact(d)
            .zip(out.chunks_exact_mut(d))
            .zip(status.iter_mut())
        {
            if s.is_none() {
                if let Err(e) = self.manifold.project_slice(r, o) {
                    *s = Some(e);
                }
            }
        }
    }

    /// Maps raw network output `mu` at state `x` to a velocity.
    fn post_process(&self, x: &[f64], t: f64, mu: &[f64], out: &mut [f64]) -> Result<()> {
        let inv = 1.0 / (1.0 - t);
        match self.variant {
            Variant::Cfm => out.copy_from_slice(mu),
            Variant::Rfm => {
                out.copy_from_slice(mu);
                self.manifold.tangent_project_in_place(x, out);
            }
            Variant::VfmGauss => {
                for ((o, m), xi) in out.iter_mut().zip(mu).zip(x) {
                    *o = (m - xi) * inv;
                }
            }
            Variant::RgVfmR3 => {
                self.manifold.project_slice(mu, out)?;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = (*o - xi) * inv;
                }
            }
            Variant::RgVfmM => {
                let mut hat = vec![0.0; x.len()];
                self.manifold.project_slice(mu, &mut hat)?;
                self.manifold.log_slice(x, &hat, out)?;
                out.iter_mut().for_each(|o| *o *= inv);
            }
        }
        Ok(())
    }
}

fn fail_all(status: &mut [Option<Error>], e: Error) {
    for s in status.iter_mut().filter(|s| s.is_none()) {
        *s = Some(e.clone());
    }
}

impl VelocityField for FlowModel {
    fn manifold(&self) -> ManifoldKind {
        self.manifold
    }

    fn velocity_batch(&self, xs: &[f64], t: f64, out: &mut [f64], status: &mut [Option<Error>]) {
        if self.variant.is_variational() && 1.0 - t < MIN_REMAINING_TIME {
            return fail_all(status, Error::TimeSingularity { t });
        }
        let d = self.manifold.ambient_dim();
        let n = xs.len() / d;
        let raw = match self.net.forward_batch(xs, &vec![t; n]) {
            Ok(r) => r,
            Err(e) => return fail_all(status, e),
        };
        for (i, s) in status.iter_mut().enumerate() {
            if s.is_some() {
                continue;
            }
            let r = i * d..(i + 1) * d;
            if let Err(e) = self.post_process(&xs[r.clone()], t, &raw[r.clone()], &mut out[r]) {
                *s = Some(e);
            }
        }
    }
}

/// Result of integrating a batch of initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    /// Final states, `n × d`. Rows of failed samples hold their last
    /// finite state.
    pub finals: Vec<f64>,
    /// `n × (steps + 1) × d` states when requested, including `t = 0`.
    pub trajectory: Option<Vec<f64>>,
    /// Per-sample failure, if any.
    pub status: Vec<Option<Error>>,
}

fn retract_rows(
    kind: ManifoldKind,
    xs: &mut [f64],
    status: &mut [Option<Error>],
    scratch: &mut [f64],
) {
    let d = kind.ambient_dim();
    for (x, s) in xs.chunks_exact_mut(d).zip(status.iter_mut()) {
        if s.is_some() {
            continue;
        }
        match kind.project_slice(x, scratch) {
            Ok(_) => x.copy_from_slice(scratch),
            Err(e) => *s = Some(e),
        }
    }
}

/// Classic four-stage RK4 with `cfg.steps` uniform steps on `[0, t_end]`
/// applied to every row of `x0`.
///
/// With `retract_each_step`, every stage state and every step result is
/// projected back onto the field's manifold. A sample whose state stops
/// being finite is frozen with [`Error::NonFiniteState`].
pub fn integrate_batch<V: VelocityField + ?Sized>(
    field: &V,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Integration> {
    cfg.validate()?;
    let kind = field.manifold();
    let d = kind.ambient_dim();
    if x0.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len() % d,
        });
    }
    let n = x0.len() / d;
    let h = cfg.t_end / cfg.steps as f64;
    let retract = cfg.retract_each_step;

    let mut x = x0.to_vec();
    let mut status: Vec<Option<Error>> = vec![None; n];
    let mut scratch = vec![0.0; d];
    if retract {
        retract_rows(kind, &mut x, &mut status, &mut scratch);
    }
    let mut trajectory = cfg
        .record_trajectory
        .then(|| vec![0.0; n * (cfg.steps + 1) * d]);
    let record = |traj: &mut Option<Vec<f64>>, k: usize, x: &[f64]| {
        if let Some(tr) = traj.as_mut() {
            for i in 0..n {
                let dst = (i * (cfg.steps + 1) + k) * d;
                tr[dst..dst + d].copy_from_slice(&x[i * d..(i + 1) * d]);
            }
        }
    };
    record(&mut trajectory, 0, &x);

    let mut k1 = vec![0.0; n * d];
    let mut k2 = vec![0.0; n * d];
    let mut k3 = vec![0.0; n * d];
    let mut k4 = vec![0.0; n * d];
    let mut stage = vec![0.0; n * d];
    let mut next = vec![0.0; n * d];

    let stage_from = |stage: &mut [f64],
                      x: &[f64],
                      k: &[f64],
                      c: f64,
                      status: &mut [Option<Error>],
                      scratch: &mut [f64]| {
        for ((s, xi), ki) in stage.iter_mut().zip(x).zip(k) {
            *s = xi + c * ki;
        }
        if retract {
            retract_rows(kind, stage, status, scratch);
        }
    };

    for step in 0..cfg.steps {
        let t = cfg.time(step);
        let t_mid = t + 0.5 * h;
        let t_next = if step + 1 == cfg.steps {
            cfg.t_end
        } else {
            cfg.time(step + 1)
        };

        field.velocity_batch(&x, t, &mut k1, &mut status);
        stage_from(&mut stage, &x, &k1, 0.5 * h, &mut status, &mut scratch);
        field.velocity_batch(&stage, t_mid, &mut k2, &mut status);
        stage_from(&mut stage, &x, &k2, 0.5 * h, &mut status, &mut scratch);
        field.velocity_batch(&stage, t_mid, &mut k3, &mut status);
        stage_from(&mut stage, &x, &k3, h, &mut status, &mut scratch);
        field.velocity_batch(&stage, t_next, &mut k4, &mut status);

        for j in 0..n * d {
            next[j] = x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if retract {
            retract_rows(kind, &mut next, &mut status, &mut scratch);
        }
        for ((xi, ni), st) in x
            .chunks_exact_mut(d)
            .zip(next.chunks_exact(d))
            .zip(status.iter_mut())
        {
            if st.is_none() && !ni.iter().all(|v| v.is_finite()) {
                *st = Some(Error::NonFiniteState { step });
            }
            if st.is_none() {
                xi.copy_from_slice(ni);
            }
        }
        record(&mut trajectory, step + 1, &x);
    }

    Ok(Integration {
        finals: x,
        trajectory,
        status,
    })
}

/// Integrates a single initial state.
pub fn integrate<V: VelocityField + ?Sized>(
    field: &V,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let d = field.manifold().ambient_dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    let mut res = integrate_batch(field, x0, cfg)?;
    match res.status[0].take() {
        Some(e) => Err(e),
        None => Ok((res.finals, res.trajectory)),
    }
}

/// Samples drawn by [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    /// Initial states, `n × d`.
    pub priors: Vec<f64>,
    /// Final states, `n × d`.
    pub samples: Vec<f64>,
    /// `n × (steps + 1) × d` when the config asks for it.
    pub trajectory: Option<Vec<f64>>,
    /// Per-sample failure; failed rows hold their last finite state.
    pub failures: Vec<(usize, Error)>,
    /// `dist(x_final, project(μ_θ(x_final, t_end)))` per sample for
    /// variational variants.
    pub endpoint_residuals: Option<Vec<f64>>,
}

/// Draws `n` prior points (sample `i` from stream `i` of `seed`) and
/// integrates each. Fails when more than 1% of the samples abort.
pub fn generate(
    model: &FlowModel,
    n: usize,
    seed: u64,
    cfg: &IntegratorConfig,
) -> Result<Generated> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of samples must be >= 1"));
    }
    cfg.validate()?;
    let kind = model.manifold;
    let d = kind.ambient_dim();
    let mut priors = vec![0.0; n * d];
    for (i, p) in priors.chunks_exact_mut(d).enumerate() {
        let mut rng = substream(seed, i as u64);
        data::sample_prior_into(model.variant, kind, &mut rng, p)?;
    }

    let mut samples = Vec::with_capacity(n * d);
    let mut trajectory = cfg
        .record_trajectory
        .then(|| Vec::with_capacity(n * (cfg.steps + 1) * d));
    let mut failures = Vec::new();
    let mut residuals = model
        .variant
        .is_variational()
        .then(|| Vec::with_capacity(n));
    for (c, chunk) in priors.chunks(CHUNK * d).enumerate() {
        let res = integrate_batch(model, chunk, cfg)?;
        for (i, s) in res.status.iter().enumerate() {
            if let Some(e) = s {
                failures.push((c * CHUNK + i, e.clone()));
            }
        }
        if let Some(r) = residuals.as_mut() {
            let m = res.status.len();
            let mut hat = vec![0.0; m * d];
            let mut st = vec![None; m];
            model.endpoint_batch(&res.finals, cfg.t_end, &mut hat, &mut st);
            for i in 0..m {
                let x = &res.finals[i * d..(i + 1) * d];
                r.push(match st[i] {
                    None => residual(kind, x, &hat[i * d..(i + 1) * d]),
                    Some(_) => f64::NAN,
                });
            }
        }
        samples.extend_from_slice(&res.finals);
        if let (Some(all), Some(part)) = (trajectory.as_mut(), res.trajectory) {
            all.extend_from_slice(&part);
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * n as f64 {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: n,
        });
    }
    Ok(Generated {
        priors,
        samples,
        trajectory,
        failures,
        endpoint_residuals: residuals,
    })
}

/// Distance from a state to a predicted endpoint. States of the ambient
/// variants need not lie on the manifold, so the Euclidean distance is used
/// for them.
fn residual(kind: ManifoldKind, x: &[f64], hat: &[f64]) -> f64 {
    let on = kind.check_point(x).is_ok();
    if on {
        kind.distance_slice(x, hat)
    } else {
        let diff: Vec<f64> = x.iter().zip(hat).map(|(a, b)| a - b).collect();
        libm::sqrt(dot(&diff, &diff))
    }
}

/// Endpoint residual `dist(x_t, project(μ_θ(x_t, t)))` along a recorded
/// trajectory, `n × (steps + 1)`; failed evaluations give NaN.
pub fn trajectory_residuals(
    model: &FlowModel,
    trajectory: &[f64],
    cfg: &IntegratorConfig,
) -> Vec<f64> {
    let d = model.manifold.ambient_dim();
    let per = (cfg.steps + 1) * d;
    let n = trajectory.len() / per;
    let mut out = vec![f64::NAN; n * (cfg.steps + 1)];
    let mut xs = vec![0.0; n * d];
    let mut hat = vec![0.0; n * d];
    for k in 0..=cfg.steps {
        for i in 0..n {
            xs[i * d..(i + 1) * d]
                .copy_from_slice(&trajectory[i * per + k * d..i * per + (k + 1) * d]);
        }
        let mut st = vec![None; n];
        model.endpoint_batch(&xs, cfg.time(k), &mut hat, &mut st);
        for i in 0..n {
            if st[i].is_none() {
                out[i * (cfg.steps + 1) + k] = residual(
                    model.manifold,
                    &xs[i * d..(i + 1) * d],
                    &hat[i * d..(i + 1) * d],
                );
            }
        }
    }
    out
}
