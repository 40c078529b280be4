//! Manifolds with closed-form geodesics: Euclidean space, the unit sphere
//! embedded in its ambient space, and the flat torus `[0, 2π)^n`.
//!
//! All three carry the metric induced by the ambient Euclidean inner product,
//! so tangent vectors are stored as plain ambient vectors. The typed API
//! ([`ManifoldPoint`], [`TangentVector`]) validates invariants; the `*_slice`
//! methods skip validation and are meant for inner loops that already hold
//! valid data.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Tolerance on `| ‖x‖ - 1 |` for a point to count as lying on the sphere.
pub const SPHERE_TOL: f64 = 1e-10;
/// Tolerance on `|⟨v, x⟩|` for a vector to count as tangent at `x`.
pub const TANGENT_TOL: f64 = 1e-10;
/// Below this angle exp/log return the trivial answer.
pub const SMALL_ANGLE: f64 = 1e-12;
/// `‖x + y‖` at or below this marks `x` and `y` as antipodal.
pub const ANTIPODAL_TOL: f64 = 1e-9;
/// Smallest norm accepted by [`ManifoldKind::project`] on the sphere.
pub const MIN_PROJECT_NORM: f64 = 1e-12;

const MIN_SAMPLE_NORM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    /// `R^d`.
    Euclidean(usize),
    /// Unit sphere in `R^d`, i.e. `S^{d-1}`; the field is the ambient dimension.
    Sphere(usize),
    /// Flat torus `[0, 2π)^n`.
    FlatTorus(usize),
}

/// Point on a manifold, in ambient (or angle) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    coords: Vec<f64>,
}

impl ManifoldPoint {
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Tangent vector together with the point it is attached to.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: ManifoldPoint,
    vec: Vec<f64>,
}

impl TangentVector {
    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    pub fn into_parts(self) -> (ManifoldPoint, Vec<f64>) {
        (self.base, self.vec)
    }

    /// Same base point, vector multiplied by `s`.
    pub fn scaled(&self, s: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            vec: self.vec.iter().map(|v| v * s).collect(),
        }
    }
}

/// Reduce an angle to `[0, 2π)`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let r = a - TAU * libm::floor(a / TAU);
    if (0.0..TAU).contains(&r) {
        r
    } else {
        0.0
    }
}

/// Shortest signed angular difference `b - a`, in `(-π, π]`.
#[inline]
pub fn wrapped_difference(a: f64, b: f64) -> f64 {
    let r = wrap_angle(b - a + PI) - PI;
    if r <= -PI {
        PI
    } else {
        r
    }
}

impl ManifoldKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ManifoldKind::Euclidean(d) if d < 1 => {
                Err(Error::InvalidManifold("Euclidean dimension must be >= 1"))
            }
            ManifoldKind::Sphere(d) if d < 2 => Err(Error::InvalidManifold(
                "sphere ambient dimension must be >= 2",
            )),
            ManifoldKind::FlatTorus(d) if d < 1 => {
                Err(Error::InvalidManifold("torus dimension must be >= 1"))
            }
            _ => Ok(()),
        }
    }

    /// Length of the coordinate vectors for points and tangent vectors.
    pub fn ambient_dim(&self) -> usize {
        match *self {
            ManifoldKind::Euclidean(d) | ManifoldKind::Sphere(d) | ManifoldKind::FlatTorus(d) => d,
        }
    }

    pub fn is_flat(&self) -> bool {
        !matches!(self, ManifoldKind::Sphere(_))
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        let expected = self.ambient_dim();
        if got != expected {
            return Err(Error::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    /// Checks the point invariants for this manifold.
    pub fn check_point(&self, coords: &[f64]) -> Result<()> {
        self.validate()?;
        self.check_dim(coords.len())?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NotOnManifold);
        }
        let ok = match self {
            ManifoldKind::Euclidean(_) => true,
            ManifoldKind::Sphere(_) => libm::fabs(norm(coords) - 1.0) <= SPHERE_TOL,
            ManifoldKind::FlatTorus(_) => coords.iter().all(|c| (0.0..TAU).contains(c)),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NotOnManifold)
        }
    }

    /// Wraps already-valid coordinates into a [`ManifoldPoint`].
    pub fn point(&self, coords: Vec<f64>) -> Result<ManifoldPoint> {
        self.check_point(&coords)?;
        Ok(ManifoldPoint::from_raw(coords))
    }

    /// Builds a tangent vector at `base`, checking tangency.
    pub fn tangent(&self, base: &ManifoldPoint, vec: Vec<f64>) -> Result<TangentVector> {
        self.check_dim(base.dim())?;
        self.check_dim(vec.len())?;
        if let ManifoldKind::Sphere(_) = self {
            if libm::fabs(dot(&vec, base.coords())) > TANGENT_TOL {
                return Err(Error::NotTangent);
            }
        }
        Ok(TangentVector {
            base: base.clone(),
            vec,
        })
    }

    pub fn zero_tangent(&self, base: &ManifoldPoint) -> TangentVector {
        TangentVector {
            base: base.clone(),
            vec: vec![0.0; base.dim()],
        }
    }

    /// Retraction of an ambient vector onto the manifold.
    pub fn project(&self, ambient: &[f64]) -> Result<ManifoldPoint> {
        self.validate()?;
        self.check_dim(ambient.len())?;
        let mut out = vec![0.0; ambient.len()];
        self.project_slice(ambient, &mut out)?;
        Ok(ManifoldPoint::from_raw(out))
    }

    /// Unchecked [`project`](Self::project) into `out`; returns the input norm
    /// on the sphere (1 otherwise).
    pub fn project_slice(&self, ambient: &[f64], out: &mut [f64]) -> Result<f64> {
        match self {
            ManifoldKind::Euclidean(_) => {
                out.copy_from_slice(ambient);
                Ok(1.0)
            }
            ManifoldKind::Sphere(_) => {
                let n = norm(ambient);
                if !(n > MIN_PROJECT_NORM) {
                    return Err(Error::ZeroVector);
                }
                for (o, a) in out.iter_mut().zip(ambient) {
                    *o = a / n;
                }
                Ok(n)
            }
            ManifoldKind::FlatTorus(_) => {
                for (o, a) in out.iter_mut().zip(ambient) {
                    *o = wrap_angle(*a);
                }
                Ok(1.0)
            }
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`.
    pub fn tangent_project(&self, x: &ManifoldPoint, ambient: &[f64]) -> Result<TangentVector> {
        self.check_point(x.coords())?;
        self.check_dim(ambient.len())?;
        let mut vec = ambient.to_vec();
        self.tangent_project_in_place(x.coords(), &mut vec);
        Ok(TangentVector {
            base: x.clone(),
            vec,
        })
    }

    /// Unchecked tangent projection, overwriting `v`.
    #[inline]
    pub fn tangent_project_in_place(&self, x: &[f64], v: &mut [f64]) {
        if let ManifoldKind::Sphere(_) = self {
            let c = dot(v, x);
            for (vi, xi) in v.iter_mut().zip(x) {
                *vi -= c * xi;
            }
        }
    }

    pub fn exp_map(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
        if v.base.coords != x.coords {
            return Err(Error::BaseMismatch);
        }
        self.check_point(x.coords())?;
        self.check_dim(v.vec.len())?;
        let mut out = vec![0.0; x.dim()];
        self.exp_slice(x.coords(), &v.vec, &mut out);
        Ok(ManifoldPoint::from_raw(out))
    }

    /// Unchecked exponential map into `out`.
    pub fn exp_slice(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            ManifoldKind::Euclidean(_) => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(v) {
                    *o = a + b;
                }
            }
            ManifoldKind::Sphere(_) => {
                let n = norm(v);
                if n < SMALL_ANGLE {
                    out.copy_from_slice(x);
                    return;
                }
                let (s, c) = (libm::sin(n), libm::cos(n));
                for ((o, a), b) in out.iter_mut().zip(x).zip(v) {
                    *o = c * a + s * b / n;
                }
                let m = norm(out);
                out.iter_mut().for_each(|o| *o /= m);
            }
            ManifoldKind::FlatTorus(_) => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(v) {
                    *o = wrap_angle(a + b);
                }
            }
        }
    }

    pub fn log_map(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
        self.check_point(x.coords())?;
        self.check_point(y.coords())?;
        let mut vec = vec![0.0; x.dim()];
        self.log_slice(x.coords(), y.coords(), &mut vec)?;
        Ok(TangentVector {
            base: x.clone(),
            vec,
        })
    }

    /// Unchecked logarithm map `log_x(y)` into `out`.
    pub fn log_slice(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            ManifoldKind::Euclidean(_) => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = b - a;
                }
            }
            ManifoldKind::Sphere(_) => {
                let (diff, sum) = chord_lengths(x, y);
                if sum <= ANTIPODAL_TOL {
                    return Err(Error::AntipodalPoints);
                }
                let theta = 2.0 * libm::atan2(diff, sum);
                if theta < SMALL_ANGLE {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return Ok(());
                }
                let c = dot(x, y);
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = b - c * a;
                }
                let u = norm(out);
                if u == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    out.iter_mut().for_each(|o| *o *= theta / u);
                }
            }
            ManifoldKind::FlatTorus(_) => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = wrapped_difference(*a, *b);
                }
            }
        }
        Ok(())
    }

    pub fn geodesic_distance(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
        self.check_point(x.coords())?;
        self.check_point(y.coords())?;
        Ok(self.distance_slice(x.coords(), y.coords()))
    }

    /// Unchecked geodesic distance.
    ///
    /// On the sphere the angle is evaluated as `2·atan2(‖x−y‖, ‖x+y‖)`, which
    /// equals `arccos⟨x, y⟩` but stays accurate near 0 and π.
    pub fn distance_slice(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            ManifoldKind::Euclidean(_) => libm::sqrt(crate::linalg::dist_sq(x, y)),
            ManifoldKind::Sphere(_) => {
                let (diff, sum) = chord_lengths(x, y);
                2.0 * libm::atan2(diff, sum)
            }
            ManifoldKind::FlatTorus(_) => libm::sqrt(
                x.iter()
                    .zip(y)
                    .map(|(a, b)| {
                        let d = wrapped_difference(*a, *b);
                        d * d
                    })
                    .sum(),
            ),
        }
    }

    /// Point at fraction `t` along the minimizing geodesic from `x0` to `x1`.
    pub fn geodesic_interpolate(
        &self,
        x0: &ManifoldPoint,
        x1: &ManifoldPoint,
        t: f64,
    ) -> Result<ManifoldPoint> {
        let v = self.log_map(x0, x1)?.scaled(t);
        self.exp_map(x0, &v)
    }

    /// Unchecked geodesic interpolation into `out`.
    pub fn interpolate_slice(&self, x0: &[f64], x1: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let mut v = vec![0.0; x0.len()];
        self.log_slice(x0, x1, &mut v)?;
        v.iter_mut().for_each(|a| *a *= t);
        self.exp_slice(x0, &v, out);
        Ok(())
    }

    /// Norm induced by the metric; the ambient inner product for all kinds here.
    pub fn metric_norm(&self, v: &TangentVector) -> f64 {
        norm(&v.vec)
    }

    /// `n` independent draws from the uniform (Haar) distribution.
    pub fn uniform_sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n: usize,
    ) -> Result<Vec<ManifoldPoint>> {
        self.validate()?;
        let d = self.ambient_dim();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut coords = vec![0.0; d];
            self.uniform_sample_into(rng, &mut coords)?;
            out.push(ManifoldPoint::from_raw(coords));
        }
        Ok(out)
    }

    /// Writes one uniform draw into `out`.
    pub fn uniform_sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match self {
            ManifoldKind::Euclidean(_) => Err(Error::UnsupportedManifold(
                "no uniform distribution on Euclidean space",
            )),
            ManifoldKind::Sphere(_) => loop {
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                }
                let n = norm(out);
                if n >= MIN_SAMPLE_NORM {
                    out.iter_mut().for_each(|o| *o /= n);
                    return Ok(());
                }
            },
            ManifoldKind::FlatTorus(_) => {
                for o in out.iter_mut() {
                    *o = wrap_angle(rng.random::<f64>() * TAU);
                }
                Ok(())
            }
        }
    }
}

/// `(‖x − y‖, ‖x + y‖)`.
#[inline]
fn chord_lengths(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mut d, mut s) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        d += (a - b) * (a - b);
        s += (a + b) * (a + b);
    }
    (libm::sqrt(d), libm::sqrt(s))
}
