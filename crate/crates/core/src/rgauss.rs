//! Riemannian Gaussian densities and Fréchet means.
//!
//! The density is `exp(-dist(z, μ)² / 2σ²) / C`. On homogeneous manifolds the
//! normalizer `C` does not depend on `μ`, which is why training never needs
//! it; [`RiemannianGaussian::normalizer_numeric`] exists to check that claim.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::manifold::{ManifoldKind, ManifoldPoint};

/// Smallest grid resolution accepted by the quadrature.
pub const MIN_RESOLUTION: usize = 64;

/// Pairwise-distance bound used as the uniqueness test for sphere means.
pub const HEMISPHERE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct RiemannianGaussian {
    manifold: ManifoldKind,
    mu: ManifoldPoint,
    sigma: f64,
}

impl RiemannianGaussian {
    pub fn new(manifold: ManifoldKind, mu: ManifoldPoint, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument("sigma must be positive and finite"));
        }
        manifold.check_point(mu.coords())?;
        Ok(Self {
            manifold,
            mu,
            sigma,
        })
    }

    pub fn manifold(&self) -> ManifoldKind {
        self.manifold
    }

    pub fn mean(&self) -> &ManifoldPoint {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `-dist(z, μ)² / (2σ²)`, without the `-log C` term.
    pub fn log_density_unnormalized(&self, z: &ManifoldPoint) -> Result<f64> {
        let d = self.manifold.geodesic_distance(z, &self.mu)?;
        Ok(-d * d / (2.0 * self.sigma * self.sigma))
    }

    /// Normalizer `C = ∫ exp(-dist(z, μ)² / 2σ²) dz` over the 2-sphere.
    ///
    /// The sphere is parameterized by azimuth `φ` and height `z`, in which the
    /// area element is `dφ dz`. The product rule uses `resolution`
    /// Gauss–Legendre nodes in `z` and `2·resolution` midpoints in `φ`
    /// (spectrally accurate for the periodic direction). Summation order is
    /// fixed, so the result is bitwise reproducible.
    pub fn normalizer_numeric(&self, resolution: usize) -> Result<f64> {
        if self.manifold != ManifoldKind::Sphere(3) {
            return Err(Error::UnsupportedManifold(
                "normalizer quadrature needs the 2-sphere",
            ));
        }
        if resolution < MIN_RESOLUTION {
            return Err(Error::InvalidArgument(
                "quadrature resolution must be >= 64",
            ));
        }
        let (nodes, weights) = gauss_legendre(resolution);
        let n_phi = 2 * resolution;
        let dphi = TAU / n_phi as f64;
        let inv_two_var = 1.0 / (2.0 * self.sigma * self.sigma);
        let mu = self.mu.coords();
        let mut total = 0.0;
        let mut point = [0.0; 3];
        for (z, w) in nodes.iter().zip(&weights) {
            let r = libm::sqrt((1.0 - z * z).max(0.0));
            let mut ring = 0.0;
            for k in 0..n_phi {
                let phi = (k as f64 + 0.5) * dphi;
                point[0] = r * libm::cos(phi);
                point[1] = r * libm::sin(phi);
                point[2] = *z;
                let d = self.manifold.distance_slice(&point, mu);
                ring += libm::exp(-d * d * inv_two_var);
            }
            total += w * ring * dphi;
        }
        Ok(total)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes in increasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if libm::fabs(dx) < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fréchet (Karcher) mean by Riemannian gradient descent with unit step.
///
/// Starts from the retraction of the ambient mean and iterates
/// `μ ← exp_μ(mean_i log_μ(x_i))` until the mean log vector has norm below
/// `tol`. On the sphere the points must have pairwise distances below
/// `π - 0.1`, otherwise [`Error::NoUniqueMean`] is returned.
pub fn frechet_mean(
    kind: ManifoldKind,
    points: &[ManifoldPoint],
    tol: f64,
    max_iter: usize,
) -> Result<ManifoldPoint> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    for p in points {
        kind.check_point(p.coords())?;
    }
    if let ManifoldKind::Sphere(_) = kind {
        let limit = PI - HEMISPHERE_MARGIN;
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                if kind.distance_slice(a.coords(), b.coords()) >= limit {
                    return Err(Error::NoUniqueMean);
                }
            }
        }
    }

    let d = kind.ambient_dim();
    let n = points.len() as f64;
    let mut ambient = vec![0.0; d];
    for p in points {
        for (a, c) in ambient.iter_mut().zip(p.coords()) {
            *a += c / n;
        }
    }
    let mut mu = kind.project(&ambient)?.into_coords();

    let mut step = vec![0.0; d];
    let mut log = vec![0.0; d];
    let mut next = vec![0.0; d];
    for _ in 0..max_iter {
        step.iter_mut().for_each(|s| *s = 0.0);
        for p in points {
            kind.log_slice(&mu, p.coords(), &mut log)?;
            for (s, l) in step.iter_mut().zip(&log) {
                *s += l / n;
            }
        }
        if norm(&step) < tol {
            return Ok(ManifoldPoint::from_raw(mu));
        }
        kind.exp_slice(&mu, &step, &mut next);
        core::mem::swap(&mut mu, &mut next);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    const S2: ManifoldKind = ManifoldKind::Sphere(3);

    fn p(kind: ManifoldKind, c: &[f64]) -> ManifoldPoint {
        kind.point(c.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_sigma() {
        let mu = p(S2, &[0.0, 0.0, 1.0]);
        assert!(RiemannianGaussian::new(S2, mu.clone(), 0.0).is_err());
        assert!(RiemannianGaussian::new(S2, mu, f64::NAN).is_err());
    }

    #[test]
    fn log_density_examples() {
        let g = RiemannianGaussian::new(S2, p(S2, &[0.0, 0.0, 1.0]), 1.0).unwrap();
        assert_eq!(g.log_density_unnormalized(g.mean()).unwrap(), 0.0);
        let v = g
            .log_density_unnormalized(&p(S2, &[1.0, 0.0, 0.0]))
            .unwrap();
        assert!((v + FRAC_PI_2 * FRAC_PI_2 / 2.0).abs() < 1e-12);
        assert!((v + 1.2337006).abs() < 1e-7);

        let e = ManifoldKind::Euclidean(3);
        let g = RiemannianGaussian::new(e, p(e, &[0.0; 3]), 2.0).unwrap();
        let v = g.log_density_unnormalized(&p(e, &[1.0, 1.0, 1.0])).unwrap();
        assert!((v + 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact up to degree 9
        let i8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((i8 - 2.0 / 9.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn normalizer_flat_limit_is_area() {
        let g = RiemannianGaussian::new(S2, p(S2, &[0.0, 0.0, 1.0]), 1e6).unwrap();
        let c = g.normalizer_numeric(64).unwrap();
        assert!((c / (4.0 * PI) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn normalizer_preconditions() {
        let g = RiemannianGaussian::new(S2, p(S2, &[0.0, 0.0, 1.0]), 0.5).unwrap();
        assert!(matches!(
            g.normalizer_numeric(32),
            Err(Error::InvalidArgument(_))
        ));
        let e = ManifoldKind::Euclidean(3);
        let g = RiemannianGaussian::new(e, p(e, &[0.0; 3]), 0.5).unwrap();
        assert!(matches!(
            g.normalizer_numeric(64),
            Err(Error::UnsupportedManifold(_))
        ));
    }

    #[test]
    fn normalizer_pole_vs_equator() {
        let a = RiemannianGaussian::new(S2, p(S2, &[0.0, 0.0, 1.0]), 0.5).unwrap();
        let b = RiemannianGaussian::new(S2, p(S2, &[1.0, 0.0, 0.0]), 0.5).unwrap();
        let (ca, cb) = (
            a.normalizer_numeric(64).unwrap(),
            b.normalizer_numeric(64).unwrap(),
        );
        assert!((ca / cb - 1.0).abs() < 1e-8, "{ca} {cb}");
    }

    #[test]
    fn frechet_single_and_pair() {
        let x = p(S2, &[0.6, 0.0, 0.8]);
        let m = frechet_mean(S2, core::slice::from_ref(&x), 1e-12, 50).unwrap();
        assert!(S2.distance_slice(m.coords(), x.coords()) < 1e-12);

        let y = p(S2, &[0.0, 1.0, 0.0]);
        let m = frechet_mean(S2, &[x.clone(), y.clone()], 1e-12, 100).unwrap();
        let mid = S2.geodesic_interpolate(&x, &y, 0.5).unwrap();
        assert!(S2.distance_slice(m.coords(), mid.coords()) < 1e-8);
    }

    #[test]
    fn frechet_errors() {
        assert_eq!(frechet_mean(S2, &[], 1e-9, 10), Err(Error::EmptyInput));
        let pts = [p(S2, &[1.0, 0.0, 0.0]), p(S2, &[-1.0, 0.0, 0.0])];
        assert_eq!(frechet_mean(S2, &pts, 1e-9, 10), Err(Error::NoUniqueMean));
        let pts = [
            p(S2, &[1.0, 0.0, 0.0]),
            p(S2, &[0.0, 1.0, 0.0]),
            p(S2, &[0.0, 0.6, 0.8]),
        ];
        assert_eq!(
            frechet_mean(S2, &pts, 1e-15, 1),
            Err(Error::NoConvergence { iterations: 1 })
        );
    }

    #[test]
    fn frechet_euclidean_is_arithmetic_mean() {
        let e = ManifoldKind::Euclidean(2);
        let pts = [p(e, &[0.0, 0.0]), p(e, &[2.0, 0.0]), p(e, &[1.0, 3.0])];
        let m = frechet_mean(e, &pts, 1e-12, 10).unwrap();
        assert!((m.coords()[0] - 1.0).abs() < 1e-14 && (m.coords()[1] - 1.0).abs() < 1e-14);
    }
}
