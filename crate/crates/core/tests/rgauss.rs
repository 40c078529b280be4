//! Normalizer quadrature and Fréchet means against independent oracles.

mod common;

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rgvfm_core::rgauss::{frechet_mean, RiemannianGaussian};
use rgvfm_core::{ManifoldKind, ManifoldPoint};

const S2: ManifoldKind = ManifoldKind::Sphere(3);

fn point(c: &[f64]) -> ManifoldPoint {
    S2.point(c.to_vec()).unwrap()
}

/// Adaptive Simpson quadrature.
#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64 + Copy>(
        f: F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    step(
        f,
        a,
        b,
        fa,
        fm,
        fb,
        (b - a) / 6.0 * (fa + 4.0 * fm + fb),
        tol,
        50,
    )
}

/// By rotational symmetry about the mean, `C = 2π ∫₀^π exp(−θ²/2σ²) sin θ dθ`.
fn normalizer_oracle(sigma: f64) -> f64 {
    TAU * simpson(
        |th: f64| (-th * th / (2.0 * sigma * sigma)).exp() * th.sin(),
        0.0,
        PI,
        1e-14,
    )
}

#[test]
fn normalizer_matches_one_dimensional_oracle() {
    for sigma in [0.3, 0.5, 1.0, 2.0] {
        let oracle = normalizer_oracle(sigma);
        for mu in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.48, -0.6, 0.64]] {
            let c = RiemannianGaussian::new(S2, point(&mu), sigma)
                .unwrap()
                .normalizer_numeric(128)
                .unwrap();
            let rel = (c - oracle).abs() / oracle;
            assert!(
                rel <= 1e-6,
                "sigma {sigma} mu {mu:?}: {c} vs {oracle} ({rel:e})"
            );
        }
    }
}

#[test]
fn normalizer_is_independent_of_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let values: Vec<f64> = (0..10)
        .map(|_| {
            let mu = common::random_unit(&mut rng);
            RiemannianGaussian::new(S2, point(&mu), 0.5)
                .unwrap()
                .normalizer_numeric(128)
                .unwrap()
        })
        .collect();
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    assert!((max - min) / min <= 1e-6, "{values:?}");
}

#[test]
fn normalizer_is_reproducible() {
    let g = RiemannianGaussian::new(S2, point(&[0.0, 0.6, 0.8]), 0.7).unwrap();
    assert_eq!(
        g.normalizer_numeric(96).unwrap().to_bits(),
        g.normalizer_numeric(96).unwrap().to_bits()
    );
}

#[test]
fn euclidean_log_density_is_the_normal_density() {
    let sigma: f64 = 1.7;
    let g = RiemannianGaussian::new(
        ManifoldKind::Euclidean(3),
        ManifoldKind::Euclidean(3)
            .point(vec![0.5, -1.0, 2.0])
            .unwrap(),
        sigma,
    )
    .unwrap();
    let z = [1.25, 0.5, -0.75];
    let log_c = -3.0 * (sigma * (2.0 * PI).sqrt()).ln();
    let lp = g
        .log_density_unnormalized(&ManifoldKind::Euclidean(3).point(z.to_vec()).unwrap())
        .unwrap()
        + log_c;
    let sq: f64 = z
        .iter()
        .zip([0.5, -1.0, 2.0])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let normal = -sq / (2.0 * sigma * sigma) - 1.5 * (2.0 * PI).ln() - 3.0 * sigma.ln();
    assert!((lp - normal).abs() <= 1e-12);
}

#[test]
fn log_density_decreases_with_distance() {
    let mu = [0.0, 0.0, 1.0];
    let g = RiemannianGaussian::new(S2, point(&mu), 0.8).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..60 {
        let th = k as f64 * 0.05;
        let v = g
            .log_density_unnormalized(&point(&[th.sin(), 0.0, th.cos()]))
            .unwrap();
        assert!(v < last || k == 0);
        last = v;
    }
}

/// Brute-force minimizer of Σ dist² over a grid with `nz` heights and `nphi`
/// azimuths, plus the local geodesic grid spacing there.
fn grid_minimizer(points: &[f64], nz: usize, nphi: usize) -> ([f64; 3], f64) {
    let dz = 2.0 / nz as f64;
    let dphi = TAU / nphi as f64;
    let mut best = (f64::INFINITY, [0.0; 3], 0);
    for i in 0..nz {
        let z = -1.0 + (i as f64 + 0.5) * dz;
        let r = (1.0 - z * z).sqrt();
        for k in 0..nphi {
            let phi = (k as f64 + 0.5) * dphi;
            let c = [r * phi.cos(), r * phi.sin(), z];
            let f: f64 = points
                .chunks_exact(3)
                .map(|p| common::angle(p, &c).powi(2))
                .sum();
            if f < best.0 {
                best = (f, c, i);
            }
        }
    }
    let z = best.1[2];
    let (z_lo, z_hi) = ((z - dz).max(-1.0), (z + dz).min(1.0));
    let dtheta = (z_lo.acos() - z_hi.acos()) / 2.0;
    let spacing = (dtheta * dtheta + ((1.0 - z * z).sqrt() * dphi).powi(2)).sqrt();
    (best.1, spacing)
}

#[test]
fn frechet_mean_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for set in 0..20 {
        let center = common::random_unit(&mut rng);
        let pts = common::cap_points(&mut rng, &center, 1.2, 50);
        let list: Vec<ManifoldPoint> = pts.chunks_exact(3).map(point).collect();
        let mean = frechet_mean(S2, &list, 1e-12, 500).unwrap();
        let (grid, spacing) = grid_minimizer(&pts, 400, 800);
        let err = common::angle(mean.coords(), &grid);
        assert!(
            err <= 2.0 * spacing,
            "set {set}: error {err} > 2 × spacing {spacing}"
        );
    }
}

#[test]
fn frechet_mean_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let center = common::random_unit(&mut rng);
    let pts = common::cap_points(&mut rng, &center, 1.0, 50);
    let list: Vec<ManifoldPoint> = pts.chunks_exact(3).map(point).collect();
    let mean = frechet_mean(S2, &list, 1e-9, 100).unwrap();
    let mut g = [0.0; 3];
    for p in &list {
        let v = S2.log_map(&mean, p).unwrap();
        for (gi, vi) in g.iter_mut().zip(v.vec()) {
            *gi += vi / 50.0;
        }
    }
    assert!(common::norm(&g) < 1e-9);
}

#[test]
fn frechet_mean_is_rotation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..10 {
        let center = common::random_unit(&mut rng);
        let pts = common::cap_points(&mut rng, &center, 1.2, 30);
        let r = common::random_rotation(&mut rng);
        let list: Vec<ManifoldPoint> = pts.chunks_exact(3).map(point).collect();
        let rotated: Vec<ManifoldPoint> = pts
            .chunks_exact(3)
            .map(|p| point(&common::rotate(&r, p)))
            .collect();
        let m = frechet_mean(S2, &list, 1e-12, 500).unwrap();
        let mr = frechet_mean(S2, &rotated, 1e-12, 500).unwrap();
        let expected = common::rotate(&r, m.coords());
        assert!(common::angle(mr.coords(), &expected) <= 1e-7);
    }
}

#[test]
fn two_point_mean_is_the_midpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..50 {
        let x = common::random_unit(&mut rng);
        let theta = 2.5 * rand::Rng::random::<f64>(&mut rng) + 0.01;
        let y = common::point_at_angle(&mut rng, &x, theta);
        let m = frechet_mean(S2, &[point(&x), point(&y)], 1e-13, 500).unwrap();
        let mid = S2
            .geodesic_interpolate(&point(&x), &point(&y), 0.5)
            .unwrap();
        assert!(common::angle(m.coords(), mid.coords()) <= 1e-8);
    }
}

#[test]
fn wide_gaussian_normalizer_is_the_sphere_area() {
    let c = RiemannianGaussian::new(S2, point(&[0.0, 0.0, 1.0]), 1e6)
        .unwrap()
        .normalizer_numeric(64)
        .unwrap();
    assert!((c - 4.0 * PI).abs() / (4.0 * PI) <= 1e-9);
}
