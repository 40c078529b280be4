//! Target and prior distributions.
//!
//! The target is a checkerboard on the 2-sphere: the sphere is cut into
//! `n_azimuth × n_z` cells in the equal-area chart `(φ, z)`, where `φ` is the
//! azimuth and `z` the height, and the density is uniform on alternating cells.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::manifold::{wrap_angle, ManifoldKind};
use crate::objectives::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn name(&self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "even" => Some(Parity::Even),
            "odd" => Some(Parity::Odd),
            _ => None,
        }
    }
}

/// Checkerboard on the 2-sphere. Both cell counts must be even so the
/// pattern alternates consistently across the `φ = 0 / 2π` seam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CheckerboardGrid {
    n_azimuth: usize,
    n_z: usize,
    parity: Parity,
}

impl Default for CheckerboardGrid {
    fn default() -> Self {
        Self {
            n_azimuth: 8,
            n_z: 4,
            parity: Parity::Even,
        }
    }
}

impl CheckerboardGrid {
    pub fn new(n_azimuth: usize, n_z: usize, parity: Parity) -> Result<Self> {
        if n_azimuth < 2 || n_azimuth % 2 != 0 {
            return Err(Error::InvalidArgument("n_azimuth must be even and >= 2"));
        }
        if n_z < 2 || n_z % 2 != 0 {
            return Err(Error::InvalidArgument("n_z must be even and >= 2"));
        }
        Ok(Self {
            n_azimuth,
            n_z,
            parity,
        })
    }

    pub fn n_azimuth(&self) -> usize {
        self.n_azimuth
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn n_cells(&self) -> usize {
        self.n_azimuth * self.n_z
    }

    /// `(i_azimuth, i_z)` of the cell containing `p`. Points off the sphere
    /// are binned by their direction.
    pub fn cell_index(&self, p: &[f64]) -> (usize, usize) {
        let (phi, z) = unwrap(p);
        let ia = ((phi / TAU * self.n_azimuth as f64) as usize).min(self.n_azimuth - 1);
        let iz =
            (libm::floor((z + 1.0) / 2.0 * self.n_z as f64).max(0.0) as usize).min(self.n_z - 1);
        (ia, iz)
    }

    /// Flat cell number `i_z · n_azimuth + i_azimuth`.
    pub fn cell_id(&self, p: &[f64]) -> usize {
        let (ia, iz) = self.cell_index(p);
        iz * self.n_azimuth + ia
    }

    pub fn is_on_index(&self, ia: usize, iz: usize) -> bool {
        let even = (ia + iz) % 2 == 0;
        match self.parity {
            Parity::Even => even,
            Parity::Odd => !even,
        }
    }

    pub fn is_on_cell(&self, p: &[f64]) -> bool {
        let (ia, iz) = self.cell_index(p);
        self.is_on_index(ia, iz)
    }

    pub fn n_on_cells(&self) -> usize {
        self.n_cells() / 2
    }

    /// Bounds `(φ_lo, φ_hi, z_lo, z_hi)` of a cell in the unwrapped chart.
    pub fn cell_bounds(&self, ia: usize, iz: usize) -> (f64, f64, f64, f64) {
        let dphi = TAU / self.n_azimuth as f64;
        let dz = 2.0 / self.n_z as f64;
        (
            ia as f64 * dphi,
            (ia + 1) as f64 * dphi,
            -1.0 + iz as f64 * dz,
            -1.0 + (iz + 1) as f64 * dz,
        )
    }

    /// Rejection sampling from the checkerboard: uniform on the sphere, keep
    /// points on "on" cells. Returns `n` points back to back (`n × 3`).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; 3 * n];
        for p in out.chunks_exact_mut(3) {
            self.sample_into(rng, p);
        }
        out
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        loop {
            SPHERE
                .uniform_sample_into(rng, out)
                .expect("the sphere has a uniform distribution");
            if self.is_on_cell(out) {
                return;
            }
        }
    }
}

const SPHERE: ManifoldKind = ManifoldKind::Sphere(3);

/// `(φ, z)` with `φ = atan2(y, x)` in `[0, 2π)` and `z` the normalized height.
pub fn unwrap(p: &[f64]) -> (f64, f64) {
    let phi = wrap_angle(libm::atan2(p[1], p[0]));
    let n = norm(p);
    let z = if n > 0.0 {
        (p[2] / n).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    (phi, z)
}

/// Inverse of [`unwrap`] on the unit sphere.
pub fn rewrap(phi: f64, z: f64) -> [f64; 3] {
    let r = libm::sqrt((1.0 - z * z).max(0.0));
    [r * libm::cos(phi), r * libm::sin(phi), z]
}

/// Source distribution of a variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prior {
    /// Uniform on `[-1, 1]^d`.
    Cube,
    /// Uniform on the data manifold.
    Manifold,
}

/// Writes one prior draw for `variant` into `out`.
pub fn sample_prior_into<R: Rng + ?Sized>(
    variant: Variant,
    kind: ManifoldKind,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    match variant.prior() {
        Prior::Cube => {
            for o in out.iter_mut() {
                *o = rng.random_range(-1.0..=1.0);
            }
            Ok(())
        }
        Prior::Manifold => kind.uniform_sample_into(rng, out),
    }
}

/// `n` prior draws for `variant`, back to back.
pub fn sample_prior<R: Rng + ?Sized>(
    variant: Variant,
    kind: ManifoldKind,
    rng: &mut R,
    n: usize,
) -> Result<Vec<f64>> {
    let d = kind.ambient_dim();
    let mut out = vec![0.0; d * n];
    for p in out.chunks_exact_mut(d) {
        sample_prior_into(variant, kind, rng, p)?;
    }
    Ok(out)
}
