//! Sample statistics: norms, checkerboard occupancy, endpoint residuals.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::CheckerboardGrid;
use crate::error::{Error, Result};
use crate::linalg::norm;

pub const HISTOGRAM_BINS: usize = 50;
pub const HISTOGRAM_LO: f64 = 0.5;
pub const HISTOGRAM_HI: f64 = 1.5;

/// Fixed-width histogram. Values outside `[lo, hi)` are counted in the
/// first or last bin, so the counts always sum to the number of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(
        lo: f64,
        hi: f64,
        bins: usize,
        values: impl IntoIterator<Item = f64>,
    ) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::InvalidArgument(
                "histogram needs bins >= 1 and hi > lo",
            ));
        }
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for v in values {
            let b = if v.is_nan() {
                bins - 1
            } else {
                (libm::floor((v - lo) / width).max(0.0) as usize).min(bins - 1)
            };
            counts[b] += 1;
        }
        Ok(Self { lo, hi, counts })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// `(lower, upper)` edge of bin `i`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.bins() as f64;
        (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, libm::sqrt(var)))
}

/// Euclidean norms of `n × 3` points.
pub fn norms(points: &[f64]) -> Vec<f64> {
    points.chunks_exact(3).map(norm).collect()
}

/// Fraction of points (binned by direction) that fall in on-cells.
pub fn on_cell_fraction(grid: &CheckerboardGrid, points: &[f64]) -> Result<f64> {
    let n = points.len() / 3;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let on = points
        .chunks_exact(3)
        .filter(|p| grid.is_on_cell(p))
        .count();
    Ok(on as f64 / n as f64)
}

/// Counts per flat cell id.
pub fn cell_counts(grid: &CheckerboardGrid, points: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; grid.n_cells()];
    for p in points.chunks_exact(3) {
        counts[grid.cell_id(p)] += 1;
    }
    counts
}

/// L1 distance between the empirical cell distribution and the target,
/// which is uniform over on-cells and zero elsewhere. Ranges over `[0, 2]`.
pub fn occupancy_l1(grid: &CheckerboardGrid, points: &[f64]) -> Result<f64> {
    let n = points.len() / 3;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let counts = cell_counts(grid, points);
    let target = 1.0 / grid.n_on_cells() as f64;
    let mut l1 = 0.0;
    for iz in 0..grid.n_z() {
        for ia in 0..grid.n_azimuth() {
            let p = counts[iz * grid.n_azimuth() + ia] as f64 / n as f64;
            let q = if grid.is_on_index(ia, iz) {
                target
            } else {
                0.0
            };
            l1 += (p - q).abs();
        }
    }
    Ok(l1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_samples: usize,
    pub norm_mean: f64,
    pub norm_std: f64,
    pub norm_histogram: Histogram,
    pub on_cell_fraction: f64,
    pub occupancy_l1: f64,
    /// Variational variants only.
    pub endpoint_residual_mean: Option<f64>,
}

/// Statistics of `n × 3` samples. Non-finite residuals are skipped when
/// averaging.
pub fn evaluate(
    grid: &CheckerboardGrid,
    samples: &[f64],
    endpoint_residuals: Option<&[f64]>,
) -> Result<EvalReport> {
    if samples.len() < 3 {
        return Err(Error::EmptyInput);
    }
    if samples.len() % 3 != 0 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: samples.len() % 3,
        });
    }
    let ns = norms(samples);
    let (norm_mean, norm_std) = mean_std(&ns)?;
    let finite: Option<Vec<f64>> =
        endpoint_residuals.map(|r| r.iter().copied().filter(|v| v.is_finite()).collect());
    Ok(EvalReport {
        n_samples: ns.len(),
        norm_mean,
        norm_std,
        norm_histogram: Histogram::new(
            HISTOGRAM_LO,
            HISTOGRAM_HI,
            HISTOGRAM_BINS,
            ns.iter().copied(),
        )?,
        on_cell_fraction: on_cell_fraction(grid, samples)?,
        occupancy_l1: occupancy_l1(grid, samples)?,
        endpoint_residual_mean: match finite {
            Some(v) if !v.is_empty() => Some(mean_std(&v)?.0),
            _ => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn unit_samples() {
        let g = CheckerboardGrid::default();
        let pts = g.sample(&mut seeded(2), 4000);
        let r = evaluate(&g, &pts, None).unwrap();
        assert!((r.norm_mean - 1.0).abs() < 1e-12);
        assert!(r.norm_std < 1e-12);
        assert_eq!(r.on_cell_fraction, 1.0);
        assert_eq!(r.norm_histogram.total(), 4000);
        // multinomial over 16 on-cells: E|p̂−q| summed ≈ 16·sqrt(2q/(πn))
        assert!(r.occupancy_l1 < 0.1, "{}", r.occupancy_l1);
    }

    #[test]
    fn histogram_clamps_outliers() {
        let h = Histogram::new(0.5, 1.5, 50, [0.0, 0.5, 1.0, 1.4999, 1.5, 9.0, f64::NAN]).unwrap();
        assert_eq!(h.total(), 7);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[25], 1);
        assert_eq!(h.counts[49], 4);
        let (lo, hi) = h.edges(25);
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 1.02).abs() < 1e-15);
    }

    #[test]
    fn occupancy_extremes() {
        let g = CheckerboardGrid::default();
        // all mass in one off cell: 1 (off cell) + 1 (missing on mass)
        let p = crate::data::rewrap(1.5 * core::f64::consts::TAU / 8.0, 0.25);
        assert!(!g.is_on_cell(&p));
        assert!((occupancy_l1(&g, &p).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(on_cell_fraction(&g, &p).unwrap(), 0.0);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(mean_std(&[]), Err(Error::EmptyInput));
        assert_eq!(
            evaluate(&CheckerboardGrid::default(), &[], None),
            Err(Error::EmptyInput)
        );
    }
}
