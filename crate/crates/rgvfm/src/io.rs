//! Comma-delimited files with a one-line header.

use std::path::Path;

use rgvfm_core::metrics::{EvalReport, Histogram};
use rgvfm_core::train::EpochStats;

use crate::error::{CliError, Result};

/// Writes `header` followed by `rows`.
pub fn write_table<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    w.write_record(header).map_err(CliError::csv(path))?;
    for r in rows {
        w.write_record(r).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Reads a numeric table, checking the header.
pub fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
    let found = r.headers().map_err(CliError::csv(path))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::format(
            path,
            format!("expected header {}", header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(CliError::csv(path))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| CliError::format(path, format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub const POINT_HEADER: [&str; 3] = ["x", "y", "z"];
pub const TRAJECTORY_HEADER: [&str; 6] = ["sample_id", "step", "t", "x", "y", "z"];
pub const LOSS_HEADER: [&str; 3] = ["epoch", "mean_loss", "antipodal_clamps"];
pub const RESIDUAL_HEADER: [&str; 2] = ["sample_id", "endpoint_residual"];
pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_lo", "bin_hi", "count"];
pub const REPORT_HEADER: [&str; 2] = ["metric", "value"];

fn point_row(p: &[f64]) -> Vec<String> {
    p.iter().map(f64::to_string).collect()
}

/// `n × 3` points as `x,y,z` rows.
pub fn write_points(path: &Path, points: &[f64]) -> Result<()> {
    write_table(path, &POINT_HEADER, points.chunks_exact(3).map(point_row))
}

pub fn read_points(path: &Path) -> Result<Vec<f64>> {
    Ok(read_table(path, &POINT_HEADER)?
        .into_iter()
        .flatten()
        .collect())
}

/// `n × (steps + 1) × 3` states with their times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n_samples: usize,
    pub steps: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
}

impl Trajectory {
    pub fn state(&self, sample: usize, step: usize) -> &[f64] {
        let i = (sample * (self.steps + 1) + step) * 3;
        &self.states[i..i + 3]
    }
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let rows = (0..traj.n_samples).flat_map(|i| {
        (0..=traj.steps).map(move |k| {
            let mut r = vec![i.to_string(), k.to_string(), traj.times[k].to_string()];
            r.extend(point_row(traj.state(i, k)));
            r
        })
    });
    write_table(path, &TRAJECTORY_HEADER, rows)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let rows = read_table(path, &TRAJECTORY_HEADER)?;
    let bad = |m: &str| CliError::format(path, m);
    let steps = rows
        .iter()
        .map(|r| r[1] as usize)
        .max()
        .ok_or_else(|| bad("empty trajectory"))?;
    if rows.len() % (steps + 1) != 0 {
        return Err(bad("rows do not form complete trajectories"));
    }
    let n_samples = rows.len() / (steps + 1);
    let mut times = vec![0.0; steps + 1];
    let mut states = Vec::with_capacity(rows.len() * 3);
    for (j, r) in rows.iter().enumerate() {
        let (i, k) = (j / (steps + 1), j % (steps + 1));
        if r[0] as usize != i || r[1] as usize != k {
            return Err(bad("trajectory rows out of order"));
        }
        times[k] = r[2];
        states.extend_from_slice(&r[3..6]);
    }
    Ok(Trajectory {
        n_samples,
        steps,
        times,
        states,
    })
}

pub fn write_loss_curve(path: &Path, history: &[EpochStats]) -> Result<()> {
    write_table(
        path,
        &LOSS_HEADER,
        history.iter().map(|s| {
            vec![
                s.epoch.to_string(),
                s.mean_loss.to_string(),
                s.antipodal_clamps.to_string(),
            ]
        }),
    )
}

pub fn read_loss_curve(path: &Path) -> Result<Vec<EpochStats>> {
    Ok(read_table(path, &LOSS_HEADER)?
        .into_iter()
        .map(|r| EpochStats {
            epoch: r[0] as usize,
            mean_loss: r[1],
            antipodal_clamps: r[2] as usize,
        })
        .collect())
}

pub fn write_residuals(path: &Path, residuals: &[f64]) -> Result<()> {
    write_table(
        path,
        &RESIDUAL_HEADER,
        residuals
            .iter()
            .enumerate()
            .map(|(i, r)| vec![i.to_string(), r.to_string()]),
    )
}

pub fn read_residuals(path: &Path) -> Result<Vec<f64>> {
    Ok(read_table(path, &RESIDUAL_HEADER)?
        .into_iter()
        .map(|r| r[1])
        .collect())
}

pub fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    write_table(
        path,
        &HISTOGRAM_HEADER,
        (0..h.bins()).map(|i| {
            let (lo, hi) = h.edges(i);
            vec![lo.to_string(), hi.to_string(), h.counts[i].to_string()]
        }),
    )
}

/// Scalar metrics of a report as `(name, value)` pairs.
pub fn report_rows(r: &EvalReport) -> Vec<(&'static str, String)> {
    let mut rows = vec![
        ("n_samples", r.n_samples.to_string()),
        ("norm_mean", r.norm_mean.to_string()),
        ("norm_std", r.norm_std.to_string()),
        ("on_cell_fraction", r.on_cell_fraction.to_string()),
        ("occupancy_l1", r.occupancy_l1.to_string()),
    ];
    if let Some(e) = r.endpoint_residual_mean {
        rows.push(("endpoint_residual_mean", e.to_string()));
    }
    rows
}

pub fn write_report(path: &Path, r: &EvalReport) -> Result<()> {
    write_table(
        path,
        &REPORT_HEADER,
        report_rows(r)
            .into_iter()
            .map(|(k, v)| vec![k.to_string(), v]),
    )
}

/// Reads a report written by [`write_report`] as `(name, value)` pairs.
pub fn read_report(path: &Path) -> Result<Vec<(String, f64)>> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(CliError::csv(path))?;
        let v = rec[1]
            .parse()
            .map_err(|_| CliError::format(path, format!("not a number: {:?}", &rec[1])))?;
        out.push((rec[0].to_string(), v));
    }
    Ok(out)
}
