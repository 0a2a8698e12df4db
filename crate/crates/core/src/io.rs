//! CSV snapshots of trajectories and the JSON run manifest.
//!
//! A snapshot has the header `t,x[,y[,z]],value` and one row per node per
//! frame, frames in time order and nodes in row-major order. Floats are written
//! with the shortest representation that parses back to the same value.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mesh::{Field, Grid, Trajectory};
use crate::{Error, Result};

const AXES: [&str; 3] = ["x", "y", "z"];

/// Shortest round-trip representation; exponent form for very small or large
/// magnitudes.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    let grid = traj.grid();
    let mut header = vec!["t"];
    header.extend(&AXES[..grid.dim()]);
    header.push("value");
    writeln!(out, "{}", header.join(","))?;
    let coords: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.coordinates(i)).collect();
    for (k, frame) in traj.frames().iter().enumerate() {
        let t = traj.time(k);
        for (x, v) in coords.iter().zip(frame.values()) {
            write!(out, "{}", format_float(t))?;
            for xi in x {
                write!(out, ",{}", format_float(*xi))?;
            }
            writeln!(out, ",{}", format_float(*v))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parses a snapshot written by [`write_trajectory_csv`] onto `grid`.
pub fn read_trajectory_csv<R: BufRead>(input: R, grid: &Arc<Grid>) -> Result<Trajectory> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Snapshot("empty file".into()))??;
    let expected = grid.dim() + 2;
    if header.split(',').count() != expected {
        return Err(Error::Snapshot(format!("header '{header}' does not match a {}-d grid", grid.dim())));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Snapshot(format!("line {}: {e}", lineno + 2)))?;
        if cols.len() != expected {
            return Err(Error::Snapshot(format!("line {}: expected {expected} columns", lineno + 2)));
        }
        if values.len() % grid.len() == 0 {
            times.push(cols[0]);
        }
        values.push(cols[expected - 1]);
    }
    if values.len() % grid.len() != 0 || times.len() < 2 {
        return Err(Error::Snapshot(format!(
            "{} values do not form whole frames of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    let dt = times[1] - times[0];
    let frames = values.chunks(grid.len()).map(|c| Field::from_values(grid, c.to_vec())).collect::<Result<Vec<_>>>()?;
    Trajectory::new(grid, dt, frames)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name =
        path.file_name().ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_trajectory_file(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut buf = Vec::new();
    write_trajectory_csv(traj, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn read_trajectory_file(path: &Path, grid: &Arc<Grid>) -> Result<Trajectory> {
    read_trajectory_csv(std::io::BufReader::new(fs::File::open(path)?), grid)
}

/// Per-frame norms stored alongside a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameNorms {
    pub t: Vec<f64>,
    pub u_l2: Vec<f64>,
    pub phi_l2: Vec<f64>,
    pub u_mean: Vec<f64>,
    pub phi_mean: Vec<f64>,
    /// `∫(u + l φ)`.
    pub conserved: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub method: String,
    pub iterations: usize,
    pub residual: Option<f64>,
    pub ledgers: serde_json::Value,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}
