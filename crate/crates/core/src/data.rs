//! Serializable descriptions of initial data and sources.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mesh::{Field, Grid, Trajectory};
use crate::{Error, Result};

fn cosine_mode(grid: &Grid, modes: &[u32], x: &[f64]) -> f64 {
    x.iter()
        .zip(grid.extents())
        .zip(modes.iter().chain(std::iter::repeat(&0)))
        .map(|((xi, li), k)| (*k as f64 * PI * xi / li).cos())
        .product()
}

/// Initial data on the grid. Cosine modes with integer indices satisfy the
/// Neumann condition exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `mean + amplitude · Π_i cos(k_i π x_i / L_i)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        modes: Vec<u32>,
    },
    /// Explicit nodal values in row-major order.
    Values {
        values: Vec<f64>,
    },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Constant { value: 0.0 }
    }
}

impl FieldSpec {
    pub fn to_field(&self, grid: &Arc<Grid>) -> Result<Field> {
        match self {
            FieldSpec::Constant { value } => Field::from_fn(grid, |_| *value),
            FieldSpec::Cosine { mean, amplitude, modes } => {
                check_modes(grid, modes)?;
                Field::from_fn(grid, |x| mean + amplitude * cosine_mode(grid, modes, x))
            }
            FieldSpec::Values { values } => Field::from_values(grid, values.clone()),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            FieldSpec::Constant { .. } => true,
            FieldSpec::Cosine { amplitude, modes, .. } => *amplitude == 0.0 || modes.iter().all(|k| *k == 0),
            FieldSpec::Values { values } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

fn check_modes(grid: &Grid, modes: &[u32]) -> Result<()> {
    if modes.len() > grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "{} cosine modes given for a {}-dimensional grid",
            modes.len(),
            grid.dim()
        )));
    }
    Ok(())
}

/// Space-time sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude · e^{−rate t} · Π_i cos(k_i π x_i / L_i)`.
    CosineDecay {
        amplitude: f64,
        rate: f64,
        modes: Vec<u32>,
    },
}

impl SourceSpec {
    pub fn to_trajectory(&self, grid: &Arc<Grid>, dt: f64, steps: usize) -> Result<Trajectory> {
        match self {
            SourceSpec::Zero => Trajectory::zeros(grid, dt, steps),
            SourceSpec::Constant { value } => Trajectory::from_fn(grid, dt, steps, |_, _| *value),
            SourceSpec::CosineDecay { amplitude, rate, modes } => {
                check_modes(grid, modes)?;
                Trajectory::from_fn(grid, dt, steps, |x, t| amplitude * (-rate * t).exp() * cosine_mode(grid, modes, x))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SourceSpec::Zero => true,
            SourceSpec::Constant { value } => *value == 0.0,
            SourceSpec::CosineDecay { amplitude, .. } => *amplitude == 0.0,
        }
    }

    /// Constant in space at every time.
    pub fn is_spatially_constant(&self) -> bool {
        match self {
            SourceSpec::Zero | SourceSpec::Constant { .. } => true,
            SourceSpec::CosineDecay { amplitude, modes, .. } => *amplitude == 0.0 || modes.iter().all(|k| *k == 0),
        }
    }
}
