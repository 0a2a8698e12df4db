//! Manufactured solutions for the coupled system and convergence-order fits.
//!
//! The built-in case is a separable cosine mode
//!
//! ```text
//! φ*(x,t) = φ̄ + a_φ e^{−κt} C(x),   u*(x,t) = a_u e^{−κt} C(x),
//! C(x) = Π_i cos(k_i π x_i / L_i)
//! ```
//!
//! with sources `f` and `s_φ` chosen so that `(u*, φ*)` solves the system.
//! For time ladders the Laplacian eigenvalue in the sources is replaced by the
//! eigenvalue of the discrete Laplacian, which removes the spatial error.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coupled_solver::{solve_system, Method, SystemConfig};
use crate::linear_parabolic::ThetaScheme;
use crate::mesh::{norm_lp_q, Field, Grid, Trajectory};
use crate::nonlinearity::NonlinearityDescriptor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedCase {
    pub extents: Vec<f64>,
    pub modes: Vec<u32>,
    pub phi_mean: f64,
    pub phi_amplitude: f64,
    pub u_amplitude: f64,
    pub decay: f64,
    pub latent_heat: f64,
    pub t_end: f64,
}

impl Default for ManufacturedCase {
    fn default() -> Self {
        Self {
            extents: vec![1.0],
            modes: vec![1],
            phi_mean: 0.2,
            phi_amplitude: 0.5,
            u_amplitude: 0.3,
            decay: 1.0,
            latent_heat: 1.0,
            t_end: 0.5,
        }
    }
}

impl ManufacturedCase {
    fn shape(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.extents).zip(&self.modes).map(|((xi, li), k)| (*k as f64 * PI * xi / li).cos()).product()
    }

    /// `Σ (k_i π / L_i)²`.
    pub fn eigenvalue(&self) -> f64 {
        self.extents.iter().zip(&self.modes).map(|(l, k)| (*k as f64 * PI / l).powi(2)).sum()
    }

    /// Eigenvalue of the discrete Neumann Laplacian for the same mode.
    pub fn discrete_eigenvalue(&self, grid: &Grid) -> f64 {
        self.extents
            .iter()
            .zip(&self.modes)
            .zip(grid.spacing())
            .map(|((l, k), h)| (2.0 - 2.0 * (*k as f64 * PI * h / l).cos()) / (h * h))
            .sum()
    }

    pub fn phi_exact(&self, x: &[f64], t: f64) -> f64 {
        self.phi_mean + self.phi_amplitude * (-self.decay * t).exp() * self.shape(x)
    }

    pub fn u_exact(&self, x: &[f64], t: f64) -> f64 {
        self.u_amplitude * (-self.decay * t).exp() * self.shape(x)
    }

    pub fn grid(&self, nodes: usize) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::new(&self.extents, &vec![nodes; self.extents.len()])?))
    }

    /// System configuration whose exact solution is `(u*, φ*)` up to
    /// discretization error. `eigenvalue` is the value used for `−Δ` of the mode.
    pub fn system(
        &self,
        grid: &Arc<Grid>,
        steps: usize,
        nl: &NonlinearityDescriptor,
        eigenvalue: f64,
        scheme: ThetaScheme,
    ) -> Result<SystemConfig> {
        if self.modes.len() != self.extents.len() {
            return Err(Error::InvalidParameter("one mode per axis required".into()));
        }
        let dt = self.t_end / steps as f64;
        let (k, l) = (self.decay, self.latent_heat);
        let (au, ap) = (self.u_amplitude, self.phi_amplitude);
        let f = Trajectory::from_fn(grid, dt, steps, |x, t| {
            (-k * t).exp() * self.shape(x) * (-k * au - l * k * ap + eigenvalue * au)
        })?;
        let s = Trajectory::from_fn(grid, dt, steps, |x, t| {
            (-k * t).exp() * self.shape(x) * (-k * ap + eigenvalue * ap - au) - nl.eval(x, t, self.phi_exact(x, t))
        })?;
        let mut cfg = SystemConfig::new(
            l,
            Field::from_fn(grid, |x| self.u_exact(x, 0.0))?,
            Field::from_fn(grid, |x| self.phi_exact(x, 0.0))?,
            f,
            nl.clone(),
        );
        cfg.phase_source = Some(s);
        cfg.scheme = scheme;
        Ok(cfg)
    }

    pub fn exact(&self, grid: &Arc<Grid>, steps: usize) -> Result<(Trajectory, Trajectory)> {
        let dt = self.t_end / steps as f64;
        Ok((
            Trajectory::from_fn(grid, dt, steps, |x, t| self.u_exact(x, t))?,
            Trajectory::from_fn(grid, dt, steps, |x, t| self.phi_exact(x, t))?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum Ladder {
    /// Refine `h` at fixed `dt`, with continuous sources.
    Space { nodes: Vec<usize>, steps: usize },
    /// Refine `dt` on a fixed grid, with discrete-exact sources.
    Time { nodes: usize, steps: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub h: f64,
    pub dt: f64,
    /// `‖u − u*‖ + ‖φ − φ*‖` in `L²(Q)`.
    pub l2q_error: f64,
    /// Max nodal error of both fields at the final time.
    pub linf_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub axis: String,
    pub theta: f64,
    pub levels: Vec<LevelError>,
    /// Least-squares slope of `log error` against `log h` (or `log dt`).
    pub order: Option<f64>,
    /// Root-mean-square residual of the fit.
    pub fit_residual: Option<f64>,
    pub monotone: bool,
    /// Set when a level failed; `levels` then holds the completed ones.
    pub failure: Option<String>,
}

/// Least-squares slope and RMS residual of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Some((slope, (rss / n as f64).sqrt()))
}

fn level_error(case: &ManufacturedCase, cfg: &SystemConfig, method: Method, steps: usize) -> Result<LevelError> {
    let pair = solve_system(cfg, method)?;
    let grid = cfg.f.grid();
    let (ue, pe) = case.exact(grid, steps)?;
    let du = pair.u.sub(&ue)?;
    let dp = pair.phi.sub(&pe)?;
    Ok(LevelError {
        h: grid.spacing()[0],
        dt: cfg.dt(),
        l2q_error: norm_lp_q(&du, 2.0)? + norm_lp_q(&dp, 2.0)?,
        linf_final: du.last().max_abs().max(dp.last().max_abs()),
    })
}

/// Solves the case on every level of `ladder` and fits the order.
pub fn run_mms(
    case: &ManufacturedCase,
    nl: &NonlinearityDescriptor,
    method: Method,
    ladder: &Ladder,
    scheme: ThetaScheme,
) -> Result<ConvergenceReport> {
    let levels: Vec<(Arc<Grid>, usize, bool)> = match ladder {
        Ladder::Space { nodes, steps } => {
            nodes.iter().map(|&n| Ok((case.grid(n)?, *steps, false))).collect::<Result<_>>()?
        }
        Ladder::Time { nodes, steps } => {
            let grid = case.grid(*nodes)?;
            steps.iter().map(|&s| (grid.clone(), s, true)).collect()
        }
    };
    if levels.len() < 3 {
        return Err(Error::InvalidParameter("a ladder needs at least 3 levels".into()));
    }
    let mut done = Vec::new();
    let mut failure = None;
    for (grid, steps, discrete) in levels {
        let eig = if discrete { case.discrete_eigenvalue(&grid) } else { case.eigenvalue() };
        match case.system(&grid, steps, nl, eig, scheme).and_then(|cfg| level_error(case, &cfg, method, steps)) {
            Ok(e) => done.push(e),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let (axis, xs): (&str, Vec<f64>) = match ladder {
        Ladder::Space { .. } => ("space", done.iter().map(|l| l.h.ln()).collect()),
        Ladder::Time { .. } => ("time", done.iter().map(|l| l.dt.ln()).collect()),
    };
    let ys: Vec<f64> = done.iter().map(|l| l.l2q_error.ln()).collect();
    let fit = if failure.is_none() { fit_slope(&xs, &ys) } else { None };
    Ok(ConvergenceReport {
        axis: axis.to_string(),
        theta: scheme.theta,
        monotone: done.windows(2).all(|w| w[1].l2q_error < w[0].l2q_error),
        levels: done,
        order: fit.map(|f| f.0),
        fit_residual: fit.map(|f| f.1),
        failure,
    })
}
