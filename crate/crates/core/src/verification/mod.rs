//! Reference solutions and the acceptance harness: ODE reductions for
//! spatially constant data, manufactured solutions with convergence-order
//! fits, and the corpus suite.

pub mod mms;
pub mod ode;
pub mod suite;

use crate::coupled_solver::SystemConfig;
use crate::mesh::{Field, Trajectory};
use crate::{Error, Result};

pub use mms::{run_mms, ConvergenceReport, Ladder, LevelError, ManufacturedCase};
pub use ode::{integrate, OdeOptions};
pub use suite::{run_acceptance_suite, Bound, CorpusCase, CorpusSpec, SuiteRow};

fn constant_value(f: &Field, what: &str) -> Result<f64> {
    let v = f.values()[0];
    let spread = f.values().iter().map(|x| (x - v).abs()).fold(0.0, f64::max);
    if spread > 1e-14 * v.abs().max(1.0) {
        return Err(Error::NotConstant(format!("{what} varies by {spread:e} across the grid")));
    }
    Ok(v)
}

fn constant_series(t: &Trajectory, what: &str) -> Result<Vec<f64>> {
    t.frames().iter().enumerate().map(|(k, f)| constant_value(f, &format!("{what} at frame {k}"))).collect()
}

/// Integrates `u' + l φ' = f(t)`, `φ' = F(φ) + u + s(t)` for spatially
/// constant data and returns trajectories on the configuration's grid and time
/// slab. Sources are interpolated linearly between frames; `F` is sampled at the
/// first node.
pub fn ode_reduction_oracle(cfg: &SystemConfig) -> Result<(Trajectory, Trajectory)> {
    let u0 = constant_value(&cfg.u0, "u0")?;
    let phi0 = constant_value(&cfg.phi0, "phi0")?;
    let f = constant_series(&cfg.f, "f")?;
    let s = match &cfg.phase_source {
        Some(s) => constant_series(s, "phase source")?,
        None => vec![0.0; f.len()],
    };
    let dt = cfg.dt();
    let grid = cfg.f.grid();
    let x0 = grid.coordinates(0);
    let l = cfg.latent_heat;
    let nl = &cfg.nonlinearity;
    let interp = |series: &[f64], t: f64| {
        let pos = (t / dt).clamp(0.0, (series.len() - 1) as f64);
        let k = (pos.floor() as usize).min(series.len() - 2);
        let w = pos - k as f64;
        (1.0 - w) * series[k] + w * series[k + 1]
    };
    let times: Vec<f64> = (0..=cfg.steps()).map(|k| cfg.f.time(k)).collect();
    let states = ode::integrate(
        |t, y, dy| {
            dy[1] = nl.eval(&x0, t, y[1]) + y[0] + interp(&s, t);
            dy[0] = interp(&f, t) - l * dy[1];
        },
        &[u0, phi0],
        &times,
        &OdeOptions::default(),
    )?;
    let u = states.iter().map(|y| Field::constant(grid, y[0])).collect();
    let phi = states.iter().map(|y| Field::constant(grid, y[1])).collect();
    Ok((Trajectory::new(grid, dt, u)?, Trajectory::new(grid, dt, phi)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use crate::nonlinearity::{builtin_double_well, builtin_linear, builtin_zero};
    use std::sync::Arc;

    fn cfg(nl: crate::NonlinearityDescriptor, u0: f64, phi0: f64) -> SystemConfig {
        let grid = Arc::new(Grid::unit_interval(4).unwrap());
        SystemConfig::new(
            1.0,
            Field::constant(&grid, u0),
            Field::constant(&grid, phi0),
            Trajectory::zeros(&grid, 0.01, 100).unwrap(),
            nl,
        )
    }

    #[test]
    fn linear_exchange_closed_form() {
        let (u, phi) = ode_reduction_oracle(&cfg(builtin_zero(), 1.0, 0.0)).unwrap();
        assert!((u.last().values()[0] - (-1f64).exp()).abs() < 1e-9);
        assert!((phi.last().values()[0] - (1.0 - (-1f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn linear_two_by_two_closed_form() {
        // u' = −φ', φ' = −φ + u: u + φ = c is conserved, so φ' = c − 2φ.
        let (u0, p0) = (0.3, 0.7);
        let (u, phi) = ode_reduction_oracle(&cfg(builtin_linear(-1.0), u0, p0)).unwrap();
        let c: f64 = u0 + p0;
        for k in [0, 37, 100] {
            let t = k as f64 * 0.01;
            let exact = c / 2.0 + (p0 - c / 2.0) * (-2.0 * t).exp();
            assert!((phi.frame(k).values()[0] - exact).abs() < 1e-9);
            assert!((u.frame(k).values()[0] - (c - exact)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_data_and_rejection() {
        let (u, phi) = ode_reduction_oracle(&cfg(builtin_double_well(), 0.0, 0.0)).unwrap();
        assert_eq!(u.max_abs() + phi.max_abs(), 0.0);
        let mut bad = cfg(builtin_zero(), 1.0, 0.0);
        bad.phi0 = Field::from_fn(bad.f.grid(), |x| x[0]).unwrap();
        assert!(matches!(ode_reduction_oracle(&bad), Err(Error::NotConstant(_))));
    }
}
