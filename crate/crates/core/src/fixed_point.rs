//! Damped Picard iteration with λ-continuation, shared by the auxiliary
//! (inner) and the coupled (outer) homotopy solvers.

use log::{debug, trace};

use crate::mesh::{norm_lp_q, Trajectory};
use crate::phase_solver::{FixedPointConfig, IterationRecord, LambdaSummary};
use crate::{Error, Result};

/// Smallest damping factor before the iteration gives up.
pub(crate) const MIN_DAMPING: f64 = 1e-4;

/// Accepted steps in a row before a reduced damping factor is doubled again.
const RECOVERY_STREAK: usize = 3;

pub(crate) struct Outcome {
    pub solution: Trajectory,
    pub history: Vec<IterationRecord>,
    pub per_lambda: Vec<LambdaSummary>,
}

/// For each λ in `schedule`, iterates `w ← (1−ω) w + ω T(w, λ)` until
/// `‖w − T(w, λ)‖_{L^q(Q)} ≤ tol`, warm-starting each λ from the previous one.
///
/// A candidate whose residual exceeds the current one is rejected and `ω`
/// halved, so accepted residuals never increase within one λ.
pub(crate) fn continuation<F>(
    initial: Trajectory,
    schedule: &[f64],
    cfg: &FixedPointConfig,
    norm_exponent: f64,
    mut apply: F,
) -> Result<Outcome>
where
    F: FnMut(&Trajectory, f64) -> Result<Trajectory>,
{
    let mut history = Vec::new();
    let mut per_lambda = Vec::new();
    let mut w = initial;

    for &lambda in schedule {
        let mut omega = cfg.damping;
        let mut streak = 0;
        let mut iterations = 0;
        let mut image = apply(&w, lambda)?;
        let mut residual = norm_lp_q(&w.sub(&image)?, norm_exponent)?;
        history.push(IterationRecord { lambda, iter: 0, residual, omega, accepted: true });

        while residual > cfg.tolerance {
            if iterations >= cfg.max_iterations {
                return Err(Error::NonConvergence { lambda, iterations, residual, history: Box::new(history) });
            }
            let candidate = w.lincomb(1.0 - omega, &image, omega)?;
            let cand_image = apply(&candidate, lambda)?;
            let cand_residual = norm_lp_q(&candidate.sub(&cand_image)?, norm_exponent)?;
            iterations += 1;

            if cand_residual > residual {
                history.push(IterationRecord {
                    lambda,
                    iter: iterations,
                    residual: cand_residual,
                    omega,
                    accepted: false,
                });
                omega *= 0.5;
                streak = 0;
                debug!("lambda {lambda}: residual rose to {cand_residual:e}, damping -> {omega}");
                if omega < MIN_DAMPING {
                    return Err(Error::DampingUnderflow { lambda, omega, history: Box::new(history) });
                }
                continue;
            }

            history.push(IterationRecord { lambda, iter: iterations, residual: cand_residual, omega, accepted: true });
            trace!("lambda {lambda} iter {iterations}: residual {cand_residual:e}");
            w = candidate;
            image = cand_image;
            residual = cand_residual;
            streak += 1;
            if omega < cfg.damping && streak >= RECOVERY_STREAK {
                omega = (2.0 * omega).min(cfg.damping);
                streak = 0;
            }
        }

        per_lambda.push(LambdaSummary {
            lambda,
            iterations,
            residual,
            norm_phi_lpr: norm_lp_q(&image, norm_exponent)?,
        });
        w = image;
    }

    Ok(Outcome { solution: w, history, per_lambda })
}
