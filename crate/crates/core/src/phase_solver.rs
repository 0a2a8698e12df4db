//! Auxiliary semilinear problem `φ_t − Δφ = F(x,t,φ) + g`, `∂φ/∂ν = 0`,
//! `φ(0) = φ₀`.
//!
//! Two solvers: the homotopy path iterates the frozen-coefficient operator
//! `L(w, λ)` (solution of `φ_t − Δφ = λ(F(w) + g)`) with damping and
//! λ-continuation, and the stepping path treats `Δ` implicitly and `F`
//! explicitly. Monitors measure the energy inequality and the Lipschitz
//! dependence on the data.

use serde::{Deserialize, Serialize};

use crate::fixed_point;
use crate::linear_parabolic::{
    initial_data_surrogate, solve_with_interval_sources, step_with_source, ThetaScheme, DATA_NORM_FLOOR,
};
use crate::mesh::{gradient_energy, norm_lp_omega, norm_lp_q, Field, Trajectory};
use crate::nonlinearity::{estimate_d0, NonlinearityDescriptor};
use crate::{Error, Result};

/// Explicit evaluations of `|F|` above this reject the step.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// Ascending λ values from 0 to 1.
    pub schedule: Vec<f64>,
    /// Initial damping factor ω ∈ (0, 1].
    pub damping: f64,
    /// Residual tolerance in the discrete iteration norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub p: f64,
    pub r: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            schedule: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            damping: 1.0,
            tolerance: 1e-8,
            max_iterations: 200,
            p: 2.0,
            r: 3.0,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if s.first() != Some(&0.0) || s.last() != Some(&1.0) {
            return Err(Error::InvalidParameter("lambda schedule must start at 0 and end at 1".into()));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("lambda schedule must be strictly increasing".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be positive".into()));
        }
        if !(self.p >= 1.0 && self.r >= 1.0) {
            return Err(Error::InvalidParameter(format!("need p, r >= 1, got p = {}, r = {}", self.p, self.r)));
        }
        Ok(())
    }

    /// Exponent `p·r` of the iteration norm `L^{pr}(Q)`.
    pub fn iteration_exponent(&self) -> f64 {
        self.p * self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub lambda: f64,
    pub iter: usize,
    pub residual: f64,
    pub omega: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
    pub norm_phi_lpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyEntry {
    /// `½‖φ(t_k)‖² + ∫_{Q_{t_k}} |∇φ|²` per frame.
    pub lhs: Vec<f64>,
    pub rhs: f64,
    pub d0: f64,
    pub c0: f64,
    /// `min_k (rhs − lhs_k)`.
    pub worst_margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityEntry {
    pub solution_difference: f64,
    pub data_difference: f64,
    pub ratio: Option<f64>,
}

/// Measurements gathered around an auxiliary solve.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AprioriLedger {
    pub history: Vec<IterationRecord>,
    pub per_lambda: Vec<LambdaSummary>,
    pub converged: bool,
    /// `‖φ‖_{L^{pr}(Q)}` of the returned solution.
    pub norm_phi_lpr: f64,
    /// `1 + ‖φ₀‖ + ‖g‖_{L^p(Q)}` in discrete surrogates.
    pub data_norm: f64,
    /// `norm_phi_lpr / data_norm`, the empirical constant of the a-priori bound.
    pub bound_ratio: f64,
    pub energy: Option<EnergyEntry>,
    pub stability: Option<StabilityEntry>,
}

/// One JSON row of the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerJsonRow {
    pub lambda: Option<f64>,
    pub iter: Option<usize>,
    pub residual: Option<f64>,
    #[serde(rename = "norm_phi_Lpr")]
    pub norm_phi_lpr: Option<f64>,
    pub energy_lhs: Option<f64>,
    pub energy_rhs: Option<f64>,
    pub stability_ratio: Option<f64>,
}

impl AprioriLedger {
    /// Accepted iterations, then one summary row with the monitors.
    pub fn rows(&self) -> Vec<LedgerJsonRow> {
        let mut rows: Vec<LedgerJsonRow> = self
            .history
            .iter()
            .filter(|h| h.accepted)
            .map(|h| LedgerJsonRow {
                lambda: Some(h.lambda),
                iter: Some(h.iter),
                residual: Some(h.residual),
                norm_phi_lpr: None,
                energy_lhs: None,
                energy_rhs: None,
                stability_ratio: None,
            })
            .collect();
        rows.push(LedgerJsonRow {
            lambda: self.per_lambda.last().map(|s| s.lambda),
            iter: self.per_lambda.last().map(|s| s.iterations),
            residual: self.per_lambda.last().map(|s| s.residual),
            norm_phi_lpr: Some(self.norm_phi_lpr),
            energy_lhs: self.energy.as_ref().map(|e| e.lhs.iter().cloned().fold(0.0, f64::max)),
            energy_rhs: self.energy.as_ref().map(|e| e.rhs),
            stability_ratio: self.stability.and_then(|s| s.ratio),
        });
        rows
    }
}

/// Where the fixed-point iteration starts.
#[derive(Debug, Clone)]
pub enum InitialIterate {
    Zero,
    /// Start the λ-ramp from this trajectory.
    Given(Trajectory),
    /// Iterate at λ = 1 directly from this trajectory, skipping the ramp.
    Direct(Trajectory),
}

fn check_slab(g: &Trajectory, phi0: &Field) -> Result<()> {
    phi0.ensure_same_grid(g.frame(0))
}

/// `L(w, λ)`: solution of `φ_t − Δφ = λ(F(x,t,w) + g)` with `φ(0) = φ₀`.
pub fn apply_l(
    w: &Trajectory,
    lambda: f64,
    g: &Trajectory,
    phi0: &Field,
    nl: &NonlinearityDescriptor,
    scheme: &ThetaScheme,
) -> Result<Trajectory> {
    w.ensure_compatible(g)?;
    check_slab(g, phi0)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let n = phi0.len();
    let th = scheme.theta;
    let rhs_frames: Vec<Vec<f64>> = if lambda == 0.0 {
        vec![vec![0.0; n]; w.steps() + 1]
    } else {
        w.frames()
            .iter()
            .zip(g.frames())
            .enumerate()
            .map(|(k, (wk, gk))| {
                let fk = nl.eval_field(wk, w.time(k))?;
                Ok(fk.values().iter().zip(gk.values()).map(|(f, g)| lambda * (f + g)).collect())
            })
            .collect::<Result<Vec<_>>>()?
    };
    let sources: Vec<Vec<f64>> =
        rhs_frames.windows(2).map(|r| r[0].iter().zip(&r[1]).map(|(a, b)| th * b + (1.0 - th) * a).collect()).collect();
    solve_with_interval_sources(phi0, &sources, w.dt(), scheme)
}

/// Homotopy solve from `w⁰ = 0`.
pub fn solve_auxiliary_fixed_point(
    g: &Trajectory,
    phi0: &Field,
    nl: &NonlinearityDescriptor,
    cfg: &FixedPointConfig,
    scheme: &ThetaScheme,
) -> Result<(Trajectory, AprioriLedger)> {
    solve_auxiliary_fixed_point_from(g, phi0, nl, cfg, scheme, InitialIterate::Zero)
}

pub fn solve_auxiliary_fixed_point_from(
    g: &Trajectory,
    phi0: &Field,
    nl: &NonlinearityDescriptor,
    cfg: &FixedPointConfig,
    scheme: &ThetaScheme,
    start: InitialIterate,
) -> Result<(Trajectory, AprioriLedger)> {
    cfg.validate()?;
    scheme.validate()?;
    check_slab(g, phi0)?;
    let direct = [1.0];
    let (initial, schedule): (Trajectory, &[f64]) = match start {
        InitialIterate::Zero => (Trajectory::zeros(g.grid(), g.dt(), g.steps())?, &cfg.schedule),
        InitialIterate::Given(w) => (w, &cfg.schedule),
        InitialIterate::Direct(w) => (w, &direct),
    };
    initial.ensure_compatible(g)?;

    let q = cfg.iteration_exponent();
    let outcome =
        fixed_point::continuation(initial, schedule, cfg, q, |w, lambda| apply_l(w, lambda, g, phi0, nl, scheme))?;

    let norm_phi_lpr = norm_lp_q(&outcome.solution, q)?;
    let data_norm = 1.0 + initial_data_surrogate(phi0, cfg.p)? + norm_lp_q(g, cfg.p)?;
    let ledger = AprioriLedger {
        history: outcome.history,
        per_lambda: outcome.per_lambda,
        converged: true,
        norm_phi_lpr,
        data_norm,
        bound_ratio: norm_phi_lpr / data_norm,
        energy: None,
        stability: None,
    };
    Ok((outcome.solution, ledger))
}

fn guarded_eval(nl: &NonlinearityDescriptor, phi: &Field, t: f64, step: usize) -> Result<Field> {
    let f = nl.eval_field(phi, t).map_err(|e| match e {
        Error::Overflow { .. } => Error::BlowUp { step, value: f64::INFINITY },
        other => other,
    })?;
    let peak = f.max_abs();
    if peak > BLOW_UP_THRESHOLD {
        return Err(Error::BlowUp { step, value: peak });
    }
    Ok(f)
}

/// Semi-implicit stepping: `Δ` at level θ, `F` from frame `k`.
pub fn solve_auxiliary_stepping(
    g: &Trajectory,
    phi0: &Field,
    nl: &NonlinearityDescriptor,
    scheme: &ThetaScheme,
) -> Result<Trajectory> {
    solve_auxiliary_stepping_with(g, phi0, nl, scheme, 0)
}

/// As [`solve_auxiliary_stepping`], followed by `corrector_sweeps` re-solves
/// per step with `F` θ-averaged between the old frame and the latest iterate.
pub fn solve_auxiliary_stepping_with(
    g: &Trajectory,
    phi0: &Field,
    nl: &NonlinearityDescriptor,
    scheme: &ThetaScheme,
    corrector_sweeps: usize,
) -> Result<Trajectory> {
    check_slab(g, phi0)?;
    scheme.validate()?;
    let th = scheme.theta;
    let dt = g.dt();
    let mut frames = Vec::with_capacity(g.steps() + 1);
    frames.push(phi0.clone());
    for k in 0..g.steps() {
        let phi = &frames[k];
        let f_now = guarded_eval(nl, phi, g.time(k), k)?;
        let (g0, g1) = (g.frame(k).values(), g.frame(k + 1).values());
        let src: Vec<f64> =
            f_now.values().iter().zip(g0.iter().zip(g1)).map(|(f, (a, b))| f + th * b + (1.0 - th) * a).collect();
        let mut next = step_with_source(phi, &src, dt, scheme)?;
        for _ in 0..corrector_sweeps {
            let f_next = guarded_eval(nl, &next, g.time(k + 1), k)?;
            let src: Vec<f64> = f_now
                .values()
                .iter()
                .zip(f_next.values())
                .zip(g0.iter().zip(g1))
                .map(|((fa, fb), (a, b))| th * (fb + b) + (1.0 - th) * (fa + a))
                .collect();
            next = step_with_source(phi, &src, dt, scheme)?;
        }
        frames.push(next);
    }
    Trajectory::new(phi0.grid(), dt, frames)
}

/// Sampling box and count used to estimate `d₀` for the energy bound.
fn d0_for(nl: &NonlinearityDescriptor, phi: &Trajectory) -> Result<f64> {
    let sampling_box = f64::max(10.0, 2.0 * phi.max_abs());
    Ok(estimate_d0(nl, sampling_box, 4000)?.value.max(0.0))
}

/// Checks `½‖φ(t)‖² + ∫_{Q_t}|∇φ|² ≤ C₀(1 + ‖φ₀‖² + ‖g‖²)` at every frame, with
/// `C₀ = e^{2 d₀ T}(1 + d₀ T)` for `g ≡ 0` and `e^{(2 d₀ + 1) T}(1 + d₀ T)`
/// otherwise (the extra factor absorbs the Young bound on `∫ g φ`).
pub fn measure_energy_inequality(
    phi: &Trajectory,
    g: &Trajectory,
    phi0: &Field,
    nl: &NonlinearityDescriptor,
) -> Result<EnergyEntry> {
    phi.ensure_compatible(g)?;
    let d0 = d0_for(nl, phi)?;
    let t_end = phi.final_time();
    let g_norm = norm_lp_q(g, 2.0)?;
    let young = if g.max_abs() > 0.0 { 1.0 } else { 0.0 };
    let c0 = ((2.0 * d0 + young) * t_end).exp() * (1.0 + d0 * t_end);
    let rhs = c0 * (1.0 + norm_lp_omega(phi0, 2.0)?.powi(2) + g_norm * g_norm);

    let dt = phi.dt();
    let mut gradient_integral = 0.0;
    let mut prev = None;
    let mut lhs = Vec::with_capacity(phi.frames().len());
    for frame in phi.frames() {
        let e = gradient_energy(frame);
        if let Some(p) = prev {
            gradient_integral += 0.5 * dt * (p + e);
        }
        prev = Some(e);
        lhs.push(0.5 * norm_lp_omega(frame, 2.0)?.powi(2) + gradient_integral);
    }
    let worst_margin = lhs.iter().map(|l| rhs - l).fold(f64::INFINITY, f64::min);
    Ok(EnergyEntry { lhs, rhs, d0, c0, worst_margin, holds: worst_margin >= 0.0 })
}

/// Data-difference norm `‖Δφ₀‖ + ‖Δg‖_{L^p(Q)}` in discrete surrogates.
fn data_difference(phi0_a: &Field, g_a: &Trajectory, phi0_b: &Field, g_b: &Trajectory, p: f64) -> Result<f64> {
    Ok(initial_data_surrogate(&phi0_a.sub(phi0_b)?, p)? + norm_lp_q(&g_a.sub(g_b)?, p)?)
}

/// Solves with two data sets and records `‖φ₁ − φ₂‖_{L^p(Q)}` against the data
/// difference.
#[allow(clippy::too_many_arguments)]
pub fn measure_stability(
    phi0_a: &Field,
    g_a: &Trajectory,
    phi0_b: &Field,
    g_b: &Trajectory,
    nl: &NonlinearityDescriptor,
    cfg: &FixedPointConfig,
    scheme: &ThetaScheme,
) -> Result<StabilityEntry> {
    let (phi_a, _) = solve_auxiliary_fixed_point(g_a, phi0_a, nl, cfg, scheme)?;
    let (phi_b, _) = solve_auxiliary_fixed_point(g_b, phi0_b, nl, cfg, scheme)?;
    let solution_difference = norm_lp_q(&phi_a.sub(&phi_b)?, cfg.p)?;
    let data_difference = data_difference(phi0_a, g_a, phi0_b, g_b, cfg.p)?;
    Ok(StabilityEntry {
        solution_difference,
        data_difference,
        ratio: (data_difference >= DATA_NORM_FLOOR).then(|| solution_difference / data_difference),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySweep {
    pub epsilons: Vec<f64>,
    pub entries: Vec<StabilityEntry>,
    /// `max ratio / min ratio` over the sweep.
    pub spread: f64,
}

/// Perturbs `(φ₀, g)` by `ε (δφ₀, δg)` for each ε and records the ratios.
#[allow(clippy::too_many_arguments)]
pub fn stability_sweep(
    phi0: &Field,
    g: &Trajectory,
    dphi0: &Field,
    dg: &Trajectory,
    epsilons: &[f64],
    nl: &NonlinearityDescriptor,
    cfg: &FixedPointConfig,
    scheme: &ThetaScheme,
) -> Result<StabilitySweep> {
    let (base, _) = solve_auxiliary_fixed_point(g, phi0, nl, cfg, scheme)?;
    let mut entries = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let phi0_b = phi0.lincomb(1.0, dphi0, eps)?;
        let g_b = g.lincomb(1.0, dg, eps)?;
        let (pert, _) = solve_auxiliary_fixed_point(&g_b, &phi0_b, nl, cfg, scheme)?;
        let solution_difference = norm_lp_q(&pert.sub(&base)?, cfg.p)?;
        let data_difference = data_difference(&phi0_b, &g_b, phi0, g, cfg.p)?;
        entries.push(StabilityEntry {
            solution_difference,
            data_difference,
            ratio: (data_difference >= DATA_NORM_FLOOR).then(|| solution_difference / data_difference),
        });
    }
    let ratios: Vec<f64> = entries.iter().filter_map(|e| e.ratio).collect();
    let spread = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(StabilitySweep { epsilons: epsilons.to_vec(), entries, spread })
}
