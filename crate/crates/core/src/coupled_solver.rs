//! Full system `u_t + l φ_t = Δu + f`, `φ_t = Δφ + F(x,t,φ) + u`.
//!
//! The homotopy path iterates the outer operator `𝓛(g, λ)`: solve the phase
//! problem with source `g`, then the heat problem
//! `u_t − Δu = λ(−l φ_t + f)`, `u(0) = λ u₀`, and look for `𝓛(u, 1) = u`.
//! The stepping path advances both equations together, one θ-step each per
//! time interval.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fixed_point;
use crate::linear_parabolic::{initial_data_surrogate, step_with_source, w21p_surrogate, ThetaScheme, DATA_NORM_FLOOR};
use crate::mesh::{integral, norm_lp_q, Field, Trajectory};
use crate::nonlinearity::NonlinearityDescriptor;
use crate::phase_solver::{
    solve_auxiliary_fixed_point_from, AprioriLedger, FixedPointConfig, InitialIterate, BLOW_UP_THRESHOLD,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Homotopy,
    #[default]
    Stepping,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homotopy" => Ok(Method::Homotopy),
            "stepping" => Ok(Method::Stepping),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Homotopy => "homotopy",
            Method::Stepping => "stepping",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub latent_heat: f64,
    pub u0: Field,
    pub phi0: Field,
    /// Heat source; its time slab fixes `dt` and `T` for the run.
    pub f: Trajectory,
    /// Extra source in the phase equation, used only by manufactured solutions.
    pub phase_source: Option<Trajectory>,
    pub nonlinearity: NonlinearityDescriptor,
    pub p: f64,
    pub r: f64,
    /// Outer loop on `u` (norm `L^p(Q)`).
    pub outer: FixedPointConfig,
    /// Inner loop on `φ` (norm `L^{pr}(Q)`).
    pub inner: FixedPointConfig,
    pub scheme: ThetaScheme,
    /// Corrector passes per step of the stepping method.
    pub corrector_sweeps: usize,
}

impl SystemConfig {
    /// Defaults: `p = 2`, `r` from the nonlinearity, Crank–Nicolson, one
    /// corrector sweep, outer tolerance 1e-8 and inner tolerance 1e-11.
    pub fn new(latent_heat: f64, u0: Field, phi0: Field, f: Trajectory, nonlinearity: NonlinearityDescriptor) -> Self {
        let r = nonlinearity.growth_exponent();
        Self {
            latent_heat,
            u0,
            phi0,
            f,
            phase_source: None,
            nonlinearity,
            p: 2.0,
            r,
            outer: FixedPointConfig::default(),
            inner: FixedPointConfig { tolerance: 1e-11, ..FixedPointConfig::default() },
            scheme: ThetaScheme::default(),
            corrector_sweeps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latent_heat > 0.0 && self.latent_heat.is_finite()) {
            return Err(Error::InvalidParameter(format!("latent heat must be positive, got {}", self.latent_heat)));
        }
        if !(self.p >= 2.0) {
            return Err(Error::InvalidParameter(format!("p must be >= 2, got {}", self.p)));
        }
        self.u0.ensure_same_grid(self.f.frame(0))?;
        self.phi0.ensure_same_grid(self.f.frame(0))?;
        if let Some(s) = &self.phase_source {
            s.ensure_compatible(&self.f)?;
        }
        self.outer_config().validate()?;
        self.inner_config().validate()?;
        self.scheme.validate()
    }

    pub fn dt(&self) -> f64 {
        self.f.dt()
    }

    pub fn steps(&self) -> usize {
        self.f.steps()
    }

    pub(crate) fn outer_config(&self) -> FixedPointConfig {
        FixedPointConfig { p: self.p, r: 1.0, ..self.outer.clone() }
    }

    pub(crate) fn inner_config(&self) -> FixedPointConfig {
        FixedPointConfig { p: self.p, r: self.r, ..self.inner.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemLedger {
    /// Outer iterations on `u`; `norm_phi_lpr` there holds `‖u‖_{L^p(Q)}`.
    pub outer: Option<AprioriLedger>,
    /// Ledger of the last inner solve.
    pub inner: Option<AprioriLedger>,
    /// Largest `‖u‖_{L^p(Q)}` over the λ-ramp.
    pub rho: Option<f64>,
    /// `‖u‖_{L^p(Q)} / (1 + ‖u₀‖ + ‖φ₀‖ + ‖f‖_{L^p(Q)})`.
    pub bound_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SolutionPair {
    pub u: Trajectory,
    pub phi: Trajectory,
    pub method: Method,
    /// Outer iterations (zero for stepping).
    pub iterations: usize,
    /// Final outer residual (`None` for stepping).
    pub residual: Option<f64>,
    pub ledger: SystemLedger,
}

/// Phase solves inside the outer loop, warm-started from the previous result.
struct OuterOperator<'a> {
    cfg: &'a SystemConfig,
    inner_cfg: FixedPointConfig,
    warm: bool,
    last_phi: Option<Trajectory>,
    last_ledger: Option<AprioriLedger>,
}

impl<'a> OuterOperator<'a> {
    fn new(cfg: &'a SystemConfig, warm: bool) -> Self {
        Self { cfg, inner_cfg: cfg.inner_config(), warm, last_phi: None, last_ledger: None }
    }

    fn phase(&mut self, g: &Trajectory) -> Result<(Trajectory, AprioriLedger)> {
        let cfg = self.cfg;
        let source = match &cfg.phase_source {
            Some(s) => g.lincomb(1.0, s, 1.0)?,
            None => g.clone(),
        };
        let solve = |start| {
            solve_auxiliary_fixed_point_from(&source, &cfg.phi0, &cfg.nonlinearity, &self.inner_cfg, &cfg.scheme, start)
        };
        if self.warm {
            if let Some(prev) = &self.last_phi {
                match solve(InitialIterate::Direct(prev.clone())) {
                    Ok(out) => return Ok(out),
                    Err(e) => debug!("warm inner start failed ({e}); restarting the ramp"),
                }
            }
        }
        solve(InitialIterate::Zero)
    }

    fn apply(&mut self, g: &Trajectory, lambda: f64) -> Result<Trajectory> {
        let (phi, ledger) = self.phase(g).map_err(|e| Error::Inner { lambda, source: Box::new(e) })?;
        let u = heat_from_phase(&phi, lambda, self.cfg)?;
        self.last_phi = Some(phi);
        self.last_ledger = Some(ledger);
        Ok(u)
    }
}

/// `u_t − Δu = λ(−l φ_t + f)`, `u(0) = λ u₀`, with `φ_t` the forward
/// difference quotient on each interval.
fn heat_from_phase(phi: &Trajectory, lambda: f64, cfg: &SystemConfig) -> Result<Trajectory> {
    phi.ensure_compatible(&cfg.f)?;
    let th = cfg.scheme.theta;
    let dt = phi.dt();
    let l = cfg.latent_heat;
    let mut frames = Vec::with_capacity(phi.steps() + 1);
    frames.push(cfg.u0.scale(lambda));
    for k in 0..phi.steps() {
        let src = heat_source(phi.frame(k), phi.frame(k + 1), cfg.f.frame(k), cfg.f.frame(k + 1), l, th, dt, lambda);
        let next = step_with_source(&frames[k], &src, dt, &cfg.scheme)?;
        frames.push(next);
    }
    Trajectory::new(phi.grid(), dt, frames)
}

#[allow(clippy::too_many_arguments)]
fn heat_source(
    phi_a: &Field,
    phi_b: &Field,
    f_a: &Field,
    f_b: &Field,
    l: f64,
    th: f64,
    dt: f64,
    lambda: f64,
) -> Vec<f64> {
    phi_a
        .values()
        .iter()
        .zip(phi_b.values())
        .zip(f_a.values().iter().zip(f_b.values()))
        .map(|((pa, pb), (fa, fb))| lambda * (-l * (pb - pa) / dt + th * fb + (1.0 - th) * fa))
        .collect()
}

/// `𝓛(g, λ)`.
pub fn apply_outer_l(g: &Trajectory, lambda: f64, cfg: &SystemConfig) -> Result<Trajectory> {
    cfg.validate()?;
    g.ensure_compatible(&cfg.f)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    OuterOperator::new(cfg, false).apply(g, lambda)
}

pub fn solve_system(cfg: &SystemConfig, method: Method) -> Result<SolutionPair> {
    match method {
        Method::Homotopy => solve_homotopy(cfg, InitialIterate::Zero),
        Method::Stepping => solve_stepping(cfg),
    }
}

/// Homotopy solve from a chosen outer starting iterate.
pub fn solve_homotopy(cfg: &SystemConfig, start: InitialIterate) -> Result<SolutionPair> {
    cfg.validate()?;
    let outer_cfg = cfg.outer_config();
    let direct = [1.0];
    let (initial, schedule): (Trajectory, &[f64]) = match start {
        InitialIterate::Zero => (Trajectory::zeros(cfg.f.grid(), cfg.dt(), cfg.steps())?, &outer_cfg.schedule),
        InitialIterate::Given(w) => (w, &outer_cfg.schedule),
        InitialIterate::Direct(w) => (w, &direct),
    };
    initial.ensure_compatible(&cfg.f)?;

    let mut op = OuterOperator::new(cfg, true);
    let outcome = fixed_point::continuation(initial, schedule, &outer_cfg, cfg.p, |g, lambda| op.apply(g, lambda))?;
    // The converged image is the result of the most recent evaluation, so the
    // cached phase field belongs to it.
    let phi = op.last_phi.take().expect("at least one outer evaluation");
    let u = outcome.solution;

    let norm_u = norm_lp_q(&u, cfg.p)?;
    let data = data_norm(cfg)?;
    let rho = outcome.per_lambda.iter().map(|s| s.norm_phi_lpr).fold(0.0, f64::max);
    let last = outcome.per_lambda.last().copied();
    let outer = AprioriLedger {
        history: outcome.history,
        per_lambda: outcome.per_lambda,
        converged: true,
        norm_phi_lpr: norm_u,
        data_norm: data,
        bound_ratio: norm_u / data,
        energy: None,
        stability: None,
    };
    let iterations = outer.per_lambda.iter().map(|s| s.iterations).sum();
    Ok(SolutionPair {
        u,
        phi,
        method: Method::Homotopy,
        iterations,
        residual: last.map(|s| s.residual),
        ledger: SystemLedger {
            outer: Some(outer),
            inner: op.last_ledger.take(),
            rho: Some(rho),
            bound_ratio: norm_u / data,
        },
    })
}

fn data_norm(cfg: &SystemConfig) -> Result<f64> {
    Ok(1.0
        + initial_data_surrogate(&cfg.u0, cfg.p)?
        + initial_data_surrogate(&cfg.phi0, cfg.p)?
        + norm_lp_q(&cfg.f, cfg.p)?)
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

/// Per step: phase step with `u` frozen, heat step with the new `φ_t`, then
/// `corrector_sweeps` passes re-solving both with θ-averaged coupling terms.
pub fn solve_stepping(cfg: &SystemConfig) -> Result<SolutionPair> {
    cfg.validate()?;
    let grid = cfg.f.grid();
    let dt = cfg.dt();
    let th = cfg.scheme.theta;
    let l = cfg.latent_heat;
    let nl = &cfg.nonlinearity;
    let zero = Field::zeros(grid);
    let source = |k: usize| cfg.phase_source.as_ref().map_or(&zero, |s| s.frame(k));

    let mut us = vec![cfg.u0.clone()];
    let mut phis = vec![cfg.phi0.clone()];
    for k in 0..cfg.steps() {
        let (u, phi) = (&us[k], &phis[k]);
        let f_now = guarded_eval(nl, phi, cfg.f.time(k), k)?;
        let (s0, s1) = (source(k).values(), source(k + 1).values());
        let src: Vec<f64> = f_now
            .values()
            .iter()
            .zip(u.values())
            .zip(s0.iter().zip(s1))
            .map(|((fa, ua), (sa, sb))| fa + ua + th * sb + (1.0 - th) * sa)
            .collect();
        let mut phi_next = step_with_source(phi, &src, dt, &cfg.scheme)?;
        let heat = |phi_next: &Field| {
            let src = heat_source(phi, phi_next, cfg.f.frame(k), cfg.f.frame(k + 1), l, th, dt, 1.0);
            step_with_source(u, &src, dt, &cfg.scheme)
        };
        let mut u_next = heat(&phi_next)?;
        for _ in 0..cfg.corrector_sweeps {
            let f_next = guarded_eval(nl, &phi_next, cfg.f.time(k + 1), k)?;
            let src: Vec<f64> = (0..phi.len())
                .map(|i| {
                    th * (f_next.values()[i] + u_next.values()[i] + s1[i])
                        + (1.0 - th) * (f_now.values()[i] + u.values()[i] + s0[i])
                })
                .collect();
            phi_next = step_with_source(phi, &src, dt, &cfg.scheme)?;
            u_next = heat(&phi_next)?;
        }
        us.push(u_next);
        phis.push(phi_next);
    }
    let u = Trajectory::new(grid, dt, us)?;
    let phi = Trajectory::new(grid, dt, phis)?;
    let bound_ratio = norm_lp_q(&u, cfg.p)? / data_norm(cfg)?;
    Ok(SolutionPair {
        u,
        phi,
        method: Method::Stepping,
        iterations: 0,
        residual: None,
        ledger: SystemLedger { bound_ratio, ..SystemLedger::default() },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub distance_u: Option<f64>,
    pub distance_phi: Option<f64>,
    pub bound: f64,
    /// `None` when a solve failed.
    pub pass: Option<bool>,
    pub note: Option<String>,
}

/// Solves from `g⁰ = 0` along the λ-ramp and from a seeded random `g⁰` with
/// entries in `[-1, 1]` directly at λ = 1, and compares the pairs in `L²(Q)`.
pub fn check_uniqueness(cfg: &SystemConfig, seed: u64) -> UniquenessReport {
    let bound = 10.0 * cfg.outer.tolerance;
    let run = || -> Result<(f64, f64)> {
        let a = solve_homotopy(cfg, InitialIterate::Zero)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = cfg.f.grid();
        let frames = (0..=cfg.steps())
            .map(|_| Field::from_values(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect()))
            .collect::<Result<Vec<_>>>()?;
        let start = Trajectory::new(grid, cfg.dt(), frames)?;
        let b = solve_homotopy(cfg, InitialIterate::Direct(start))?;
        Ok((norm_lp_q(&a.u.sub(&b.u)?, 2.0)?, norm_lp_q(&a.phi.sub(&b.phi)?, 2.0)?))
    };
    match run() {
        Ok((du, dphi)) => UniquenessReport {
            distance_u: Some(du),
            distance_phi: Some(dphi),
            bound,
            pass: Some(du < bound && dphi < bound),
            note: None,
        },
        Err(e) => {
            UniquenessReport { distance_u: None, distance_phi: None, bound, pass: None, note: Some(e.to_string()) }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `∫_Ω (u + l φ)` per frame.
    pub totals: Vec<f64>,
    pub max_drift: f64,
    /// Drift relative to `max(|total₀|, ∫|u₀| + l∫|φ₀|)`.
    pub relative_drift: f64,
    /// False when `f` is not identically zero and no conservation is expected.
    pub applicable: bool,
    pub pass: bool,
}

pub const CONSERVATION_TOLERANCE: f64 = 1e-8;

pub fn check_conservation(pair: &SolutionPair, cfg: &SystemConfig) -> Result<ConservationReport> {
    pair.u.ensure_compatible(&pair.phi)?;
    let l = cfg.latent_heat;
    let totals: Vec<f64> =
        pair.u.frames().iter().zip(pair.phi.frames()).map(|(u, phi)| integral(u) + l * integral(phi)).collect();
    let max_drift = totals.iter().map(|t| (t - totals[0]).abs()).fold(0.0, f64::max);
    let abs_integral = |f: &Field| f.values().iter().zip(f.grid().weights()).map(|(v, w)| v.abs() * w).sum::<f64>();
    let scale = totals[0].abs().max(abs_integral(&cfg.u0) + l * abs_integral(&cfg.phi0));
    let relative_drift = if scale > 0.0 { max_drift / scale } else { max_drift };
    let applicable = cfg.f.max_abs() == 0.0 && cfg.phase_source.as_ref().is_none_or(|s| s.max_abs() == 0.0);
    Ok(ConservationReport {
        totals,
        max_drift,
        relative_drift,
        applicable,
        pass: !applicable || relative_drift < CONSERVATION_TOLERANCE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MainEstimate {
    pub u_norm: f64,
    pub phi_norm: f64,
    pub data_norm: f64,
    /// `None` for zero data.
    pub ratio: Option<f64>,
    pub grid_nodes: usize,
    pub dt: f64,
}

/// Empirical constant of `‖u‖ + ‖φ‖ ≤ C(1 + ‖φ₀‖ + ‖u₀‖ + ‖f‖)` with
/// `W^{2,1}_p(Q)` surrogates on the left.
pub fn measure_main_estimate(pair: &SolutionPair, cfg: &SystemConfig) -> Result<MainEstimate> {
    let u_norm = w21p_surrogate(&pair.u, cfg.p)?.total();
    let phi_norm = w21p_surrogate(&pair.phi, cfg.p)?.total();
    let data_norm = data_norm(cfg)?;
    let data_only = data_norm - 1.0;
    Ok(MainEstimate {
        u_norm,
        phi_norm,
        data_norm,
        ratio: (data_only >= DATA_NORM_FLOOR).then(|| (u_norm + phi_norm) / data_norm),
        grid_nodes: pair.u.grid().len(),
        dt: pair.u.dt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemStability {
    pub epsilons: Vec<f64>,
    pub ratios: Vec<f64>,
    pub spread: f64,
}

/// Perturbs `(u₀, φ₀, f)` by `ε (δu₀, δφ₀, δf)` and records
/// `(‖δu‖ + ‖δφ‖)_{L^p(Q)}` over the data difference for each ε.
pub fn system_stability_sweep(
    cfg: &SystemConfig,
    perturbation: (&Field, &Field, &Trajectory),
    epsilons: &[f64],
    method: Method,
) -> Result<SystemStability> {
    let (du0, dphi0, df) = perturbation;
    let base = solve_system(cfg, method)?;
    let mut ratios = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut pert = cfg.clone();
        pert.u0 = cfg.u0.lincomb(1.0, du0, eps)?;
        pert.phi0 = cfg.phi0.lincomb(1.0, dphi0, eps)?;
        pert.f = cfg.f.lincomb(1.0, df, eps)?;
        let sol = solve_system(&pert, method)?;
        let diff = norm_lp_q(&sol.u.sub(&base.u)?, cfg.p)? + norm_lp_q(&sol.phi.sub(&base.phi)?, cfg.p)?;
        let data = initial_data_surrogate(&pert.u0.sub(&cfg.u0)?, cfg.p)?
            + initial_data_surrogate(&pert.phi0.sub(&cfg.phi0)?, cfg.p)?
            + norm_lp_q(&pert.f.sub(&cfg.f)?, cfg.p)?;
        if data < DATA_NORM_FLOOR {
            return Err(Error::InvalidParameter("perturbation has zero data norm".into()));
        }
        ratios.push(diff / data);
    }
    let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SystemStability { epsilons: epsilons.to_vec(), ratios, spread })
}
