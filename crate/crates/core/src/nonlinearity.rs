//! Pluggable reaction term `F(x, t, z)`, the built-in instances, and sampling
//! checks of the structural hypotheses:
//!
//! * one-sided Lipschitz bound `(F(z₁)−F(z₂))(z₁−z₂) ≤ a₀ (z₁−z₂)²`,
//! * envelope `(F(z₁)−F(z₂))² ≤ c₀ (1+|z₁|^{2r−2}+|z₂|^{2r−2}) (z₁−z₂)²`,
//! * exponent admissibility of `r` given `p` and `N`,
//! * Carathéodory regularity with bounded `F(·,·,0)`,
//! * the derived growth `|F| ≤ a(1+|z|^r)` and sign `F z ≤ d₀(1+z²)` bounds,
//! * and a witness search against the dissipativity condition (M4).
//!
//! Everything here is an estimate over a finite sampling box. A failing
//! verdict always carries the sample that violates the bound; a passing one is
//! only as good as the box.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mesh::{Field, Trajectory};
use crate::{Error, Result};

type Evaluator = dyn Fn(&[f64], f64, f64) -> f64 + Send + Sync;

/// Constants a user may declare for a nonlinearity; checks compare the
/// sampled estimates against them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub a0: Option<f64>,
    pub c0: Option<f64>,
    pub a: Option<f64>,
    pub d0: Option<f64>,
}

#[derive(Clone)]
pub struct NonlinearityDescriptor {
    name: String,
    growth_exponent: f64,
    evaluator: Arc<Evaluator>,
    declared: DeclaredConstants,
    probes: Vec<(Vec<f64>, f64)>,
    zero: bool,
}

impl fmt::Debug for NonlinearityDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearityDescriptor")
            .field("name", &self.name)
            .field("growth_exponent", &self.growth_exponent)
            .field("declared", &self.declared)
            .finish_non_exhaustive()
    }
}

impl NonlinearityDescriptor {
    pub fn new(
        name: impl Into<String>,
        growth_exponent: f64,
        evaluator: impl Fn(&[f64], f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(growth_exponent >= 1.0 && growth_exponent.is_finite()) {
            return Err(Error::InvalidParameter(format!("growth exponent r must be >= 1, got {growth_exponent}")));
        }
        Ok(Self {
            name: name.into(),
            growth_exponent,
            evaluator: Arc::new(evaluator),
            declared: DeclaredConstants::default(),
            probes: vec![(vec![0.0], 0.0)],
            zero: false,
        })
    }

    /// Autonomous `F(z)`.
    pub fn autonomous(
        name: impl Into<String>,
        growth_exponent: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(name, growth_exponent, move |_, _, z| f(z))
    }

    pub fn with_declared(mut self, declared: DeclaredConstants) -> Self {
        self.declared = declared;
        self
    }

    /// Points `(x, t)` at which the hypothesis checks sample `z ↦ F(x,t,z)`.
    /// Autonomous nonlinearities need only the default single probe.
    pub fn with_probes(mut self, probes: Vec<(Vec<f64>, f64)>) -> Self {
        if !probes.is_empty() {
            self.probes = probes;
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn growth_exponent(&self) -> f64 {
        self.growth_exponent
    }

    pub fn declared(&self) -> &DeclaredConstants {
        &self.declared
    }

    pub fn probes(&self) -> &[(Vec<f64>, f64)] {
        &self.probes
    }

    /// True for the identically-zero built-in.
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    #[inline]
    pub fn eval(&self, x: &[f64], t: f64, z: f64) -> f64 {
        (self.evaluator)(x, t, z)
    }

    /// `F` at the first probe point; exact for autonomous nonlinearities.
    pub fn eval_z(&self, z: f64) -> f64 {
        let (x, t) = &self.probes[0];
        self.eval(x, *t, z)
    }

    /// Pointwise `F(x_i, t, w_i)`.
    pub fn eval_field(&self, w: &Field, t: f64) -> Result<Field> {
        let grid = w.grid();
        let mut out = Vec::with_capacity(w.len());
        let mut coords = vec![0.0; grid.dim()];
        for (i, &z) in w.values().iter().enumerate() {
            for (a, c) in coords.iter_mut().enumerate() {
                *c = grid.axis_index(i, a) as f64 * grid.spacing()[a];
            }
            let v = self.eval(&coords, t, z);
            if !v.is_finite() {
                return Err(Error::Overflow { z, t });
            }
            out.push(v);
        }
        Field::from_values(grid, out)
    }

    /// `F` along a whole trajectory, frame by frame.
    pub fn eval_trajectory(&self, w: &Trajectory) -> Result<Trajectory> {
        let frames =
            w.frames().iter().enumerate().map(|(k, f)| self.eval_field(f, w.time(k))).collect::<Result<Vec<_>>>()?;
        Trajectory::new(w.grid(), w.dt(), frames)
    }
}

/// `F(z) = (z − z³)/2`, the classical double-well derivative.
pub fn builtin_double_well() -> NonlinearityDescriptor {
    NonlinearityDescriptor::autonomous("double_well", 3.0, |z| 0.5 * (z - z * z * z)).expect("valid exponent")
}

/// `F(z) = |z|^{r₂−1} z − |z|^{r₁−1} z` with `1 ≤ r₂ < r₁`, growth exponent `r₁`.
pub fn builtin_power_law(r1: f64, r2: f64) -> Result<NonlinearityDescriptor> {
    if !(r2 >= 1.0 && r2 < r1 && r1.is_finite()) {
        return Err(Error::InvalidParameter(format!("power law needs 1 <= r2 < r1, got r1 = {r1}, r2 = {r2}")));
    }
    NonlinearityDescriptor::autonomous(format!("power_law({r1},{r2})"), r1, move |z| {
        signed_pow(z, r2) - signed_pow(z, r1)
    })
}

/// `F(z) = a z + b z² − z³` (constant coefficients).
pub fn builtin_hoffman_jiang(a_coef: f64, b_coef: f64) -> NonlinearityDescriptor {
    NonlinearityDescriptor::autonomous(format!("hoffman_jiang({a_coef},{b_coef})"), 3.0, move |z| {
        a_coef * z + b_coef * z * z - z * z * z
    })
    .expect("valid exponent")
}

/// `F ≡ 0`.
pub fn builtin_zero() -> NonlinearityDescriptor {
    let mut d = NonlinearityDescriptor::autonomous("zero", 1.0, |_| 0.0).expect("valid exponent");
    d.zero = true;
    d
}

/// `F(z) = slope · z`.
pub fn builtin_linear(slope: f64) -> NonlinearityDescriptor {
    NonlinearityDescriptor::autonomous(format!("linear({slope})"), 1.0, move |z| slope * z).expect("valid exponent")
}

/// `|z|^{k−1} z`
#[inline]
pub fn signed_pow(z: f64, k: f64) -> f64 {
    if k == 1.0 {
        z
    } else {
        z.abs().powf(k - 1.0) * z
    }
}

/// Serializable choice of built-in nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearitySpec {
    Zero,
    DoubleWell,
    PowerLaw { r1: f64, r2: f64 },
    HoffmanJiang { a: f64, b: f64 },
    Linear { slope: f64 },
}

impl NonlinearitySpec {
    pub fn build(&self) -> Result<NonlinearityDescriptor> {
        match *self {
            NonlinearitySpec::Zero => Ok(builtin_zero()),
            NonlinearitySpec::DoubleWell => Ok(builtin_double_well()),
            NonlinearitySpec::PowerLaw { r1, r2 } => builtin_power_law(r1, r2),
            NonlinearitySpec::HoffmanJiang { a, b } => Ok(builtin_hoffman_jiang(a, b)),
            NonlinearitySpec::Linear { slope } => Ok(builtin_linear(slope)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Sample point reproducing a bound: `z₂` is absent for single-point bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub z1: f64,
    pub z2: Option<f64>,
    pub x: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub hypothesis: String,
    pub verdict: Verdict,
    pub constant_estimate: Option<f64>,
    pub witness: Option<Witness>,
    #[serde(rename = "box")]
    pub sampling_box: f64,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Sampled supremum together with the sample attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimate {
    pub value: f64,
    pub witness: Witness,
}

fn check_box(sampling_box: f64, samples: usize, min_samples: usize) -> Result<()> {
    if !(sampling_box > 0.0 && sampling_box.is_finite()) {
        return Err(Error::InvalidParameter(format!("sampling box must be positive, got {sampling_box}")));
    }
    if samples < min_samples {
        return Err(Error::InvalidParameter(format!("need at least {min_samples} samples, got {samples}")));
    }
    Ok(())
}

/// Uniform samples of `[-b, b]`, always containing `0`.
fn symmetric_samples(b: f64, n: usize) -> Vec<f64> {
    let mut zs: Vec<f64> = (0..n).map(|i| -b + 2.0 * b * i as f64 / (n - 1) as f64).collect();
    zs.push(0.0);
    zs.sort_by(f64::total_cmp);
    zs.dedup();
    zs
}

fn finite_or_overflow(v: f64, z: f64, t: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow { z, t })
    }
}

/// Golden-section maximization of a unimodal-ish `g` on `[lo, hi]`.
fn golden_max(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..100 {
        if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if gc >= gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - INV_PHI * (hi - lo);
            gc = g(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + INV_PHI * (hi - lo);
            gd = g(d);
        }
    }
    if gc >= gd {
        (c, gc)
    } else {
        (d, gd)
    }
}

/// Maximizes a single-point quotient `q(z)` over `[-b, b]`: dense uniform
/// samples, then a golden-section polish around the best sample.
fn sup_pointwise(
    nl: &NonlinearityDescriptor,
    sampling_box: f64,
    samples: usize,
    q: impl Fn(f64, f64) -> f64,
) -> Result<ConstantEstimate> {
    let zs = symmetric_samples(sampling_box, samples);
    let step = 2.0 * sampling_box / (samples - 1) as f64;
    let mut best: Option<ConstantEstimate> = None;
    for (x, t) in nl.probes() {
        let f = |z: f64| nl.eval(x, *t, z);
        let mut best_z = zs[0];
        let mut best_v = f64::NEG_INFINITY;
        for &z in &zs {
            let fz = finite_or_overflow(f(z), z, *t)?;
            let v = q(z, fz);
            if v > best_v {
                best_v = v;
                best_z = z;
            }
        }
        let lo = (best_z - step).max(-sampling_box);
        let hi = (best_z + step).min(sampling_box);
        let (z_ref, v_ref) = golden_max(|z| q(z, f(z)), lo, hi);
        let (z, v) = if v_ref.is_finite() && v_ref > best_v { (z_ref, v_ref) } else { (best_z, best_v) };
        if best.as_ref().is_none_or(|b| v > b.value) {
            best = Some(ConstantEstimate { value: v, witness: Witness { z1: z, z2: None, x: x.clone(), t: *t } });
        }
    }
    Ok(best.expect("at least one probe"))
}

/// Maximizes a pair quotient `q(z₁, z₂, F₁, F₂)` over the pair grid, with the
/// diagonal limit `dq(z, F'(z))` standing in for `z₁ = z₂`.
fn sup_pairs(
    nl: &NonlinearityDescriptor,
    sampling_box: f64,
    samples: usize,
    q: impl Fn(f64, f64, f64, f64) -> f64,
    diag: impl Fn(f64, f64) -> f64,
) -> Result<ConstantEstimate> {
    let zs = symmetric_samples(sampling_box, samples);
    let step = 2.0 * sampling_box / (samples - 1) as f64;
    let mut best: Option<ConstantEstimate> = None;
    for (x, t) in nl.probes() {
        let f = |z: f64| nl.eval(x, *t, z);
        let fs = zs.iter().map(|&z| finite_or_overflow(f(z), z, *t)).collect::<Result<Vec<_>>>()?;
        let mut best_pair = (zs[0], zs[1]);
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..zs.len() {
            for j in (i + 1)..zs.len() {
                let v = q(zs[i], zs[j], fs[i], fs[j]);
                if v > best_v {
                    best_v = v;
                    best_pair = (zs[i], zs[j]);
                }
            }
        }

        // Central-difference derivative for the diagonal limit.
        let deriv = |z: f64| {
            let h = 1e-6 * (1.0 + z.abs());
            let (a, b) = ((z - h).max(-sampling_box), (z + h).min(sampling_box));
            (f(b) - f(a)) / (b - a)
        };
        let mut best_diag = (zs[0], f64::NEG_INFINITY);
        for &z in &zs {
            let v = diag(z, deriv(z));
            if v > best_diag.1 {
                best_diag = (z, v);
            }
        }
        let lo = (best_diag.0 - step).max(-sampling_box);
        let hi = (best_diag.0 + step).min(sampling_box);
        let refined = golden_max(|z| diag(z, deriv(z)), lo, hi);
        if refined.1.is_finite() && refined.1 > best_diag.1 {
            best_diag = refined;
        }

        let (z1, z2, v) = if best_diag.1 > best_v {
            let h = 1e-6 * (1.0 + best_diag.0.abs());
            (best_diag.0, best_diag.0 + h, best_diag.1)
        } else {
            (best_pair.0, best_pair.1, best_v)
        };
        if best.as_ref().is_none_or(|b| v > b.value) {
            best = Some(ConstantEstimate { value: v, witness: Witness { z1, z2: Some(z2), x: x.clone(), t: *t } });
        }
    }
    Ok(best.expect("at least one probe"))
}

/// Sampled `sup (F(z₁)−F(z₂))/(z₁−z₂)` over `[-box, box]²`.
///
/// A valid `a₀` is any value at or above the true supremum; the sample maximum
/// approaches it from below.
pub fn estimate_a0(nl: &NonlinearityDescriptor, sampling_box: f64, samples: usize) -> Result<ConstantEstimate> {
    check_box(sampling_box, samples, 100)?;
    sup_pairs(nl, sampling_box, samples, |z1, z2, f1, f2| (f1 - f2) / (z1 - z2), |_, d| d)
}

fn envelope(z1: f64, z2: f64, r: f64) -> f64 {
    1.0 + z1.abs().powf(2.0 * r - 2.0) + z2.abs().powf(2.0 * r - 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthEnvelope {
    pub c0: ConstantEstimate,
    pub a: ConstantEstimate,
}

/// Sampled `c₀ = sup (F(z₁)−F(z₂))² / ((z₁−z₂)²(1+|z₁|^{2r−2}+|z₂|^{2r−2}))`
/// and `a = sup |F(z)| / (1+|z|^r)`, with `r` the declared growth exponent.
pub fn estimate_growth_envelope(
    nl: &NonlinearityDescriptor,
    sampling_box: f64,
    samples: usize,
) -> Result<GrowthEnvelope> {
    check_box(sampling_box, samples, 100)?;
    let r = nl.growth_exponent();
    let c0 = sup_pairs(
        nl,
        sampling_box,
        samples,
        |z1, z2, f1, f2| {
            let q = (f1 - f2) / (z1 - z2);
            q * q / envelope(z1, z2, r)
        },
        |z, d| d * d / envelope(z, z, r),
    )?;
    let a = sup_pointwise(nl, sampling_box, samples * 25, |z, fz| fz.abs() / (1.0 + z.abs().powf(r)))?;
    Ok(GrowthEnvelope { c0, a })
}

/// Sampled `sup F(z) z / (1+z²)`.
pub fn estimate_d0(nl: &NonlinearityDescriptor, sampling_box: f64, samples: usize) -> Result<ConstantEstimate> {
    check_box(sampling_box, samples, 100)?;
    sup_pointwise(nl, sampling_box, samples, |z, fz| fz * z / (1.0 + z * z))
}

/// Parameters of the dissipativity condition
/// `F(z)|z|^{pr−r−1} z ≤ α(1+|z|^{pr−1}) − β|z|^{pr}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M4Params {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub r: f64,
}

impl M4Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidParameter("M4 needs alpha, beta > 0".into()));
        }
        if !(self.p >= 2.0) {
            return Err(Error::InvalidParameter(format!("M4 needs p >= 2, got {}", self.p)));
        }
        if !(self.r >= 1.0) {
            return Err(Error::InvalidParameter(format!("M4 needs r >= 1, got {}", self.r)));
        }
        Ok(())
    }
}

/// Both sides of the (M4) inequality at `z` (first probe point).
pub fn m4_sides(nl: &NonlinearityDescriptor, params: &M4Params, z: f64) -> (f64, f64) {
    let pr = params.p * params.r;
    let az = z.abs();
    let lhs = nl.eval_z(z) * az.powf(pr - params.r - 1.0) * z;
    let rhs = params.alpha * (1.0 + az.powf(pr - 1.0)) - params.beta * az.powf(pr);
    (lhs, rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M4Witness {
    pub z: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Searches `[-box, box]` for a point violating (M4). Candidates are scanned
/// by increasing `|z|`; log-spaced magnitudes cover the large-`|z|` regime
/// where violations of the power-law family live.
pub fn check_m4_violation(
    nl: &NonlinearityDescriptor,
    params: &M4Params,
    sampling_box: f64,
) -> Result<Option<M4Witness>> {
    params.validate()?;
    check_box(sampling_box, 100, 100)?;
    const UNIFORM: usize = 2001;
    const LOG: usize = 4000;
    let lo = (sampling_box * 1e-6).min(1e-3);
    let mut mags: Vec<f64> = (0..LOG)
        .map(|i| lo * (sampling_box / lo).powf(i as f64 / (LOG - 1) as f64))
        .chain((1..UNIFORM).map(|i| sampling_box * i as f64 / (UNIFORM - 1) as f64))
        .collect();
    mags.push(sampling_box);
    mags.sort_by(f64::total_cmp);
    mags.dedup();

    for m in mags {
        for z in [m, -m] {
            let (lhs, rhs) = m4_sides(nl, params, z);
            if !(lhs.is_finite() && rhs.is_finite()) {
                continue;
            }
            if lhs - rhs > 1e-12 * (lhs.abs() + rhs.abs()) {
                return Ok(Some(M4Witness { z, lhs, rhs }));
            }
        }
    }
    Ok(None)
}

/// Admissible target exponent of the embedding `W^{2,1}_p(Q) ↪ L^q(Q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum EmbeddingExponent {
    /// `q = ∞` (`p > (N+2)/2`).
    Unbounded,
    /// Any finite `q ≥ 1` (`p = (N+2)/2`).
    AnyFinite,
    /// `q = p(N+2)/(N+2−2p)` (`p < (N+2)/2`).
    Max(f64),
}

pub fn compute_embedding_exponent(p: f64, n: u32) -> Result<EmbeddingExponent> {
    if !(p >= 1.0 && p.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter(format!("need p >= 1 and N >= 1, got p = {p}, N = {n}")));
    }
    let n2 = n as f64 + 2.0;
    let critical = n2 / 2.0;
    Ok(if p > critical {
        EmbeddingExponent::Unbounded
    } else if p == critical {
        EmbeddingExponent::AnyFinite
    } else {
        EmbeddingExponent::Max(p * n2 / (n2 - 2.0 * p))
    })
}

/// Pass iff `r ≥ 1` and either `p ≥ (N+2)/2` or `r < (N+2)/(N+2−2p)`.
pub fn validate_h3(p: f64, n: u32, r: f64) -> Verdict {
    if !(r >= 1.0) || !(p >= 1.0) || n == 0 {
        return Verdict::Fail;
    }
    let n2 = n as f64 + 2.0;
    if p >= n2 / 2.0 || r < n2 / (n2 - 2.0 * p) {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Options for [`check_hypotheses`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisOptions {
    #[serde(rename = "box")]
    pub sampling_box: f64,
    pub samples: usize,
    /// `p` of the data space.
    pub p: f64,
    /// Spatial dimension `N`.
    pub dimension: u32,
    #[serde(default)]
    pub m4: Option<M4Params>,
}

impl Default for HypothesisOptions {
    fn default() -> Self {
        Self { sampling_box: 10.0, samples: 400, p: 2.0, dimension: 1, m4: None }
    }
}

fn bound_report(
    hypothesis: &str,
    est: &ConstantEstimate,
    declared: Option<f64>,
    opts: &HypothesisOptions,
    samples: usize,
) -> HypothesisReport {
    let (verdict, witness, note) = match declared {
        Some(c) if est.value > c * (1.0 + 1e-9) + 1e-12 => (
            Verdict::Fail,
            Some(est.witness.clone()),
            Some(format!("declared constant {c} is below the sampled supremum")),
        ),
        _ => (Verdict::Pass, Some(est.witness.clone()), None),
    };
    HypothesisReport {
        hypothesis: hypothesis.to_string(),
        verdict,
        constant_estimate: Some(est.value),
        witness,
        sampling_box: opts.sampling_box,
        samples,
        note,
    }
}

/// Runs every check and returns one report per hypothesis.
pub fn check_hypotheses(nl: &NonlinearityDescriptor, opts: &HypothesisOptions) -> Result<Vec<HypothesisReport>> {
    let mut reports = Vec::new();
    let declared = *nl.declared();
    let overflow_report = |name: &str, err: &Error| HypothesisReport {
        hypothesis: name.to_string(),
        verdict: Verdict::Inconclusive,
        constant_estimate: None,
        witness: None,
        sampling_box: opts.sampling_box,
        samples: opts.samples,
        note: Some(err.to_string()),
    };

    match estimate_a0(nl, opts.sampling_box, opts.samples) {
        Ok(est) => reports.push(bound_report("H1", &est, declared.a0, opts, opts.samples)),
        Err(e @ Error::Overflow { .. }) => reports.push(overflow_report("H1", &e)),
        Err(e) => return Err(e),
    }

    match estimate_growth_envelope(nl, opts.sampling_box, opts.samples) {
        Ok(env) => {
            let mut h2 = bound_report("H2", &env.c0, declared.c0, opts, opts.samples);
            // An envelope that keeps growing with the box suggests r is too small.
            if h2.verdict == Verdict::Pass {
                let half = estimate_growth_envelope(nl, opts.sampling_box / 2.0, opts.samples)?;
                if env.c0.value > 2.0 * half.c0.value + 1e-12 {
                    h2.verdict = Verdict::Inconclusive;
                    h2.note = Some(format!(
                        "c0 estimate doubled between box {} and {}; growth exponent r = {} may be too small",
                        opts.sampling_box / 2.0,
                        opts.sampling_box,
                        nl.growth_exponent()
                    ));
                }
            }
            reports.push(h2);
            reports.push(bound_report("growth_a", &env.a, declared.a, opts, opts.samples * 25));
        }
        Err(e @ Error::Overflow { .. }) => {
            reports.push(overflow_report("H2", &e));
            reports.push(overflow_report("growth_a", &e));
        }
        Err(e) => return Err(e),
    }

    let h3 = validate_h3(opts.p, opts.dimension, nl.growth_exponent());
    reports.push(HypothesisReport {
        hypothesis: "H3".into(),
        verdict: h3,
        constant_estimate: match compute_embedding_exponent(opts.p, opts.dimension)? {
            EmbeddingExponent::Max(q) => Some(q),
            _ => None,
        },
        witness: None,
        sampling_box: opts.sampling_box,
        samples: 0,
        note: Some(format!("p = {}, N = {}, r = {}", opts.p, opts.dimension, nl.growth_exponent())),
    });

    // Carathéodory regularity: finite everywhere sampled, bounded F(·,·,0).
    let zs = symmetric_samples(opts.sampling_box, opts.samples);
    let mut h4 = HypothesisReport {
        hypothesis: "H4".into(),
        verdict: Verdict::Pass,
        constant_estimate: None,
        witness: None,
        sampling_box: opts.sampling_box,
        samples: opts.samples,
        note: None,
    };
    let mut f0_sup: f64 = 0.0;
    'probes: for (x, t) in nl.probes() {
        f0_sup = f0_sup.max(nl.eval(x, *t, 0.0).abs());
        for &z in &zs {
            if !nl.eval(x, *t, z).is_finite() {
                h4.verdict = Verdict::Fail;
                h4.witness = Some(Witness { z1: z, z2: None, x: x.clone(), t: *t });
                h4.note = Some("non-finite value".into());
                break 'probes;
            }
        }
    }
    if h4.verdict == Verdict::Pass {
        h4.constant_estimate = Some(f0_sup);
        h4.note = Some("constant_estimate is sup |F(x,t,0)| over the probe points".into());
    }
    reports.push(h4);

    match estimate_d0(nl, opts.sampling_box, opts.samples * 25) {
        Ok(est) => reports.push(bound_report("sign_d0", &est, declared.d0, opts, opts.samples * 25)),
        Err(e @ Error::Overflow { .. }) => reports.push(overflow_report("sign_d0", &e)),
        Err(e) => return Err(e),
    }

    if let Some(m4) = opts.m4 {
        let report = match check_m4_violation(nl, &m4, opts.sampling_box)? {
            Some(w) => HypothesisReport {
                hypothesis: "M4".into(),
                verdict: Verdict::Fail,
                constant_estimate: Some(w.lhs - w.rhs),
                witness: Some(Witness { z1: w.z, z2: None, x: nl.probes()[0].0.clone(), t: nl.probes()[0].1 }),
                sampling_box: opts.sampling_box,
                samples: 0,
                note: Some(format!("LHS = {:e} > RHS = {:e}", w.lhs, w.rhs)),
            },
            None => HypothesisReport {
                hypothesis: "M4".into(),
                verdict: Verdict::Inconclusive,
                constant_estimate: None,
                witness: None,
                sampling_box: opts.sampling_box,
                samples: 0,
                note: Some("no violation inside the bounded search box".into()),
            },
        };
        reports.push(report);
    }
    Ok(reports)
}
