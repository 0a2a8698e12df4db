//! Run configuration: one TOML file with sections `grid`, `time`, `physics`,
//! `nonlinearity`, `solver`, `hypotheses`, `verify` and `output`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use caginalp_core::coupled_solver::{Method, SystemConfig};
use caginalp_core::data::{FieldSpec, SourceSpec};
use caginalp_core::linear_parabolic::ThetaScheme;
use caginalp_core::nonlinearity::{validate_h3, HypothesisOptions, M4Params, NonlinearitySpec, Verdict};
use caginalp_core::phase_solver::FixedPointConfig;
use caginalp_core::verification::CorpusSpec;
use caginalp_core::{Grid, NonlinearityDescriptor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_extents")]
    pub extents: Vec<f64>,
    pub nodes: Vec<usize>,
}

fn default_extents() -> Vec<f64> {
    vec![1.0]
}

impl Default for GridSection {
    fn default() -> Self {
        Self { extents: default_extents(), nodes: vec![21] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    /// Final time; the step count is `round(t_end / dt)`.
    pub t_end: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { dt: 1e-2, t_end: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub latent_heat: f64,
    pub p: f64,
    /// Growth exponent; defaults to that of the nonlinearity.
    pub r: Option<f64>,
    pub u0: FieldSpec,
    pub phi0: FieldSpec,
    pub f: SourceSpec,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            latent_heat: 1.0,
            p: 2.0,
            r: None,
            u0: FieldSpec::default(),
            phi0: FieldSpec::default(),
            f: SourceSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: Method,
    pub theta: f64,
    pub tolerance: f64,
    pub inner_tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub schedule: Vec<f64>,
    pub corrector_sweeps: usize,
    pub linear_tolerance: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let fp = FixedPointConfig::default();
        Self {
            method: Method::Stepping,
            theta: 0.5,
            tolerance: fp.tolerance,
            inner_tolerance: 1e-11,
            max_iterations: fp.max_iterations,
            damping: fp.damping,
            schedule: fp.schedule,
            corrector_sweeps: 1,
            linear_tolerance: ThetaScheme::default().tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct M4Section {
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesesSection {
    #[serde(rename = "box")]
    pub sampling_box: f64,
    pub samples: usize,
    pub m4: Option<M4Section>,
}

impl Default for HypothesesSection {
    fn default() -> Self {
        let d = HypothesisOptions::default();
        Self { sampling_box: d.sampling_box, samples: d.samples, m4: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// `default`, `empty` or `broken`.
    pub corpus: String,
    /// Subset of criteria; all of the corpus' criteria when absent.
    pub criteria: Option<Vec<u32>>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { corpus: "default".into(), criteria: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("run") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub hypotheses: HypothesesSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_nonlinearity() -> NonlinearitySpec {
    NonlinearitySpec::DoubleWell
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.method {
            self.solver.method = m;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
    }

    pub fn nonlinearity(&self) -> Result<NonlinearityDescriptor> {
        Ok(self.nonlinearity.build()?)
    }

    pub fn growth_exponent(&self) -> Result<f64> {
        Ok(match self.physics.r {
            Some(r) => r,
            None => self.nonlinearity()?.growth_exponent(),
        })
    }

    /// Checks `p ≥ 2` and, unless `allow_unverified` is set, the exponent
    /// condition relating `p`, the dimension and `r`.
    pub fn validate(&self, allow_unverified: bool) -> Result<()> {
        let p = self.physics.p;
        if !(p >= 2.0) {
            bail!("physics.p must be >= 2, got {p}");
        }
        let r = self.growth_exponent()?;
        let n = self.grid.nodes.len() as u32;
        if validate_h3(p, n, r) != Verdict::Pass && !allow_unverified {
            bail!("exponents p = {p}, r = {r} are not admissible in dimension {n} (pass --allow-unverified-exponents to run anyway)");
        }
        if !(self.time.dt > 0.0 && self.time.t_end > 0.0) {
            bail!("time.dt and time.t_end must be positive");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.time.t_end / self.time.dt).round().max(1.0) as usize
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::new(&self.grid.extents, &self.grid.nodes)?))
    }

    pub fn system(&self) -> Result<SystemConfig> {
        let grid = self.grid()?;
        let s = &self.solver;
        let mut cfg = SystemConfig::new(
            self.physics.latent_heat,
            self.physics.u0.to_field(&grid).context("physics.u0")?,
            self.physics.phi0.to_field(&grid).context("physics.phi0")?,
            self.physics.f.to_trajectory(&grid, self.time.dt, self.steps()).context("physics.f")?,
            self.nonlinearity()?,
        );
        cfg.p = self.physics.p;
        cfg.r = self.growth_exponent()?;
        cfg.outer = FixedPointConfig {
            schedule: s.schedule.clone(),
            damping: s.damping,
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            ..cfg.outer
        };
        cfg.inner = FixedPointConfig { tolerance: s.inner_tolerance, ..cfg.outer.clone() };
        cfg.scheme = ThetaScheme { theta: s.theta, tolerance: s.linear_tolerance, ..ThetaScheme::default() };
        cfg.corrector_sweeps = s.corrector_sweeps;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hypothesis_options(&self) -> HypothesisOptions {
        HypothesisOptions {
            sampling_box: self.hypotheses.sampling_box,
            samples: self.hypotheses.samples,
            p: self.physics.p,
            dimension: self.grid.nodes.len() as u32,
            m4: self.hypotheses.m4.as_ref().map(|m| M4Params {
                alpha: m.alpha,
                beta: m.beta,
                p: self.physics.p,
                r: m.r,
            }),
        }
    }

    pub fn corpus(&self) -> Result<CorpusSpec> {
        let mut spec = CorpusSpec::by_name(&self.verify.corpus)
            .with_context(|| format!("unknown corpus '{}' (expected default, empty or broken)", self.verify.corpus))?;
        if let Some(c) = &self.verify.criteria {
            if let Some(bad) = c.iter().find(|c| !(1..=10).contains(*c)) {
                bail!("criterion {bad} does not exist (1-10)");
            }
            spec.criteria = c.clone();
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        Ok(spec)
    }

    /// SHA-256 of the canonical JSON form, without the output section.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
