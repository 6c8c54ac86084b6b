//! Run configuration (JSON). Every section is optional; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::energy::EnergyContext;
use crate::equilibrium::unstable_mode_seed;
use crate::error::{Error, Result};
use crate::evolution::StepConfig;
use crate::mesh::{interpolate, FemVector, FracMesh};
use crate::operator::{FracExponents, OperatorSet};
use crate::potential::Potential;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub a: f64,
    pub b: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { a: -1.0, b: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub n_elems: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { n_elems: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FracConfig {
    pub s: f64,
    pub sigma: f64,
}

impl Default for FracConfig {
    fn default() -> Self {
        Self { s: 0.5, sigma: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKindConfig {
    DoubleWell,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialConfig {
    pub kind: PotentialKindConfig,
    /// Double-well exponent.
    pub m: f64,
    /// `None` picks the smallest admissible value for the kind.
    pub lambda: Option<f64>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            kind: PotentialKindConfig::DoubleWell,
            m: 4.0,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    /// `amplitude · sin(wavenumber · π x)`.
    Sin,
    /// `amplitude · sin(π (x - a) / (b - a))`.
    Bump,
    /// I.i.d. standard normal nodal values times `amplitude`.
    Random,
    /// Lowest unstable mode of the linearization at zero, scaled to max
    /// norm `amplitude`.
    UnstableMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub wavenumber: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialKind::Sin,
            amplitude: 0.1,
            wavenumber: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub tau: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            tau: 1e-2,
            t_end: 1.0,
            record_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YosidaConfig {
    pub enabled: bool,
    pub epsilon: f64,
}

impl Default for YosidaConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// `None` uses `1e-8 · max |μ|`.
    pub kernel_tol: Option<f64>,
    /// `None` uses the report's hint (1/2 when the kernel is trivial).
    pub lsi_theta: Option<f64>,
    pub lsi_delta: f64,
    pub lsi_samples: usize,
    pub poincare_trials: usize,
    pub poincare_localized: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            kernel_tol: None,
            lsi_theta: None,
            lsi_delta: 1e-2,
            lsi_samples: 500,
            poincare_trials: 1000,
            poincare_localized: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write binary dumps of `A_s` and `A_σ` from `spectrum`.
    pub dump_matrices: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            dump_matrices: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub mesh: MeshConfig,
    pub frac: FracConfig,
    pub potential: PotentialConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    pub newton: NewtonConfig,
    pub yosida: YosidaConfig,
    pub seeds: SeedConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

fn range(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(range(key, format!("must be a finite positive number, got {v}")))
    }
}

fn open_unit(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(range(key, format!("must lie in (0, 1), got {v}")))
    }
}

/// Reads and validates a config file. A missing file is `MissingInput`.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.display().to_string())
        } else {
            Error::Io(e)
        }
    })?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Config(format!(
            "{path}: {inner} (line {}, column {})",
            inner.line(),
            inner.column()
        ))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.domain.a.is_finite() && self.domain.b.is_finite()) {
            return Err(range("domain", "endpoints must be finite"));
        }
        if self.domain.a >= self.domain.b {
            return Err(range(
                "domain.b",
                format!("must exceed domain.a = {}, got {}", self.domain.a, self.domain.b),
            ));
        }
        if self.mesh.n_elems < 2 {
            return Err(range("mesh.n_elems", format!("must be >= 2, got {}", self.mesh.n_elems)));
        }
        open_unit("frac.s", self.frac.s)?;
        open_unit("frac.sigma", self.frac.sigma)?;
        if self.potential.kind == PotentialKindConfig::DoubleWell && !(self.potential.m >= 2.0 && self.potential.m.is_finite()) {
            return Err(range("potential.m", format!("must be >= 2, got {}", self.potential.m)));
        }
        if let Some(l) = self.potential.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(range("potential.lambda", format!("must be >= 0, got {l}")));
            }
        }
        if !self.initial.amplitude.is_finite() {
            return Err(range("initial.amplitude", "must be finite"));
        }
        if !self.initial.wavenumber.is_finite() {
            return Err(range("initial.wavenumber", "must be finite"));
        }
        positive("time.tau", self.time.tau)?;
        positive("time.t_end", self.time.t_end)?;
        if self.time.record_stride == 0 {
            return Err(range("time.record_stride", "must be >= 1"));
        }
        positive("newton.tol", self.newton.tol)?;
        if self.newton.max_iter == 0 {
            return Err(range("newton.max_iter", "must be >= 1"));
        }
        positive("yosida.epsilon", self.yosida.epsilon)?;
        if let Some(t) = self.analysis.kernel_tol {
            positive("analysis.kernel_tol", t)?;
        }
        if let Some(t) = self.analysis.lsi_theta {
            if !(t > 0.0 && t < 1.0) {
                return Err(range("analysis.lsi_theta", format!("must lie in (0, 1), got {t}")));
            }
        }
        positive("analysis.lsi_delta", self.analysis.lsi_delta)?;
        if self.analysis.lsi_samples == 0 {
            return Err(range("analysis.lsi_samples", "must be >= 1"));
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<FracMesh> {
        FracMesh::uniform(self.domain.a, self.domain.b, self.mesh.n_elems)
    }

    pub fn operators(&self) -> Result<OperatorSet> {
        OperatorSet::new(self.mesh()?, FracExponents::new(self.frac.s, self.frac.sigma)?)
    }

    pub fn potential(&self) -> Result<Potential> {
        let base = match self.potential.kind {
            PotentialKindConfig::DoubleWell => Potential::double_well(self.potential.m)?,
            PotentialKindConfig::Zero => Potential::zero(),
        };
        match self.potential.lambda {
            Some(l) => base.with_lambda(l),
            None => Ok(base),
        }
    }

    pub fn context(&self) -> Result<EnergyContext> {
        EnergyContext::new(Arc::new(self.operators()?), self.potential()?)
    }

    pub fn step_config(&self) -> Result<StepConfig> {
        let mut cfg = StepConfig::new(self.time.tau)?;
        cfg.newton_tol = self.newton.tol;
        cfg.newton_max = self.newton.max_iter;
        cfg.use_yosida = self.yosida.enabled.then_some(self.yosida.epsilon);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seeds.rng_seed)
    }

    /// Initial datum; random draws come from a generator seeded with
    /// `seeds.rng_seed`.
    pub fn initial_state(&self, ctx: &EnergyContext) -> Result<FemVector> {
        let mesh = ctx.mesh();
        let amp = self.initial.amplitude;
        match self.initial.kind {
            InitialKind::Zero => Ok(FemVector::zeros(mesh.dof_count())),
            InitialKind::Sin => {
                let k = self.initial.wavenumber * std::f64::consts::PI;
                interpolate(mesh, |x| amp * (k * x).sin())
            }
            InitialKind::Bump => {
                let (a, b) = (mesh.a(), mesh.b());
                interpolate(mesh, |x| amp * (std::f64::consts::PI * (x - a) / (b - a)).sin())
            }
            InitialKind::Random => {
                let mut rng = self.rng();
                Ok(FemVector::from_fn(mesh.dof_count(), |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    amp * z
                }))
            }
            InitialKind::UnstableMode => unstable_mode_seed(ctx, amp),
        }
    }

    pub fn output_dir(&self, overridden: Option<&Path>) -> PathBuf {
        overridden.map_or_else(|| self.output.dir.clone(), Path::to_path_buf)
    }
}
