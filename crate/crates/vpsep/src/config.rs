//! TOML run configuration: one serializable source of truth per experiment.
//! Unknown keys are hard errors; every field has a default.

use crate::coeffs::{
    validate_assumptions, ClampedFunc, CoefficientSet, FuncSpec, PotentialSpec,
};
use crate::dynamics::{ModelKind, ModelParams};
use crate::error::{Result, VpsError};
use crate::grid::Grid;
use crate::state::InitialKind;
use crate::timestep::SchemeConfig;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { nx: 64, ny: 64, lx: 1.0, ly: 1.0 }
    }
}

/// One coefficient function: a constant or a clamped cubic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoeffConfig {
    pub constant: Option<f64>,
    pub cubic: Option<[f64; 4]>,
    pub lo: f64,
    pub hi: f64,
}

impl Default for CoeffConfig {
    fn default() -> Self {
        CoeffConfig { constant: Some(1.0), cubic: None, lo: -0.5, hi: 1.5 }
    }
}

impl CoeffConfig {
    fn build(&self, name: &str) -> Result<ClampedFunc> {
        let spec = match (self.constant, self.cubic) {
            (Some(c), None) => FuncSpec::Constant(c),
            (None, Some(c)) => FuncSpec::Cubic(c),
            (None, None) => {
                return Err(VpsError::Config(format!(
                    "coefficient {name}: set either constant or cubic"
                )))
            }
            (Some(_), Some(_)) => {
                return Err(VpsError::Config(format!(
                    "coefficient {name}: constant and cubic are mutually exclusive"
                )))
            }
        };
        ClampedFunc::new(spec, self.lo, self.hi)
            .map_err(|e| VpsError::Config(format!("coefficient {name}: {e}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub n: CoeffConfig,
    pub a: CoeffConfig,
    pub h: CoeffConfig,
    pub eta: CoeffConfig,
    pub tau_b: CoeffConfig,
    pub m_override: Option<CoeffConfig>,
}

impl CoefficientsConfig {
    pub fn build(&self) -> Result<CoefficientSet> {
        Ok(CoefficientSet {
            n: self.n.build("n")?,
            a: self.a.build("a")?,
            h: self.h.build("h")?,
            eta: self.eta.build("eta")?,
            tau_b: self.tau_b.build("tau_b")?,
            m_override: match &self.m_override {
                Some(c) => Some(c.build("m_override")?),
                None => None,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    pub family: String,
    /// Coefficients of x^i for the custom family (degree <= 4).
    pub coeffs: Vec<f64>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig { family: "ginzburg_landau".into(), coeffs: vec![] }
    }
}

impl PotentialConfig {
    pub fn build(&self) -> Result<PotentialSpec> {
        match self.family.as_str() {
            "ginzburg_landau" => Ok(PotentialSpec::ginzburg_landau()),
            "custom" => PotentialSpec::custom(&self.coeffs)
                .map_err(|e| VpsError::Config(format!("potential: {e}"))),
            other => Err(VpsError::Config(format!(
                "potential family must be ginzburg_landau or custom, got {other}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// "full" or "reduced".
    pub kind: String,
    pub c0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub penalty_margin: f64,
    pub dealias: bool,
    /// Skips the physical-assumption validation (analytic-oracle runs).
    pub test_mode: bool,
    pub coefficients: CoefficientsConfig,
    pub potential: PotentialConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: "full".into(),
            c0: 1e-3,
            eps1: 1e-3,
            eps2: 1e-3,
            penalty_margin: 0.5,
            dealias: true,
            test_mode: false,
            coefficients: CoefficientsConfig::default(),
            potential: PotentialConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeBlock {
    pub dt: f64,
    pub t_end: f64,
    pub cadence: usize,
    pub s_phi: f64,
    pub s_q: f64,
    /// Frozen implicit coefficients; when absent they are taken from the true
    /// coefficient maxima.
    pub m0: Option<f64>,
    pub a0: Option<f64>,
    pub eta0: Option<f64>,
    pub cfl: f64,
    pub max_steps: usize,
}

impl Default for SchemeBlock {
    fn default() -> Self {
        SchemeBlock {
            dt: 1e-3,
            t_end: 0.1,
            cadence: 10,
            s_phi: 0.0,
            s_q: 0.0,
            m0: None,
            a0: None,
            eta0: None,
            cfl: 0.25,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Initial condition: spinodal | taylor_green_mix | uniform_rest | manufactured.
    pub initial: String,
    pub seed: u64,
    /// Twin-run perturbation amplitude.
    pub eps: f64,
    /// Perturbation seed (independent from the initial-condition seed).
    pub perturbation_seed: u64,
    /// Sweep amplitudes.
    pub amplitudes: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            initial: "spinodal".into(),
            seed: 0,
            eps: 1e-3,
            perturbation_seed: 1,
            amplitudes: vec![1e-2, 1e-3, 1e-4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Also write final-state field snapshots.
    pub snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into(), snapshots: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub scheme: SchemeBlock,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
}

/// Parse a TOML document into a validated RunConfig. Unknown keys fail.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| VpsError::Config(format!("{e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical serialized form (defaults applied, keys ordered by the schema).
pub fn normalize(cfg: &RunConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}

impl RunConfig {
    pub fn initial_kind(&self) -> Result<InitialKind> {
        Ok(match self.experiment.initial.as_str() {
            "spinodal" => InitialKind::Spinodal,
            "taylor_green_mix" => InitialKind::TaylorGreenMix,
            "uniform_rest" => InitialKind::UniformRest,
            "manufactured" => InitialKind::Manufactured,
            other => {
                return Err(VpsError::Config(format!(
                    "unknown initial condition: {other}"
                )))
            }
        })
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        Ok(match self.model.kind.as_str() {
            "full" => ModelKind::Full,
            "reduced" => ModelKind::Reduced,
            other => return Err(VpsError::Config(format!("unknown model kind: {other}"))),
        })
    }

    /// Number of steps covering t_end at dt.
    pub fn n_steps(&self) -> usize {
        (self.scheme.t_end / self.scheme.dt).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
            .map_err(|e| VpsError::Config(format!("{e}")))?;
        if !(self.scheme.t_end > 0.0) {
            return Err(VpsError::Config(format!(
                "t_end must be > 0, got {}",
                self.scheme.t_end
            )));
        }
        if !(self.model.penalty_margin >= 0.0) {
            return Err(VpsError::Config("penalty_margin must be >= 0".into()));
        }
        for (name, v) in [
            ("c0", self.model.c0),
            ("eps1", self.model.eps1),
            ("eps2", self.model.eps2),
        ] {
            if !(v > 0.0) {
                return Err(VpsError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        self.initial_kind()?;
        self.model_kind()?;
        let coeffs = self.model.coefficients.build()?;
        let potential = self.model.potential.build()?;
        if !self.model.test_mode {
            let report = validate_assumptions(&coeffs, &potential);
            if !report.all_pass() {
                let failing: Vec<&str> = report
                    .clauses
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| c.name.as_str())
                    .collect();
                return Err(VpsError::Config(format!(
                    "assumption validation failed: {} (set model.test_mode = true for non-physical oracle runs)",
                    failing.join(", ")
                )));
            }
        }
        // a full scheme check (incl. frozen-coefficient dominance)
        let (_, _, scheme) = self.build_params()?;
        scheme.validate(&coeffs)?;
        if !(self.experiment.eps >= 0.0) {
            return Err(VpsError::Config("experiment.eps must be >= 0".into()));
        }
        if let Some(bad) = self.experiment.amplitudes.iter().find(|e| !(**e > 0.0)) {
            return Err(VpsError::Config(format!(
                "experiment.amplitudes must be > 0, got {bad}"
            )));
        }
        Ok(())
    }

    fn build_params(&self) -> Result<(ModelParams, CoefficientSet, SchemeConfig)> {
        let coeffs = self.model.coefficients.build()?;
        let potential = self.model.potential.build()?;
        let params = ModelParams {
            c0: self.model.c0,
            eps1: self.model.eps1,
            eps2: self.model.eps2,
            coeffs: coeffs.clone(),
            potential,
            dealias: self.model.dealias,
            model: self.model_kind()?,
        };
        let scheme = SchemeConfig {
            dt: self.scheme.dt,
            s_phi: self.scheme.s_phi,
            s_q: self.scheme.s_q,
            m0: self.scheme.m0.unwrap_or_else(|| coeffs.max_m()),
            a0: self.scheme.a0.unwrap_or_else(|| coeffs.max_a()),
            eta0: self.scheme.eta0.unwrap_or_else(|| coeffs.max_eta()),
            max_steps: self.scheme.max_steps,
            cadence: self.scheme.cadence,
            cfl: self.scheme.cfl,
        };
        Ok((params, coeffs, scheme))
    }

    /// Materialize the grid, model parameters, and scheme configuration.
    pub fn build(&self) -> Result<(Arc<Grid>, ModelParams, SchemeConfig)> {
        self.validate()?;
        let grid = Grid::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)?;
        let (params, _, scheme) = self.build_params()?;
        Ok((grid, params, scheme))
    }

    /// Penalty weight a = c4/2 + margin from the configured potential.
    pub fn penalty(&self) -> Result<f64> {
        let potential = self.model.potential.build()?;
        let c4 = crate::coeffs::compute_c4(&potential)
            .map_err(|e| VpsError::Config(format!("{e}")))?;
        crate::coeffs::min_penalty(c4, self.model.penalty_margin)
    }
}
