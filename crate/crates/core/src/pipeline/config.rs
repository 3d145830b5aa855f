use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::refine::RefinePolicy;
use super::rubric::RubricConfig;
use crate::error::{Error, Result};
use crate::evaluate::{
    AnalyticCp, AnalyticModel, CpEvaluator, Degenerate, Evaluator, MlpEvaluator, OperatorCpEvaluator,
    ProbabilisticEvaluator, Sigmas, SyntheticProbabilistic,
};
use crate::geometry::FlowConditions;
use crate::risk::RiskConfig;
use crate::sampling::{DesignSpace, SamplingStrategy};
use crate::score::{UtilityConfig, STAGE2_THRESHOLD, STAGE6_THRESHOLD};
use crate::sensitivity::{DEFAULT_BASE_N, DEFAULT_TOP_K};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    pub threshold: f64,
    pub top_k: usize,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            threshold: STAGE2_THRESHOLD,
            top_k: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage3Config {
    pub base_n: usize,
    /// Heuristics kept per metric.
    pub top_k: usize,
}

impl Default for Stage3Config {
    fn default() -> Self {
        Self {
            base_n: DEFAULT_BASE_N,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage5Config {
    pub top_k: usize,
    /// Stations per surface on generated Cp curves.
    pub cp_points: usize,
}

impl Default for Stage5Config {
    fn default() -> Self {
        Self {
            top_k: 50,
            cp_points: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage6Config {
    pub u_min: f64,
    pub cp_rating_min: u8,
}

impl Default for Stage6Config {
    fn default() -> Self {
        Self {
            u_min: STAGE6_THRESHOLD,
            cp_rating_min: 3,
        }
    }
}

/// Evaluator specifications, one per role.
///
/// * coefficient roles: `analytic` or `mlp:<path>`;
/// * probabilistic role: `synthetic`, `synthetic(σcd,σcl,σcm)`,
///   `degenerate` (analytic, zero spread) or `mlp:<path>`;
/// * Cp role: `analytic` or `operator:<path>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluatorBindings {
    pub deterministic: String,
    pub probabilistic: String,
    pub sensitivity: String,
    pub cp: String,
}

impl Default for EvaluatorBindings {
    fn default() -> Self {
        Self {
            deterministic: "analytic".into(),
            probabilistic: "synthetic".into(),
            sensitivity: "analytic".into(),
            cp: "analytic".into(),
        }
    }
}

/// Resolved evaluator instances.
#[derive(Clone)]
pub struct Evaluators {
    pub deterministic: Arc<dyn Evaluator>,
    pub probabilistic: Arc<dyn ProbabilisticEvaluator>,
    pub sensitivity: Arc<dyn Evaluator>,
    pub cp: Arc<dyn CpEvaluator>,
}

fn mlp_path(spec: &str) -> Option<&Path> {
    spec.strip_prefix("mlp:").map(Path::new)
}

fn parse_sigmas(spec: &str) -> Result<Sigmas> {
    let inner = spec
        .strip_prefix("synthetic(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Config(format!("malformed synthetic evaluator '{spec}'")))?;
    let vals: Vec<f64> = inner
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad sigma in '{spec}': {e}")))?;
    match vals.as_slice() {
        &[cd, cl, cm] => Ok(Sigmas { cd, cl, cm }),
        _ => Err(Error::Config(format!("'{spec}' needs three sigmas (cd, cl, cm)"))),
    }
}

pub fn resolve_deterministic(spec: &str) -> Result<Arc<dyn Evaluator>> {
    match spec.trim() {
        "analytic" => Ok(Arc::new(AnalyticModel::default())),
        s => match mlp_path(s) {
            Some(p) => Ok(Arc::new(MlpEvaluator::load(p)?)),
            None => Err(Error::Config(format!("unknown evaluator '{s}'"))),
        },
    }
}

pub fn resolve_probabilistic(spec: &str) -> Result<Arc<dyn ProbabilisticEvaluator>> {
    match spec.trim() {
        "synthetic" => Ok(Arc::new(SyntheticProbabilistic::new(
            AnalyticModel::default(),
            Sigmas::default(),
        )?)),
        "degenerate" => Ok(Arc::new(Degenerate(AnalyticModel::default()))),
        s if s.starts_with("synthetic(") => Ok(Arc::new(SyntheticProbabilistic::new(
            AnalyticModel::default(),
            parse_sigmas(s)?,
        )?)),
        s => match mlp_path(s) {
            Some(p) => Ok(Arc::new(MlpEvaluator::load(p)?)),
            None => Err(Error::Config(format!("unknown probabilistic evaluator '{s}'"))),
        },
    }
}

pub fn resolve_cp(spec: &str) -> Result<Arc<dyn CpEvaluator>> {
    match spec.trim() {
        "analytic" => Ok(Arc::new(AnalyticCp)),
        s => match s.strip_prefix("operator:") {
            Some(p) => Ok(Arc::new(OperatorCpEvaluator::load(Path::new(p))?)),
            None => Err(Error::Config(format!("unknown Cp evaluator '{s}'"))),
        },
    }
}

impl EvaluatorBindings {
    pub fn resolve(&self) -> Result<Evaluators> {
        Ok(Evaluators {
            deterministic: resolve_deterministic(&self.deterministic)?,
            probabilistic: resolve_probabilistic(&self.probabilistic)?,
            sensitivity: resolve_deterministic(&self.sensitivity)?,
            cp: resolve_cp(&self.cp)?,
        })
    }
}

/// Complete, serializable description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub flow: FlowConditions,
    pub n_initial: usize,
    pub sampling: SamplingStrategy,
    pub design_space: DesignSpace,
    pub utility: UtilityConfig,
    pub stage2: Stage2Config,
    pub stage3: Stage3Config,
    /// Risk filter; its `seed` is mixed with the run seed.
    pub stage4: RiskConfig,
    pub stage5: Stage5Config,
    pub stage6: Stage6Config,
    pub refine: RefinePolicy,
    pub rubric: RubricConfig,
    pub evaluators: EvaluatorBindings,
    /// Benchmark Cp curve (JSON list of points). The synthetic analytic
    /// benchmark is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark_cp: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            flow: FlowConditions::default(),
            n_initial: 1000,
            sampling: SamplingStrategy::default(),
            design_space: DesignSpace::default(),
            utility: UtilityConfig::default(),
            stage2: Stage2Config::default(),
            stage3: Stage3Config::default(),
            stage4: RiskConfig::default(),
            stage5: Stage5Config::default(),
            stage6: Stage6Config::default(),
            refine: RefinePolicy::default(),
            rubric: RubricConfig::default(),
            evaluators: EvaluatorBindings::default(),
            benchmark_cp: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks ranges and that every evaluator resolves.
    pub fn validate(&self) -> Result<()> {
        self.design_space.validate()?;
        self.utility.validate()?;
        self.stage4.validate()?;
        self.rubric.validate()?;
        self.refine.validate(&self.design_space)?;
        if self.n_initial == 0 {
            return Err(Error::Config("n_initial must be at least 1".into()));
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.stage2.threshold.is_finite() || !in_unit(self.stage6.u_min) {
            return Err(Error::Config(
                "utility thresholds must lie within the score range".into(),
            ));
        }
        if self.stage2.top_k == 0 || self.stage5.top_k == 0 {
            return Err(Error::Config("top_k values must be at least 1".into()));
        }
        if self.stage3.base_n < 2 {
            return Err(Error::Config("stage3.base_n must be at least 2".into()));
        }
        if !(1..=5).contains(&self.stage6.cp_rating_min) {
            return Err(Error::Config("cp_rating_min must lie in 1..=5".into()));
        }
        if self.stage5.cp_points < crate::evaluate::MIN_CP_POINTS {
            return Err(Error::Config("stage5.cp_points too small".into()));
        }
        let f = &self.flow;
        if !(f.ma.is_finite() && f.aoa_deg.is_finite() && f.re.is_finite()) || f.ma >= 1.0 || f.ma < 0.0 {
            return Err(Error::Config("flow conditions must be finite and subsonic".into()));
        }
        self.evaluators.resolve()?;
        Ok(())
    }
}
