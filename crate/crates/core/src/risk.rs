//! Lower-tail conditional value-at-risk on lift draws and the risk filter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{Metric, ProbabilisticEvaluator};
use crate::sampling::{CandidateStatus, DesignCandidate, DesignSet, Provenance};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    /// Confidence level; the tail holds the worst `1 − alpha` fraction.
    pub alpha: f64,
    /// Minimum acceptable lower-tail mean of CL.
    pub var_target_cl: f64,
    /// Draws per design.
    pub m: usize,
    pub seed: u64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            var_target_cl: 0.70,
            m: 200,
            seed: 0,
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.m < 2 {
            return Err(Error::Config(format!(
                "risk draws m must be at least 2, got {}",
                self.m
            )));
        }
        if tail_size(self.alpha, self.m) == 0 {
            return Err(Error::Config(format!(
                "alpha {} leaves an empty tail for m = {}",
                self.alpha, self.m
            )));
        }
        if !self.var_target_cl.is_finite() {
            return Err(Error::Config("var_target_cl must be finite".into()));
        }
        Ok(())
    }
}

/// Empirical lower tail of a sample vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub tail_mean: f64,
    pub var_quantile: f64,
    pub k: usize,
}

fn tail_size(alpha: f64, m: usize) -> usize {
    // Guards against 0.3 * 10 = 2.9999999999999996.
    ((1.0 - alpha) * m as f64 + 1e-9).floor() as usize
}

/// Sorts ascending, takes `k = ⌊(1−α)m⌋` smallest values; returns their mean
/// and the k-th smallest value.
pub fn empirical_cvar(samples: &[f64], alpha: f64) -> Result<TailEstimate> {
    if samples.len() < 2 {
        return Err(Error::Input(format!("need at least 2 samples, got {}", samples.len())));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite sample".into()));
    }
    let k = tail_size(alpha, samples.len());
    if k == 0 {
        return Err(Error::Config(format!(
            "alpha {alpha} leaves an empty tail for {} samples",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let tail_mean = lo + sorted[..k].iter().map(|v| v - lo).sum::<f64>() / k as f64;
    Ok(TailEstimate {
        tail_mean,
        var_quantile: sorted[k - 1],
        k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub tail_mean: f64,
    pub var_quantile: f64,
    pub k: usize,
    pub pass: bool,
    pub mean: f64,
    pub std: f64,
    pub alpha: f64,
    pub target: f64,
    /// Seed that regenerates `samples`.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<f64>,
}

/// Seed for one design's draws; independent of set order.
pub fn design_seed(run_seed: u64, id: &str) -> u64 {
    derive_seed(run_seed, &format!("risk/{id}"))
}

/// Draws and assesses one candidate.
pub fn assess(
    candidate: &DesignCandidate,
    evaluator: &dyn ProbabilisticEvaluator,
    cfg: &RiskConfig,
) -> Result<RiskAssessment> {
    let dist = evaluator.predict(&candidate.cst(), &candidate.flow)?;
    let seed = design_seed(cfg.seed, candidate.id.as_str());
    let draws = dist.draw(Metric::Cl, cfg.m, seed);
    let tail = empirical_cvar(&draws, cfg.alpha)?;
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let std = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(RiskAssessment {
        tail_mean: tail.tail_mean,
        var_quantile: tail.var_quantile,
        k: tail.k,
        pass: tail.tail_mean >= cfg.var_target_cl,
        mean,
        std,
        alpha: cfg.alpha,
        target: cfg.var_target_cl,
        seed,
        samples: draws,
    })
}

/// Filter result; `excluded` carries failed and erroring candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskOutcome {
    pub kept: DesignSet,
    pub excluded: Vec<DesignCandidate>,
}

/// Keeps each candidate whose lower-tail CL mean reaches the target.
///
/// Every candidate, kept or not, is annotated with its assessment (or the
/// evaluator error). Assessment runs in parallel; results do not depend on
/// thread count because draws are seeded per id.
pub fn risk_filter(set: &DesignSet, evaluator: &dyn ProbabilisticEvaluator, cfg: &RiskConfig) -> Result<RiskOutcome> {
    cfg.validate()?;
    let assessed: Vec<DesignCandidate> = set
        .members
        .par_iter()
        .map(|m| {
            let mut c = m.clone();
            match assess(m, evaluator, cfg) {
                Ok(a) => {
                    if !a.pass {
                        c.status = CandidateStatus::Filtered;
                        c.evaluations.error = None;
                    }
                    c.evaluations.risk = Some(a);
                }
                Err(e) => {
                    c.status = CandidateStatus::Filtered;
                    c.evaluations.risk = None;
                    c.evaluations.error = Some(format!("risk assessment failed: {e}"));
                }
            }
            c
        })
        .collect();
    let (kept, excluded): (Vec<_>, Vec<_>) = assessed
        .into_iter()
        .partition(|c| c.evaluations.risk.as_ref().is_some_and(|r| r.pass));
    let detail = format!(
        "lower-tail CVaR of CL at alpha {} over {} draws >= {}",
        cfg.alpha, cfg.m, cfg.var_target_cl
    );
    Ok(RiskOutcome {
        kept: DesignSet::new(set.stage + 1, kept, Provenance::new("risk_filter", detail))?,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub id: String,
    pub mean: f64,
    pub std: f64,
    pub var_quantile: f64,
    pub tail_mean: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
    /// Raw CL draws per id, for histograms.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<(String, Vec<f64>)>,
}

/// Tabulates assessed candidates; unassessed ones are skipped.
pub fn risk_report<'a>(candidates: impl IntoIterator<Item = &'a DesignCandidate>, with_samples: bool) -> RiskReport {
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for c in candidates {
        if let Some(r) = &c.evaluations.risk {
            rows.push(RiskRow {
                id: c.id.to_string(),
                mean: r.mean,
                std: r.std,
                var_quantile: r.var_quantile,
                tail_mean: r.tail_mean,
                pass: r.pass,
            });
            if with_samples {
                samples.push((c.id.to_string(), r.samples.clone()));
            }
        }
    }
    RiskReport { rows, samples }
}

impl RiskReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(["id", "mean", "std", "var_quantile", "tail_mean", "pass"])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
