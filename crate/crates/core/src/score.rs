//! Utility scoring and utility-based filtering.
//!
//! ```text
//! U(CL) = −5                                   CL < 0.5
//!       = √((min(max(CL, 0.5), 1.2) − 0.5)/0.7) otherwise
//! U(CD) = exp(−65·CD)
//! U(CM) = (max(min(CM, 0), −0.3) + 0.3)/0.3
//! U     = 0.5·U(CL) + 0.3·U(CD) + 0.2·U(CM)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::CoefficientPrediction;
use crate::sampling::{id_order, CandidateStatus, DesignCandidate, DesignSet, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityConfig {
    pub w_cl: f64,
    pub w_cd: f64,
    pub w_cm: f64,
    pub cl_floor: f64,
    pub cl_cap: f64,
    pub cl_penalty: f64,
    pub cd_rate: f64,
    pub cm_floor: f64,
}

/// Minimum `u_comb` after the first utility filter.
pub const STAGE2_THRESHOLD: f64 = 0.40;
/// Minimum `u_comb` for a valid final design.
pub const STAGE6_THRESHOLD: f64 = 0.41;

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            w_cl: 0.5,
            w_cd: 0.3,
            w_cm: 0.2,
            cl_floor: 0.5,
            cl_cap: 1.2,
            cl_penalty: -5.0,
            cd_rate: 65.0,
            cm_floor: -0.30,
        }
    }
}

impl UtilityConfig {
    pub fn validate(&self) -> Result<()> {
        let sum = self.w_cl + self.w_cd + self.w_cm;
        if (sum - 1.0).abs() > 1e-9 || [self.w_cl, self.w_cd, self.w_cm].iter().any(|w| *w < 0.0) {
            return Err(Error::Config(format!(
                "utility weights must be non-negative and sum to 1 (sum {sum})"
            )));
        }
        if !(self.cl_cap > self.cl_floor) || !(self.cm_floor < 0.0) || !(self.cd_rate > 0.0) {
            return Err(Error::Config("utility shape constants are inconsistent".into()));
        }
        Ok(())
    }
}

/// Reference airfoil performance at the design condition, with the
/// published utilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkReference {
    pub name: &'static str,
    pub prediction: CoefficientPrediction,
    pub u_cd: f64,
    pub u_cl: f64,
    pub u_cm: f64,
    pub u_comb: f64,
}

/// RAE2822 at Ma 0.6, AoA 2.5°, Re 6.3e6.
pub const RAE2822_BENCHMARK: BenchmarkReference = BenchmarkReference {
    name: "RAE2822",
    prediction: CoefficientPrediction {
        cd: 0.010,
        cl: 0.522,
        cm: -0.073,
    },
    u_cd: 0.518,
    u_cl: 0.177,
    u_cm: 0.7566,
    u_comb: 0.3955,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityScore {
    pub u_cl: f64,
    pub u_cd: f64,
    pub u_cm: f64,
    pub u_comb: f64,
}

pub fn utility_cl(cl: f64, cfg: &UtilityConfig) -> f64 {
    if cl < cfg.cl_floor {
        return cfg.cl_penalty;
    }
    ((cl.clamp(cfg.cl_floor, cfg.cl_cap) - cfg.cl_floor) / (cfg.cl_cap - cfg.cl_floor)).sqrt()
}

pub fn utility_cd(cd: f64, cfg: &UtilityConfig) -> f64 {
    (-cfg.cd_rate * cd).exp()
}

pub fn utility_cm(cm: f64, cfg: &UtilityConfig) -> f64 {
    (cm.clamp(cfg.cm_floor, 0.0) - cfg.cm_floor) / -cfg.cm_floor
}

pub fn utility_combined(pred: &CoefficientPrediction, cfg: &UtilityConfig) -> UtilityScore {
    let u_cl = utility_cl(pred.cl, cfg);
    let u_cd = utility_cd(pred.cd, cfg);
    let u_cm = utility_cm(pred.cm, cfg);
    UtilityScore {
        u_cl,
        u_cd,
        u_cm,
        u_comb: cfg.w_cl * u_cl + cfg.w_cd * u_cd + cfg.w_cm * u_cm,
    }
}

/// Scores every member that carries a point prediction.
pub fn score_set(set: &mut DesignSet, cfg: &UtilityConfig) {
    for m in &mut set.members {
        if let Some(p) = m.evaluations.prediction {
            m.evaluations.utility = Some(utility_combined(&p, cfg));
        }
    }
}

/// Members ordered by descending `u_comb`, ties by ascending id.
pub fn rank_by_utility(members: &[DesignCandidate]) -> Result<Vec<DesignCandidate>> {
    let mut ranked = members.to_vec();
    for m in &ranked {
        if m.u_comb().is_none() {
            return Err(Error::State(format!("candidate {} has no utility score", m.id)));
        }
    }
    ranked.sort_by(|a, b| {
        b.u_comb()
            .unwrap()
            .total_cmp(&a.u_comb().unwrap())
            .then_with(|| id_order(&a.id, &b.id))
    });
    Ok(ranked)
}

/// Outcome of a filter: survivors plus everything removed.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: DesignSet,
    pub removed: Vec<DesignCandidate>,
}

/// Keeps members with `u_comb ≥ threshold`, then the `top_k` best of those.
///
/// Survivors keep their original relative order, so re-applying the filter to
/// its own output changes nothing.
pub fn utility_filter(set: &DesignSet, threshold: f64, top_k: Option<usize>) -> Result<FilterOutcome> {
    let ranked = rank_by_utility(&set.members)?;
    let passing: Vec<&DesignCandidate> = ranked.iter().filter(|m| m.u_comb().unwrap() >= threshold).collect();
    let limit = top_k.unwrap_or(usize::MAX);
    let keep: std::collections::HashSet<_> = passing.iter().take(limit).map(|m| m.id.clone()).collect();
    let mut kept = Vec::with_capacity(keep.len());
    let mut removed = Vec::new();
    for m in &set.members {
        if keep.contains(&m.id) {
            kept.push(m.clone());
        } else {
            let mut r = m.clone();
            r.status = CandidateStatus::Filtered;
            removed.push(r);
        }
    }
    let detail = match top_k {
        Some(k) => format!("u_comb >= {threshold}, top {k}"),
        None => format!("u_comb >= {threshold}"),
    };
    Ok(FilterOutcome {
        kept: DesignSet::new(set.stage + 1, kept, Provenance::new("utility_filter", detail))?,
        removed,
    })
}
