//! The individual stage transitions. Each is a pure function of its inputs;
//! persistence and sequencing live in [`super::run`].

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Evaluators, RunConfig};
use super::refine::{plan_steps, refine, refine_candidate, Directive};
use super::rubric::rate_cp;
use crate::error::{Error, Result};
use crate::evaluate::{analytic_cp, CpCurve, CpPoint, Evaluator, ProbabilisticEvaluator};
use crate::geometry::{CstParams, N_CST};
use crate::risk::{empirical_cvar, risk_filter, RiskConfig, RiskOutcome};
use crate::sampling::{sample, CandidateStatus, DesignCandidate, DesignId, DesignSet, Provenance, Verdict};
use crate::score::{
    rank_by_utility, utility_combined, utility_filter, FilterOutcome, UtilityConfig, RAE2822_BENCHMARK,
};
use crate::sensitivity::{run_sensitivity, SensitivityReport};

pub const RUBRIC_ACTOR: &str = "rubric";

/// Attaches point predictions and utilities; any evaluator failure aborts.
pub fn evaluate_set(set: &mut DesignSet, evaluator: &dyn Evaluator, utility: &UtilityConfig) -> Result<()> {
    let preds = set
        .members
        .par_iter()
        .map(|m| {
            evaluator
                .evaluate(&m.cst(), &m.flow)
                .map_err(|e| Error::Model(format!("evaluating {}: {e}", m.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (m, p) in set.members.iter_mut().zip(preds) {
        m.evaluations.prediction = Some(p);
        m.evaluations.utility = Some(utility_combined(&p, utility));
    }
    Ok(())
}

/// Attaches distributions, their means as point predictions, and utilities.
pub fn evaluate_set_probabilistic(
    set: &mut DesignSet,
    evaluator: &dyn ProbabilisticEvaluator,
    utility: &UtilityConfig,
) -> Result<()> {
    let dists = set
        .members
        .par_iter()
        .map(|m| {
            evaluator
                .predict(&m.cst(), &m.flow)
                .map_err(|e| Error::Model(format!("evaluating {}: {e}", m.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (m, d) in set.members.iter_mut().zip(dists) {
        let p = d.mean();
        m.evaluations.distribution = Some(d);
        m.evaluations.prediction = Some(p);
        m.evaluations.utility = Some(utility_combined(&p, utility));
    }
    Ok(())
}

/// The run's risk configuration with its seed tied to the run seed.
pub fn risk_config(cfg: &RunConfig) -> RiskConfig {
    RiskConfig {
        seed: crate::seed::derive_seed(cfg.seed, &format!("risk/{}", cfg.stage4.seed)),
        ..cfg.stage4
    }
}

/// Benchmark Cp: the configured curve file, or the analytic curve of the
/// centre of the default box (a synthetic RAE2822-like section).
pub fn benchmark_curve(cfg: &RunConfig) -> Result<CpCurve> {
    match &cfg.benchmark_cp {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let points: Vec<CpPoint> =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("benchmark Cp: {e}")))?;
            CpCurve::new(points)
        }
        None => {
            let c = crate::sampling::DesignSpace::default().center();
            let mut v = [0.0; N_CST];
            v.copy_from_slice(&c);
            analytic_cp(&CstParams::from_vector(&v), &cfg.flow, cfg.stage5.cp_points)
        }
    }
}

pub struct Stage2Outcome {
    pub generated: DesignSet,
    pub filtered: FilterOutcome,
}

/// Samples `n_initial` designs, scores them and applies the utility filter.
pub fn stage2_generate_and_filter(cfg: &RunConfig, ev: &Evaluators) -> Result<Stage2Outcome> {
    let mut generated = sample(&cfg.design_space, cfg.n_initial, cfg.sampling, cfg.flow, cfg.seed)?;
    generated.stage = 1;
    evaluate_set(&mut generated, ev.deterministic.as_ref(), &cfg.utility)?;
    let filtered = utility_filter(&generated, cfg.stage2.threshold, Some(cfg.stage2.top_k))?;
    Ok(Stage2Outcome { generated, filtered })
}

pub fn stage3_sensitivity(cfg: &RunConfig, ev: &Evaluators) -> Result<SensitivityReport> {
    run_sensitivity(
        &cfg.design_space,
        ev.sensitivity.as_ref(),
        &cfg.flow,
        cfg.stage3.base_n,
        crate::seed::derive_seed(cfg.seed, "sensitivity"),
        cfg.stage3.top_k,
    )
}

/// Refines the stage-2 survivors and scores the children.
pub fn stage4_refine(
    cfg: &RunConfig,
    ev: &Evaluators,
    set: &DesignSet,
    report: &SensitivityReport,
    next_id: &mut u64,
) -> Result<DesignSet> {
    let mut children = refine(set, report, &cfg.refine, &cfg.design_space, next_id)?;
    evaluate_set(&mut children, ev.deterministic.as_ref(), &cfg.utility)?;
    Ok(children)
}

pub fn stage4_risk(cfg: &RunConfig, ev: &Evaluators, set: &DesignSet) -> Result<RiskOutcome> {
    risk_filter(set, ev.probabilistic.as_ref(), &risk_config(cfg))
}

pub struct Stage5Outcome {
    pub set: DesignSet,
    /// Children that failed the risk filter or fell outside the top k.
    pub removed: Vec<DesignCandidate>,
}

/// Second refinement, probabilistic scoring, risk filter, utility ranking,
/// top-k cut and Cp generation. Survivors are ordered by descending `u_comb`.
pub fn stage5_refine_rank_cp(
    cfg: &RunConfig,
    ev: &Evaluators,
    set: &DesignSet,
    report: &SensitivityReport,
    next_id: &mut u64,
) -> Result<Stage5Outcome> {
    let mut children = refine(set, report, &cfg.refine, &cfg.design_space, next_id)?;
    evaluate_set_probabilistic(&mut children, ev.probabilistic.as_ref(), &cfg.utility)?;
    let risk = risk_filter(&children, ev.probabilistic.as_ref(), &risk_config(cfg))?;
    let ranked = rank_by_utility(&risk.kept.members)?;
    let mut removed = risk.excluded;
    let mut kept: Vec<DesignCandidate> = Vec::with_capacity(cfg.stage5.top_k.min(ranked.len()));
    for (k, mut m) in ranked.into_iter().enumerate() {
        if k < cfg.stage5.top_k {
            kept.push(m);
        } else {
            m.status = CandidateStatus::Filtered;
            removed.push(m);
        }
    }
    attach_cp(&mut kept, cfg, ev)?;
    Ok(Stage5Outcome {
        set: DesignSet::new(
            set.stage + 1,
            kept,
            Provenance::new(
                "refine_rank_cp",
                format!(
                    "{}; risk filter; top {} by u_comb",
                    children.provenance.detail, cfg.stage5.top_k
                ),
            ),
        )?,
        removed,
    })
}

fn attach_cp(members: &mut [DesignCandidate], cfg: &RunConfig, ev: &Evaluators) -> Result<()> {
    let curves = members
        .par_iter()
        .map(|m| ev.cp.cp_curve(&m.cst(), &m.flow, cfg.stage5.cp_points))
        .collect::<Result<Vec<_>>>()?;
    for (m, c) in members.iter_mut().zip(curves) {
        m.evaluations.cp = Some(c);
    }
    Ok(())
}

/// Whether a candidate meets the thresholds no reviewer may waive.
pub fn meets_hard_constraints(c: &DesignCandidate, cfg: &RunConfig) -> std::result::Result<(), String> {
    let u = c.u_comb().ok_or("no utility score")?;
    if u < cfg.stage6.u_min {
        return Err(format!("u_comb {u:.4} below {}", cfg.stage6.u_min));
    }
    match &c.evaluations.risk {
        Some(r) if r.pass => Ok(()),
        Some(r) => Err(format!("tail-mean CL {:.4} below {}", r.tail_mean, r.target)),
        None => Err("no risk assessment".into()),
    }
}

fn assessment_text(c: &DesignCandidate, cfg: &RunConfig, valid: bool) -> String {
    let b = &RAE2822_BENCHMARK;
    let mut s = String::new();
    if let Some(p) = c.evaluations.prediction {
        let _ = write!(
            s,
            "{}: CL {:.3} (benchmark {:.3}), CD {:.4} ({:.3}), CM {:.3} ({:.3}). ",
            c.id, p.cl, b.prediction.cl, p.cd, b.prediction.cd, p.cm, b.prediction.cm
        );
    }
    if let Some(u) = c.evaluations.utility {
        let _ = write!(
            s,
            "Utility {:.4} vs benchmark {:.4} (threshold {}). ",
            u.u_comb, b.u_comb, cfg.stage6.u_min
        );
    }
    if let Some(r) = &c.evaluations.risk {
        let _ = write!(
            s,
            "Lower-tail CL mean {:.4} (target {}, {}). ",
            r.tail_mean,
            r.target,
            if r.pass { "pass" } else { "fail" }
        );
    }
    if let Some(r) = &c.evaluations.rating {
        let _ = write!(s, "Pressure rating: {}; {}. ", r.rating, r.notes.join("; "));
    }
    let _ = write!(s, "Valid: {}", if valid { "True" } else { "False" });
    s
}

/// Rubric verdict for one candidate given its utility and rating.
pub fn verdict(u_comb: f64, rating: u8, cfg: &RunConfig) -> bool {
    u_comb >= cfg.stage6.u_min && rating >= cfg.stage6.cp_rating_min
}

/// Rates each member's Cp against the benchmark and marks it valid or
/// invalid. Members keep their position; the set is the review queue.
pub fn stage6_review(cfg: &RunConfig, set: &DesignSet, benchmark: &CpCurve) -> Result<DesignSet> {
    let mut out = set.clone();
    out.stage = set.stage + 1;
    out.provenance = Provenance::new(
        "review",
        format!(
            "u_comb >= {} and Cp rating >= {}",
            cfg.stage6.u_min, cfg.stage6.cp_rating_min
        ),
    );
    review_members(cfg, &mut out.members, benchmark)?;
    Ok(out)
}

fn review_members(cfg: &RunConfig, members: &mut [DesignCandidate], benchmark: &CpCurve) -> Result<()> {
    for m in members {
        let curve = m
            .evaluations
            .cp
            .as_ref()
            .ok_or_else(|| Error::State(format!("candidate {} has no Cp curve", m.id)))?;
        let rating = rate_cp(curve, benchmark, &cfg.rubric)?;
        let u = m
            .u_comb()
            .ok_or_else(|| Error::State(format!("candidate {} has no utility score", m.id)))?;
        let valid = verdict(u, rating.rating, cfg) && meets_hard_constraints(m, cfg).is_ok();
        m.evaluations.rating = Some(rating);
        m.status = if valid {
            CandidateStatus::Valid
        } else {
            CandidateStatus::Invalid
        };
        m.evaluations.assessment = Some(assessment_text(m, cfg, valid));
        m.evaluations.verdict = Some(Verdict {
            valid,
            actor: RUBRIC_ACTOR.into(),
            note: String::new(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Valid,
    Invalid,
}

/// A reviewer's ruling on one queued candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub candidate: DesignId,
    pub verdict: VerdictKind,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub directives: Vec<Directive>,
    #[serde(default = "default_actor")]
    pub actor: String,
    /// Filled in when the decision is logged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<chrono::DateTime<chrono::Utc>>,
}

fn default_actor() -> String {
    "human".into()
}

/// Applies a reviewer verdict to a queued member. A valid ruling cannot
/// lift a candidate over the utility or risk thresholds; such rulings are
/// recorded but leave the candidate invalid.
pub fn apply_decision(cfg: &RunConfig, member: &mut DesignCandidate, d: &ReviewDecision) {
    let (valid, note) = match d.verdict {
        VerdictKind::Invalid => (false, d.note.clone()),
        VerdictKind::Valid => match meets_hard_constraints(member, cfg) {
            Ok(()) => (true, d.note.clone()),
            Err(why) => (false, format!("override refused: {why}. {}", d.note).trim().to_string()),
        },
    };
    member.status = if valid {
        CandidateStatus::Valid
    } else {
        CandidateStatus::Invalid
    };
    member.evaluations.verdict = Some(Verdict {
        valid,
        actor: d.actor.clone(),
        note,
    });
}

pub struct IterateOutcome {
    pub set: DesignSet,
    pub removed: Vec<DesignCandidate>,
}

/// Builds the next review set from the current one and the decisions made
/// on it.
///
/// * valid without directives: carried over unchanged;
/// * any verdict with directives: replaced by a refined child, which is
///   re-scored, risk-filtered, given a Cp curve and re-reviewed;
/// * invalid without directives: dropped.
///
/// Undecided members keep their rubric verdict.
pub fn iterate_review(
    cfg: &RunConfig,
    ev: &Evaluators,
    set: &DesignSet,
    decisions: &[ReviewDecision],
    report: &SensitivityReport,
    benchmark: &CpCurve,
    next_id: &mut u64,
) -> Result<IterateOutcome> {
    let stage = set.stage + 1;
    let mut carried = Vec::new();
    let mut removed = Vec::new();
    let mut parents: Vec<(DesignCandidate, Vec<Directive>)> = Vec::new();
    for m in &set.members {
        let directives: Vec<Directive> = decisions
            .iter()
            .filter(|d| d.candidate == m.id)
            .flat_map(|d| d.directives.iter().cloned())
            .collect();
        if !directives.is_empty() {
            parents.push((m.clone(), directives));
        } else if m.status == CandidateStatus::Valid {
            carried.push(m.clone());
        } else {
            let mut r = m.clone();
            r.status = CandidateStatus::Filtered;
            removed.push(r);
        }
    }
    let mut children = Vec::with_capacity(parents.len());
    for (p, directives) in &parents {
        let policy = super::refine::RefinePolicy {
            top_params: 0,
            ..cfg.refine.clone()
        };
        let plan = plan_steps(report, &policy, &cfg.design_space, directives)?;
        let id = DesignId::from_index(*next_id);
        *next_id += 1;
        children.push(refine_candidate(p, &plan, &cfg.design_space, id, stage));
    }
    let mut child_set = DesignSet::new(stage, children, Provenance::new("directives", ""))?;
    evaluate_set_probabilistic(&mut child_set, ev.probabilistic.as_ref(), &cfg.utility)?;
    let risk = risk_filter(&child_set, ev.probabilistic.as_ref(), &risk_config(cfg))?;
    removed.extend(risk.excluded);
    let mut fresh = risk.kept.members;
    attach_cp(&mut fresh, cfg, ev)?;
    review_members(cfg, &mut fresh, benchmark)?;
    let n_children = fresh.len();
    carried.extend(fresh);
    let detail = format!(
        "{} decisions; {} carried, {} refined, {} dropped",
        decisions.len(),
        carried.len() - n_children,
        n_children,
        removed.len()
    );
    Ok(IterateOutcome {
        set: DesignSet::new(stage, carried, Provenance::new("iterate_review", detail))?,
        removed,
    })
}

/// Recomputes utility and tail mean for each valid member from its stored
/// prediction, distribution and seed, and checks both thresholds.
pub fn verify_end_state(cfg: &RunConfig, set: &DesignSet) -> Result<()> {
    for m in set.members.iter().filter(|m| m.status == CandidateStatus::Valid) {
        let p = m
            .evaluations
            .prediction
            .ok_or_else(|| Error::State(format!("{} has no prediction", m.id)))?;
        let u = utility_combined(&p, &cfg.utility).u_comb;
        if u < cfg.stage6.u_min {
            return Err(Error::State(format!("{} is valid with u_comb {u}", m.id)));
        }
        let r = m
            .evaluations
            .risk
            .as_ref()
            .ok_or_else(|| Error::State(format!("{} has no risk assessment", m.id)))?;
        let dist = m
            .evaluations
            .distribution
            .ok_or_else(|| Error::State(format!("{} has no distribution", m.id)))?;
        let draws = dist.draw(crate::evaluate::Metric::Cl, r.samples.len().max(2), r.seed);
        let tail = empirical_cvar(&draws, r.alpha)?;
        if tail.tail_mean < cfg.stage4.var_target_cl {
            return Err(Error::State(format!(
                "{} is valid with tail mean {}",
                m.id, tail.tail_mean
            )));
        }
    }
    Ok(())
}
