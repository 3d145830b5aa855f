//! Response payloads. Every numeric field is copied from the run state;
//! nothing is recomputed for display.

use serde::Serialize;

use foilset_core::evaluate::CoefficientPrediction;
use foilset_core::evaluate::CpCurve;
use foilset_core::geometry::Point;
use foilset_core::pipeline::run::{LogEntry, Phase, RunState, RunStatus, StageRecord, StepSummary};
use foilset_core::pipeline::{CpRating, ReviewDecision};
use foilset_core::risk::RiskAssessment;
use foilset_core::sampling::{CandidateStatus, DesignCandidate, Lineage, Verdict};
use foilset_core::score::UtilityScore;

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub id: String,
    pub status: RunStatus,
    pub next_phase: Option<Phase>,
    pub iteration: usize,
    pub stage: Option<usize>,
    pub candidates: usize,
    pub busy: bool,
}

impl RunSummary {
    pub fn new(id: &str, st: &RunState, busy: bool) -> Self {
        Self {
            id: id.into(),
            status: st.status,
            next_phase: st.next_phase,
            iteration: st.iteration,
            stage: st.current().map(|s| s.index),
            candidates: st.current_set().map_or(0, |s| s.len()),
            busy,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StageView {
    pub index: usize,
    pub name: String,
    pub input: usize,
    pub output: usize,
    pub removed: usize,
    pub pure_filter: bool,
    pub operation: String,
    pub detail: String,
}

impl From<&StageRecord> for StageView {
    fn from(s: &StageRecord) -> Self {
        Self {
            index: s.index,
            name: s.name.clone(),
            input: s.input,
            output: s.set.len(),
            removed: s.removed.len(),
            pure_filter: s.pure_filter,
            operation: s.set.provenance.operation.clone(),
            detail: s.set.provenance.detail.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StateView {
    pub id: String,
    pub status: RunStatus,
    pub next_phase: Option<Phase>,
    pub iteration: usize,
    pub seed: u64,
    pub busy: bool,
    pub last_summary: Option<StepSummary>,
    pub last_error: Option<String>,
    pub stages: Vec<StageView>,
    pub review_queue: Vec<String>,
    pub pending_decisions: usize,
    pub decisions: Vec<ReviewDecision>,
    pub log: Vec<LogEntry>,
}

impl StateView {
    pub fn new(
        id: &str,
        st: &RunState,
        busy: bool,
        last_summary: Option<StepSummary>,
        last_error: Option<String>,
    ) -> Self {
        Self {
            id: id.into(),
            status: st.status,
            next_phase: st.next_phase,
            iteration: st.iteration,
            seed: st.config.seed,
            busy,
            last_summary,
            last_error,
            stages: st.stages.iter().map(StageView::from).collect(),
            review_queue: st.review_queue().iter().map(|i| i.to_string()).collect(),
            pending_decisions: st.pending.len(),
            decisions: st.decisions.clone(),
            log: st.log.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CandidateRow {
    pub id: String,
    pub status: CandidateStatus,
    pub parent: Option<String>,
    pub prediction: Option<CoefficientPrediction>,
    pub u_comb: Option<f64>,
    pub tail_mean: Option<f64>,
    pub risk_pass: Option<bool>,
    pub cp_rating: Option<u8>,
    pub valid: Option<bool>,
}

impl From<&DesignCandidate> for CandidateRow {
    fn from(c: &DesignCandidate) -> Self {
        let e = &c.evaluations;
        Self {
            id: c.id.to_string(),
            status: c.status,
            parent: c.lineage.as_ref().map(|l| l.parent.to_string()),
            prediction: e.prediction,
            u_comb: e.utility.map(|u| u.u_comb),
            tail_mean: e.risk.as_ref().map(|r| r.tail_mean),
            risk_pass: e.risk.as_ref().map(|r| r.pass),
            cp_rating: e.rating.as_ref().map(|r| r.rating),
            valid: e.verdict.as_ref().map(|v| v.valid),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CandidateList {
    pub stage: usize,
    pub name: String,
    pub candidates: Vec<CandidateRow>,
    pub removed: Vec<CandidateRow>,
}

#[derive(Debug, Serialize)]
pub struct CandidateDetail {
    pub id: String,
    pub stage: usize,
    pub in_latest_set: bool,
    pub status: CandidateStatus,
    pub params: Vec<f64>,
    pub param_names: Vec<String>,
    pub lineage: Option<Lineage>,
    pub outline: Vec<Point>,
    pub prediction: Option<CoefficientPrediction>,
    pub utility: Option<UtilityScore>,
    pub risk: Option<RiskAssessment>,
    pub cp: Option<CpCurve>,
    pub benchmark_cp: CpCurve,
    pub rating: Option<CpRating>,
    pub assessment: Option<String>,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
    pub pca: Option<[f64; 2]>,
}

#[derive(Debug, Serialize)]
pub struct Accepted {
    pub id: String,
    pub accepted: bool,
    pub phase: Option<Phase>,
}

#[derive(Debug, Serialize)]
pub struct Created {
    pub id: String,
    pub run: RunSummary,
}

#[derive(Debug, Serialize)]
pub struct DecisionReceipt {
    pub seq: u64,
    pub candidate: String,
    pub status: CandidateStatus,
    pub verdict: Option<Verdict>,
}
