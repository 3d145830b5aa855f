//! Run state and its event-sourced transitions.
//!
//! Every mutation is an [`Event`]; [`Engine::apply`] is the only code path
//! that changes a [`RunState`]. Replaying a run's events from its initial
//! configuration therefore reproduces the state exactly.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::config::{Evaluators, RunConfig};
use super::stages::{self, ReviewDecision};
use crate::error::{Error, Result};
use crate::evaluate::CpCurve;
use crate::sampling::{DesignCandidate, DesignId, DesignSet};
use crate::sensitivity::SensitivityReport;

/// Next automatic step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Generate,
    Sensitivity,
    Refine,
    Risk,
    Cp,
    Review,
}

impl Phase {
    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::Generate => Some(Phase::Sensitivity),
            Phase::Sensitivity => Some(Phase::Refine),
            Phase::Refine => Some(Phase::Risk),
            Phase::Risk => Some(Phase::Cp),
            Phase::Cp => Some(Phase::Review),
            Phase::Review => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// More automatic phases remain.
    Ready,
    /// Stage 6 reached; waiting for decisions, iteration or convergence.
    AwaitingReview,
    Converged,
    /// The utility filter removed every candidate.
    EmptySet,
    /// The risk filter removed every candidate.
    RiskExhausted,
    /// Review left no candidates.
    Exhausted,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, RunStatus::Ready | RunStatus::AwaitingReview)
    }

    /// The run ended without any surviving design.
    pub fn is_exhausted(self) -> bool {
        matches!(
            self,
            RunStatus::EmptySet | RunStatus::RiskExhausted | RunStatus::Exhausted
        )
    }
}

/// One persisted set transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub index: usize,
    pub name: String,
    pub input: usize,
    pub set: DesignSet,
    /// Candidates removed by this transition.
    #[serde(default)]
    pub removed: Vec<DesignCandidate>,
    /// Whether the transition only removes members.
    pub pure_filter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Init { config: Box<RunConfig> },
    Advance,
    Decision { decision: ReviewDecision },
    Iterate,
    Converge,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Init { .. } => "init",
            EventKind::Advance => "advance",
            EventKind::Decision { .. } => "decision",
            EventKind::Iterate => "iterate",
            EventKind::Converge => "converge",
        }
    }
}

/// An entry of the append-only decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn new(seq: u64, actor: impl Into<String>, kind: EventKind) -> Self {
        Self {
            seq,
            timestamp: Utc::now(),
            actor: actor.into(),
            kind,
        }
    }
}

/// Condensed log line kept in the state for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub config: RunConfig,
    pub status: RunStatus,
    pub next_phase: Option<Phase>,
    pub iteration: usize,
    pub stages: Vec<StageRecord>,
    pub sensitivity: Option<SensitivityReport>,
    pub benchmark_cp: CpCurve,
    pub next_id: u64,
    /// Decisions logged since the last iteration.
    pub pending: Vec<ReviewDecision>,
    /// Every decision ever logged.
    pub decisions: Vec<ReviewDecision>,
    pub log: Vec<LogEntry>,
}

/// What one mutation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub event: String,
    pub seq: u64,
    pub status: RunStatus,
    pub next_phase: Option<Phase>,
    pub stage: Option<usize>,
    pub stage_name: Option<String>,
    pub input: Option<usize>,
    pub output: Option<usize>,
    pub detail: String,
}

impl RunState {
    pub fn current(&self) -> Option<&StageRecord> {
        self.stages.last()
    }

    pub fn current_set(&self) -> Option<&DesignSet> {
        self.current().map(|s| &s.set)
    }

    pub fn stage(&self, index: usize) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.index == index)
    }

    /// Latest appearance of a candidate in any stage, including removals.
    pub fn find_candidate(&self, id: &DesignId) -> Option<(usize, &DesignCandidate)> {
        self.stages.iter().rev().find_map(|s| {
            s.set
                .get(id)
                .or_else(|| s.removed.iter().find(|c| &c.id == id))
                .map(|c| (s.index, c))
        })
    }

    /// Ids of the current review queue (empty outside review).
    pub fn review_queue(&self) -> Vec<DesignId> {
        if self.status == RunStatus::AwaitingReview || self.status == RunStatus::Converged {
            self.current_set().map(|s| s.ids()).unwrap_or_default()
        } else {
            Vec::new()
        }
    }

    pub fn events_applied(&self) -> u64 {
        self.log.len() as u64
    }
}

/// A run's state together with its resolved evaluators.
pub struct Engine {
    pub state: RunState,
    pub evaluators: Evaluators,
}

impl Engine {
    /// Applies an `Init` event.
    pub fn init(event: &Event) -> Result<Self> {
        let EventKind::Init { config } = &event.kind else {
            return Err(Error::State("first event must be init".into()));
        };
        config.validate()?;
        let evaluators = config.evaluators.resolve()?;
        let benchmark_cp = stages::benchmark_curve(config)?;
        let state = RunState {
            config: (**config).clone(),
            status: RunStatus::Ready,
            next_phase: Some(Phase::Generate),
            iteration: 0,
            stages: Vec::new(),
            sensitivity: None,
            benchmark_cp,
            next_id: config.n_initial as u64 + 1,
            pending: Vec::new(),
            decisions: Vec::new(),
            log: vec![log_entry(event, format!("seed {}", config.seed))],
        };
        Ok(Self { state, evaluators })
    }

    /// Rebuilds a run from its full event sequence.
    pub fn replay(events: &[Event]) -> Result<Self> {
        let (first, rest) = events
            .split_first()
            .ok_or_else(|| Error::State("empty event log".into()))?;
        let mut e = Self::init(first)?;
        for ev in rest {
            e.apply(ev)?;
        }
        Ok(e)
    }

    /// Checks that `kind` is allowed now, without changing anything.
    pub fn check(&self, kind: &EventKind) -> Result<()> {
        let s = &self.state;
        match kind {
            EventKind::Init { .. } => Err(Error::State("run already initialised".into())),
            EventKind::Advance => match s.status {
                RunStatus::Ready => Ok(()),
                RunStatus::AwaitingReview => Err(Error::State(
                    "run is awaiting review; submit decisions and iterate or converge".into(),
                )),
                st => Err(Error::State(format!("run has finished ({st:?})"))),
            },
            EventKind::Decision { decision } => {
                if s.status != RunStatus::AwaitingReview {
                    return Err(Error::State("no review in progress".into()));
                }
                let set = s.current_set().expect("review implies a set");
                if set.get(&decision.candidate).is_none() {
                    return Err(Error::NotFound(format!(
                        "candidate {} is not in the review queue",
                        decision.candidate
                    )));
                }
                for d in &decision.directives {
                    s.config
                        .design_space
                        .index_of(&d.param)
                        .ok_or_else(|| Error::Config(format!("directive names unknown parameter '{}'", d.param)))?;
                }
                Ok(())
            }
            EventKind::Iterate | EventKind::Converge => {
                if s.status != RunStatus::AwaitingReview {
                    return Err(Error::State("no review in progress".into()));
                }
                Ok(())
            }
        }
    }

    /// Applies one event. On error the state is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<StepSummary> {
        self.check(&event.kind)?;
        let mut next = self.state.clone();
        let summary = match &event.kind {
            EventKind::Init { .. } => unreachable!("rejected by check"),
            EventKind::Advance => self.advance(&mut next)?,
            EventKind::Decision { decision } => {
                let mut d = decision.clone();
                d.timestamp = Some(event.timestamp);
                d.actor = event.actor.clone();
                let cfg = next.config.clone();
                let rec = next.stages.last_mut().expect("review implies a set");
                let member = rec.set.get_mut(&d.candidate).expect("checked");
                stages::apply_decision(&cfg, member, &d);
                let detail = format!(
                    "{} {:?} -> {:?}{}",
                    d.candidate,
                    d.verdict,
                    member.status,
                    if d.directives.is_empty() {
                        String::new()
                    } else {
                        format!(
                            " [{}]",
                            d.directives
                                .iter()
                                .map(|x| x.to_string())
                                .collect::<Vec<_>>()
                                .join(", ")
                        )
                    }
                );
                next.pending.push(d.clone());
                next.decisions.push(d);
                summary_for(&next, "decision", event.seq, None, detail)
            }
            EventKind::Iterate => self.iterate(&mut next)?,
            EventKind::Converge => {
                next.status = RunStatus::Converged;
                next.next_phase = None;
                let valid = next
                    .current_set()
                    .map(|s| {
                        s.members
                            .iter()
                            .filter(|m| m.status == crate::sampling::CandidateStatus::Valid)
                            .count()
                    })
                    .unwrap_or(0);
                summary_for(&next, "converge", event.seq, None, format!("{valid} valid designs"))
            }
        };
        let mut summary = summary;
        summary.seq = event.seq;
        next.log.push(log_entry(event, summary.detail.clone()));
        self.state = next;
        Ok(summary)
    }

    fn push_stage(
        next: &mut RunState,
        name: &str,
        input: usize,
        set: DesignSet,
        removed: Vec<DesignCandidate>,
        pure_filter: bool,
    ) {
        let index = set.stage;
        next.stages.push(StageRecord {
            index,
            name: name.into(),
            input,
            set,
            removed,
            pure_filter,
        });
    }

    fn report(next: &RunState) -> Result<&SensitivityReport> {
        next.sensitivity
            .as_ref()
            .ok_or_else(|| Error::State("sensitivity report missing".into()))
    }

    fn advance(&self, next: &mut RunState) -> Result<StepSummary> {
        let phase = next
            .next_phase
            .ok_or_else(|| Error::State("nothing left to advance".into()))?;
        let cfg = next.config.clone();
        let ev = &self.evaluators;
        let mut stage_idx = None;
        let detail = match phase {
            Phase::Generate => {
                let out = stages::stage2_generate_and_filter(&cfg, ev)?;
                let n = out.generated.len();
                let kept = out.filtered.kept.len();
                Self::push_stage(next, "generate", 0, out.generated, Vec::new(), false);
                Self::push_stage(next, "utility-filter", n, out.filtered.kept, Vec::new(), true);
                if kept == 0 {
                    next.status = RunStatus::EmptySet;
                }
                stage_idx = Some(2);
                format!("sampled {n}, kept {kept} with u_comb >= {}", cfg.stage2.threshold)
            }
            Phase::Sensitivity => {
                let report = stages::stage3_sensitivity(&cfg, ev)?;
                let d = format!("{} evaluations, {} heuristics", report.rows, report.heuristics.len());
                next.sensitivity = Some(report);
                d
            }
            Phase::Refine => {
                let input = next.current_set().expect("generated").clone();
                let report = Self::report(next)?.clone();
                let children = stages::stage4_refine(&cfg, ev, &input, &report, &mut next.next_id)?;
                let d = format!("{} children: {}", children.len(), children.provenance.detail);
                Self::push_stage(next, "refine", input.len(), children, Vec::new(), false);
                stage_idx = Some(input.stage + 1);
                d
            }
            Phase::Risk => {
                let input = next.current_set().expect("refined").clone();
                let out = stages::stage4_risk(&cfg, ev, &input)?;
                let kept = out.kept.len();
                stage_idx = Some(out.kept.stage);
                Self::push_stage(next, "risk-filter", input.len(), out.kept, out.excluded, true);
                if kept == 0 {
                    next.status = RunStatus::RiskExhausted;
                }
                format!("{kept} of {} pass the tail-mean target", input.len())
            }
            Phase::Cp => {
                let input = next.current_set().expect("risk filtered").clone();
                let report = Self::report(next)?.clone();
                let out = stages::stage5_refine_rank_cp(&cfg, ev, &input, &report, &mut next.next_id)?;
                let kept = out.set.len();
                stage_idx = Some(out.set.stage);
                Self::push_stage(next, "refine-rank-cp", input.len(), out.set, out.removed, false);
                if kept == 0 {
                    next.status = RunStatus::RiskExhausted;
                }
                format!("{kept} ranked designs with Cp curves")
            }
            Phase::Review => {
                let input = next.current_set().expect("ranked").clone();
                let set = stages::stage6_review(&cfg, &input, &next.benchmark_cp)?;
                let valid = set
                    .members
                    .iter()
                    .filter(|m| m.status == crate::sampling::CandidateStatus::Valid)
                    .count();
                stage_idx = Some(set.stage);
                Self::push_stage(next, "review", input.len(), set, Vec::new(), false);
                next.status = RunStatus::AwaitingReview;
                format!("{valid} of {} valid", input.len())
            }
        };
        next.next_phase = if next.status == RunStatus::Ready {
            phase.next()
        } else {
            None
        };
        let mut s = summary_for(next, "advance", 0, stage_idx, detail);
        s.event = format!("advance:{}", serde_json::to_value(phase)?.as_str().unwrap_or_default());
        Ok(s)
    }

    fn iterate(&self, next: &mut RunState) -> Result<StepSummary> {
        if next.pending.is_empty() {
            return Ok(summary_for(
                next,
                "iterate",
                0,
                None,
                "no decisions; set unchanged".into(),
            ));
        }
        let cfg = next.config.clone();
        let input = next.current_set().expect("review").clone();
        let report = Self::report(next)?.clone();
        let decisions = std::mem::take(&mut next.pending);
        let out = stages::iterate_review(
            &cfg,
            &self.evaluators,
            &input,
            &decisions,
            &report,
            &next.benchmark_cp,
            &mut next.next_id,
        )?;
        next.iteration += 1;
        let kept = out.set.len();
        let idx = out.set.stage;
        let detail = out.set.provenance.detail.clone();
        let name = format!("iterate-{}", next.iteration);
        Self::push_stage(next, &name, input.len(), out.set, out.removed, false);
        if kept == 0 {
            next.status = RunStatus::Exhausted;
        }
        Ok(summary_for(next, "iterate", 0, Some(idx), detail))
    }
}

fn log_entry(event: &Event, detail: String) -> LogEntry {
    LogEntry {
        seq: event.seq,
        timestamp: event.timestamp,
        actor: event.actor.clone(),
        kind: event.kind.label().into(),
        detail,
    }
}

fn summary_for(state: &RunState, event: &str, seq: u64, stage: Option<usize>, detail: String) -> StepSummary {
    let rec = stage.and_then(|i| state.stage(i));
    StepSummary {
        event: event.into(),
        seq,
        status: state.status,
        next_phase: state.next_phase,
        stage,
        stage_name: rec.map(|r| r.name.clone()),
        input: rec.map(|r| r.input),
        output: rec.map(|r| r.set.len()),
        detail,
    }
}
