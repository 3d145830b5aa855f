//! Staged set-based design loop: configuration, stage transitions,
//! event-sourced run state, persistence and reporting.

pub mod config;
pub mod pca;
pub mod refine;
pub mod report;
pub mod rubric;
pub mod run;
pub mod stages;
pub mod store;

pub use config::{EvaluatorBindings, Evaluators, RunConfig};
pub use refine::{Direction, Directive, RefinePolicy};
pub use report::{run_report, RunReport};
pub use rubric::{rate_cp, CpRating, RubricConfig};
pub use run::{Engine, Event, EventKind, Phase, RunState, RunStatus, StageRecord, StepSummary};
pub use stages::{ReviewDecision, VerdictKind};
pub use store::{RunDir, RunStore};
