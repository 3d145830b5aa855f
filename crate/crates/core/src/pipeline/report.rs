//! Run summary in Markdown and JSON.
//!
//! The report is a pure function of the run state, so two replays of the
//! same log render byte-identical reports.

use std::fmt::Write as _;

use serde::Serialize;

use super::run::{LogEntry, RunState, RunStatus};
use crate::error::Result;
use crate::sampling::{CandidateStatus, DesignCandidate};
use crate::score::RAE2822_BENCHMARK;
use crate::sensitivity::Heuristic;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub index: usize,
    pub name: String,
    pub input: usize,
    pub output: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub stage2_u_comb: f64,
    pub risk_alpha: f64,
    pub risk_target_cl: f64,
    pub review_u_comb: f64,
    pub review_cp_rating: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivorRow {
    pub id: String,
    pub parent: Option<String>,
    pub cl: Option<f64>,
    pub cd: Option<f64>,
    pub cm: Option<f64>,
    pub u_comb: Option<f64>,
    pub tail_mean: Option<f64>,
    pub cp_rating: Option<u8>,
    pub status: CandidateStatus,
    pub actor: Option<String>,
    pub note: Option<String>,
}

impl SurvivorRow {
    fn from_candidate(c: &DesignCandidate) -> Self {
        let e = &c.evaluations;
        Self {
            id: c.id.to_string(),
            parent: c.lineage.as_ref().map(|l| l.parent.to_string()),
            cl: e.prediction.map(|p| p.cl),
            cd: e.prediction.map(|p| p.cd),
            cm: e.prediction.map(|p| p.cm),
            u_comb: e.utility.map(|u| u.u_comb),
            tail_mean: e.risk.as_ref().map(|r| r.tail_mean),
            cp_rating: e.rating.as_ref().map(|r| r.rating),
            status: c.status,
            actor: e.verdict.as_ref().map(|v| v.actor.clone()),
            note: e.verdict.as_ref().map(|v| v.note.clone()).filter(|n| !n.is_empty()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub name: String,
    pub cl: f64,
    pub cd: f64,
    pub cm: f64,
    pub u_comb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub status: RunStatus,
    pub iteration: usize,
    pub stages: Vec<StageRow>,
    pub thresholds: Thresholds,
    pub survivors: Vec<SurvivorRow>,
    pub benchmark: BenchmarkRow,
    pub heuristics: Vec<Heuristic>,
    pub log: Vec<LogEntry>,
}

pub fn run_report(state: &RunState) -> RunReport {
    let cfg = &state.config;
    let b = &RAE2822_BENCHMARK;
    RunReport {
        seed: cfg.seed,
        status: state.status,
        iteration: state.iteration,
        stages: state
            .stages
            .iter()
            .map(|s| StageRow {
                index: s.index,
                name: s.name.clone(),
                input: s.input,
                output: s.set.len(),
                removed: s.removed.len(),
            })
            .collect(),
        thresholds: Thresholds {
            stage2_u_comb: cfg.stage2.threshold,
            risk_alpha: cfg.stage4.alpha,
            risk_target_cl: cfg.stage4.var_target_cl,
            review_u_comb: cfg.stage6.u_min,
            review_cp_rating: cfg.stage6.cp_rating_min,
        },
        survivors: state
            .current_set()
            .map(|s| s.members.iter().map(SurvivorRow::from_candidate).collect())
            .unwrap_or_default(),
        benchmark: BenchmarkRow {
            name: b.name.into(),
            cl: b.prediction.cl,
            cd: b.prediction.cd,
            cm: b.prediction.cm,
            u_comb: b.u_comb,
        },
        heuristics: state
            .sensitivity
            .as_ref()
            .map(|r| r.heuristics.clone())
            .unwrap_or_default(),
        log: state.log.clone(),
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into())
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Design run report\n\n");
        let _ = writeln!(s, "- seed: {}", self.seed);
        let _ = writeln!(s, "- status: {:?}", self.status);
        let _ = writeln!(s, "- review iterations: {}\n", self.iteration);

        s.push_str("## Stages\n\n| stage | name | in | out | removed |\n|---|---|---|---|---|\n");
        for r in &self.stages {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                r.index, r.name, r.input, r.output, r.removed
            );
        }

        let t = &self.thresholds;
        s.push_str("\n## Thresholds\n\n");
        let _ = writeln!(s, "- utility filter: u_comb >= {}", t.stage2_u_comb);
        let _ = writeln!(
            s,
            "- risk filter: lower-tail mean of CL at alpha {} >= {}",
            t.risk_alpha, t.risk_target_cl
        );
        let _ = writeln!(
            s,
            "- review: u_comb >= {} and Cp rating >= {}",
            t.review_u_comb, t.review_cp_rating
        );

        s.push_str("\n## Current set\n\n| id | parent | CL | CD | CM | u_comb | tail mean | Cp | status | by |\n|---|---|---|---|---|---|---|---|---|---|\n");
        let b = &self.benchmark;
        let _ = writeln!(
            s,
            "| {} (benchmark) | - | {:.4} | {:.5} | {:.4} | {:.4} | - | 3 | - | - |",
            b.name, b.cl, b.cd, b.cm, b.u_comb
        );
        for r in &self.survivors {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {:?} | {} |",
                r.id,
                r.parent.as_deref().unwrap_or("-"),
                opt(r.cl, 4),
                opt(r.cd, 5),
                opt(r.cm, 4),
                opt(r.u_comb, 4),
                opt(r.tail_mean, 4),
                r.cp_rating.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                r.status,
                r.actor.as_deref().unwrap_or("-"),
            );
        }

        if !self.heuristics.is_empty() {
            s.push_str("\n## Design heuristics\n\n");
            for h in &self.heuristics {
                let _ = writeln!(s, "- {} (S_T = {:.3})", h.text, h.s_total);
            }
        }

        s.push_str("\n## Decision log\n\n| seq | time | actor | event | detail |\n|---|---|---|---|---|\n");
        for e in &self.log {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                e.seq,
                e.timestamp.to_rfc3339(),
                e.actor,
                e.kind,
                e.detail.replace('|', "/")
            );
        }
        s
    }
}
