//! Sensitivity-guided modification of a design set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::Metric;
use crate::sampling::{DesignCandidate, DesignId, DesignSet, DesignSpace, Evaluations, Lineage, Provenance};
use crate::sensitivity::SensitivityReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increase => 1.0,
            Direction::Decrease => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "increase" | "inc" | "+" | "up" | "raise" => Ok(Direction::Increase),
            "decrease" | "dec" | "-" | "down" | "lower" => Ok(Direction::Decrease),
            other => Err(Error::Config(format!("unknown direction '{other}'"))),
        }
    }
}

/// Explicit parameter step: `magnitude` is a fraction of the bound width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub param: String,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
}

impl FromStr for Directive {
    type Err = Error;

    /// Parses free text such as `increase CST_L3 to raise CM` or
    /// `decrease CST_U2 0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let words: Vec<&str> = s.split_whitespace().collect();
        if words.len() < 2 {
            return Err(Error::Config(format!(
                "directive '{s}' needs a direction and a parameter"
            )));
        }
        let magnitude = match words.get(2).map(|w| w.parse::<f64>()) {
            Some(Ok(m)) => Some(m),
            _ => None,
        };
        Ok(Directive {
            direction: words[0].parse()?,
            param: words[1].to_string(),
            magnitude,
        })
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.direction, self.param)?;
        if let Some(m) = self.magnitude {
            write!(f, " {m}")?;
        }
        Ok(())
    }
}

/// One weighted objective term; positive weight means "maximize".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerm {
    pub metric: Metric,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinePolicy {
    /// Parameters stepped automatically, taken from the top of the ranking.
    pub top_params: usize,
    /// Step as a fraction of each bound width.
    pub step_fraction: f64,
    /// The first term with the largest absolute weight is the primary objective.
    pub objective: Vec<ObjectiveTerm>,
    pub directives: Vec<Directive>,
}

impl Default for RefinePolicy {
    fn default() -> Self {
        Self {
            top_params: 4,
            step_fraction: 0.05,
            objective: vec![ObjectiveTerm {
                metric: Metric::Cl,
                weight: 1.0,
            }],
            directives: Vec::new(),
        }
    }
}

impl RefinePolicy {
    pub fn validate(&self, space: &DesignSpace) -> Result<()> {
        if !(self.step_fraction > 0.0 && self.step_fraction <= 0.5) {
            return Err(Error::Config(format!(
                "step_fraction must lie in (0, 0.5], got {}",
                self.step_fraction
            )));
        }
        if self.objective.iter().all(|t| t.weight == 0.0) {
            return Err(Error::Config("refine objective needs a non-zero weight".into()));
        }
        for d in &self.directives {
            check_directive(d, space)?;
        }
        Ok(())
    }

    pub fn primary(&self) -> Option<ObjectiveTerm> {
        self.objective
            .iter()
            .copied()
            .fold(None, |best: Option<ObjectiveTerm>, t| match best {
                Some(b) if b.weight.abs() >= t.weight.abs() => Some(b),
                _ if t.weight != 0.0 => Some(t),
                other => other,
            })
    }
}

fn check_directive(d: &Directive, space: &DesignSpace) -> Result<usize> {
    let i = space
        .index_of(&d.param)
        .ok_or_else(|| Error::Config(format!("directive names unknown parameter '{}'", d.param)))?;
    if let Some(m) = d.magnitude {
        if !(m > 0.0 && m <= 1.0) {
            return Err(Error::Config(format!("directive magnitude {m} must lie in (0, 1]")));
        }
    }
    Ok(i)
}

/// Per-parameter step in parameter units, plus a description.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub steps: Vec<f64>,
    pub description: String,
}

/// Automatic steps from the report, overridden by explicit directives.
pub fn plan_steps(
    report: &SensitivityReport,
    policy: &RefinePolicy,
    space: &DesignSpace,
    directives: &[Directive],
) -> Result<StepPlan> {
    let mut steps = vec![0.0; space.dims()];
    let mut parts = Vec::new();
    if let Some(term) = policy.primary() {
        let ms = report
            .metric(term.metric)
            .ok_or_else(|| Error::Config(format!("sensitivity report lacks metric {}", term.metric)))?;
        if ms.sign.len() != space.dims() {
            return Err(Error::Config(
                "sensitivity report does not cover the design space".into(),
            ));
        }
        for &i in ms.ranking.iter().take(policy.top_params) {
            let dir = ms.sign[i] as f64 * term.weight.signum();
            if dir != 0.0 {
                steps[i] = dir * policy.step_fraction * space.bounds[i].width();
                parts.push(format!(
                    "{} {}",
                    if dir > 0.0 { "increase" } else { "decrease" },
                    space.bounds[i].name
                ));
            }
        }
    }
    for d in policy.directives.iter().chain(directives) {
        let i = check_directive(d, space)?;
        let frac = d.magnitude.unwrap_or(policy.step_fraction);
        steps[i] = d.direction.sign() * frac * space.bounds[i].width();
        parts.retain(|p| !p.ends_with(&format!(" {}", space.bounds[i].name)));
        parts.push(format!("{} {}", d.direction, space.bounds[i].name));
    }
    Ok(StepPlan {
        steps,
        description: parts.join(", "),
    })
}

/// Child of `parent` moved by `plan`, clipped to the box, with fresh id and
/// cleared evaluations.
pub fn refine_candidate(
    parent: &DesignCandidate,
    plan: &StepPlan,
    space: &DesignSpace,
    id: DesignId,
    stage: usize,
) -> DesignCandidate {
    let mut params = parent.params;
    for (i, p) in params.iter_mut().enumerate() {
        *p = space.bounds[i].clip(*p + plan.steps[i]);
    }
    let mut child = DesignCandidate::new(id, params, parent.flow, space);
    child.lineage = Some(Lineage {
        parent: parent.id.clone(),
        stage,
        directive: plan.description.clone(),
    });
    child.evaluations = Evaluations::default();
    child
}

/// Refines every member. Children are numbered from `next_id` in member
/// order; the returned set has the same cardinality as the input.
pub fn refine(
    set: &DesignSet,
    report: &SensitivityReport,
    policy: &RefinePolicy,
    space: &DesignSpace,
    next_id: &mut u64,
) -> Result<DesignSet> {
    policy.validate(space)?;
    let plan = plan_steps(report, policy, space, &[])?;
    let stage = set.stage + 1;
    let members = set
        .members
        .iter()
        .map(|m| {
            let id = DesignId::from_index(*next_id);
            *next_id += 1;
            refine_candidate(m, &plan, space, id, stage)
        })
        .collect();
    DesignSet::new(stage, members, Provenance::new("refine", plan.description))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FlowConditions;
    use crate::sampling::{sample, SamplingStrategy};
    use crate::sensitivity::{synthesize_report, MetricSensitivity};

    fn report_with(sign_cl: Vec<i8>, s_total: Vec<f64>) -> SensitivityReport {
        let mut ranking: Vec<usize> = (0..9).collect();
        ranking.sort_by(|&a, &b| s_total[b].total_cmp(&s_total[a]).then(a.cmp(&b)));
        let m = MetricSensitivity {
            metric: Metric::Cl,
            s_first: s_total.clone(),
            s_total,
            rho: sign_cl.iter().map(|&s| s as f64).collect(),
            sign: sign_cl,
            ranking,
        };
        let names: Vec<String> = DesignSpace::default().names().iter().map(|s| s.to_string()).collect();
        synthesize_report(&names, vec![m], 4)
    }

    fn u2_report() -> SensitivityReport {
        let mut s = vec![0.0; 9];
        s[1] = 0.9;
        let mut sign = vec![0; 9];
        sign[1] = 1;
        report_with(sign, s)
    }

    #[test]
    fn positive_sign_steps_up_and_clips() {
        let space = DesignSpace::default();
        let set = sample(&space, 20, SamplingStrategy::Lhs, FlowConditions::default(), 3).unwrap();
        let mut next = 21;
        let out = refine(&set, &u2_report(), &RefinePolicy::default(), &space, &mut next).unwrap();
        assert_eq!(out.len(), set.len());
        assert_eq!(next, 41);
        let b = &space.bounds[1];
        for (p, c) in set.members.iter().zip(&out.members) {
            assert_eq!(c.params[1], (p.params[1] + 0.05 * b.width()).min(b.upper));
            assert_eq!(c.lineage.as_ref().unwrap().parent, p.id);
            for i in (0..9).filter(|&i| i != 1) {
                assert_eq!(c.params[i], p.params[i]);
            }
        }
    }

    #[test]
    fn child_at_bound_stays() {
        let space = DesignSpace::default();
        let mut set = sample(&space, 1, SamplingStrategy::Lhs, FlowConditions::default(), 3).unwrap();
        set.members[0].params[1] = space.bounds[1].upper;
        let mut next = 2;
        let once = refine(&set, &u2_report(), &RefinePolicy::default(), &space, &mut next).unwrap();
        let twice = refine(&once, &u2_report(), &RefinePolicy::default(), &space, &mut next).unwrap();
        assert_eq!(twice.members[0].params[1], space.bounds[1].upper);
    }

    #[test]
    fn directives_override_and_unknown_param_fails() {
        let space = DesignSpace::default();
        let d: Directive = "decrease CST\\_U2 to cut drag".parse().unwrap();
        let plan = plan_steps(&u2_report(), &RefinePolicy::default(), &space, &[d]).unwrap();
        assert!(plan.steps[1] < 0.0);
        assert_eq!(plan.description, "decrease CST_U2");
        let bad = Directive {
            param: "CST_X9".into(),
            direction: Direction::Increase,
            magnitude: None,
        };
        assert!(matches!(
            plan_steps(&u2_report(), &RefinePolicy::default(), &space, &[bad]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn minimizing_flips_direction() {
        let space = DesignSpace::default();
        let policy = RefinePolicy {
            objective: vec![ObjectiveTerm {
                metric: Metric::Cl,
                weight: -1.0,
            }],
            ..RefinePolicy::default()
        };
        assert!(plan_steps(&u2_report(), &policy, &space, &[]).unwrap().steps[1] < 0.0);
    }

    #[test]
    fn step_fraction_bounds() {
        let space = DesignSpace::default();
        for eta in [0.0, 0.6] {
            let p = RefinePolicy {
                step_fraction: eta,
                ..RefinePolicy::default()
            };
            assert!(p.validate(&space).is_err());
        }
    }
}
