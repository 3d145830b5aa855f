//! Design space, candidate sets and batch sampling.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{CoefficientPrediction, CpCurve, PredictionDistribution};
use crate::geometry::{CstParams, FlowConditions, N_CST};
use crate::pipeline::rubric::CpRating;
use crate::risk::RiskAssessment;
use crate::score::UtilityScore;
use crate::seed;
use crate::sobol::SobolSequence;

/// Canonical names of the nine CST weights, in batch-column order.
pub const CST_NAMES: [&str; N_CST] = [
    "CST_U1", "CST_U2", "CST_U3", "CST_U4", "CST_U5", "CST_L2", "CST_L3", "CST_L4", "CST_L5",
];

/// Default bounds for `CST1..CST9`.
pub const DEFAULT_CST_BOUNDS: [(f64, f64); N_CST] = [
    (0.0644, 0.1932),
    (0.0688, 0.2064),
    (0.0961, 0.2883),
    (0.0961, 0.2882),
    (0.1010, 0.3030),
    (0.0680, 0.2039),
    (0.1126, 0.3377),
    (0.0381, 0.1143),
    (-0.0586, -0.0195),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl ParamBound {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.lower + u * self.width()
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// Operating-condition ranges covered by the surrogates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowBounds {
    pub ma: (f64, f64),
    pub aoa_deg: (f64, f64),
    pub re: (f64, f64),
}

impl Default for FlowBounds {
    fn default() -> Self {
        Self {
            ma: (0.2, 0.7),
            aoa_deg: (-3.0, 5.0),
            re: (1.0e6, 6.5e6),
        }
    }
}

impl FlowBounds {
    pub fn contains(&self, f: &FlowConditions) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(f.ma, self.ma) && within(f.aoa_deg, self.aoa_deg) && within(f.re, self.re)
    }
}

/// Box-bounded nine-dimensional CST design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub bounds: Vec<ParamBound>,
    #[serde(default)]
    pub flow_bounds: FlowBounds,
}

impl Default for DesignSpace {
    fn default() -> Self {
        let bounds = CST_NAMES
            .iter()
            .zip(DEFAULT_CST_BOUNDS)
            .map(|(name, (lower, upper))| ParamBound {
                name: name.to_string(),
                lower,
                upper,
            })
            .collect();
        Self {
            bounds,
            flow_bounds: FlowBounds::default(),
        }
    }
}

impl DesignSpace {
    pub fn new(bounds: Vec<ParamBound>, flow_bounds: FlowBounds) -> Result<Self> {
        let space = Self { bounds, flow_bounds };
        space.validate()?;
        Ok(space)
    }

    /// Parses a JSON list of `{"name", "lower", "upper"}` entries.
    pub fn from_override_json(text: &str) -> Result<Self> {
        let bounds: Vec<ParamBound> = serde_json::from_str(text)?;
        Self::new(bounds, FlowBounds::default())
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.len() != N_CST {
            return Err(Error::Config(format!(
                "design space must have {N_CST} parameters, got {}",
                self.bounds.len()
            )));
        }
        let mut seen = HashSet::new();
        for b in &self.bounds {
            if !(b.lower < b.upper) {
                return Err(Error::Config(format!(
                    "parameter {} has lower bound {} not below upper bound {}",
                    b.name, b.lower, b.upper
                )));
            }
            if !seen.insert(b.name.to_ascii_uppercase()) {
                return Err(Error::Config(format!("duplicate parameter name {}", b.name)));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.bounds.iter().map(|b| b.name.as_str()).collect()
    }

    /// Position of a parameter by name. Accepts the configured name, the
    /// positional alias `CSTk` (1-based) and a backslash-escaped underscore.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let wanted = name.trim().replace("\\_", "_").to_ascii_uppercase();
        if let Some(i) = self.bounds.iter().position(|b| b.name.to_ascii_uppercase() == wanted) {
            return Some(i);
        }
        wanted
            .strip_prefix("CST")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|k| (1..=self.dims()).contains(k))
            .map(|k| k - 1)
    }

    pub fn contains(&self, params: &[f64]) -> bool {
        params.len() == self.dims() && self.bounds.iter().zip(params).all(|(b, &v)| b.contains(v))
    }

    /// Maps a unit-cube point onto the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.bounds.iter().zip(u).map(|(b, &t)| b.from_unit(t)).collect()
    }

    /// Centre of the box: the weights from which the bounds were derived as ±50 %.
    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| 0.5 * (b.lower + b.upper)).collect()
    }
}

/// Candidate identifier such as `ID-17`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignId(pub String);

impl DesignId {
    pub fn from_index(k: u64) -> Self {
        DesignId(format!("ID-{k}"))
    }

    /// Numeric part of an `ID-k` label.
    pub fn number(&self) -> Option<u64> {
        self.0.strip_prefix("ID-").and_then(|s| s.parse().ok())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DesignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Compares ids numerically when both are `ID-k`, lexically otherwise.
pub fn id_order(a: &DesignId, b: &DesignId) -> std::cmp::Ordering {
    match (a.number(), b.number()) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => a.0.cmp(&b.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: DesignId,
    pub stage: usize,
    pub directive: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStatus {
    #[default]
    Active,
    Filtered,
    Valid,
    Invalid,
}

/// Who settled a candidate's validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub valid: bool,
    pub actor: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// Everything learned about a candidate so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluations {
    /// Point estimate used for scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<CoefficientPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<PredictionDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskAssessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp: Option<CpCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<CpRating>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignCandidate {
    pub id: DesignId,
    pub params: [f64; N_CST],
    pub flow: FlowConditions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<Lineage>,
    #[serde(default)]
    pub evaluations: Evaluations,
    #[serde(default)]
    pub status: CandidateStatus,
    /// False when any weight lies outside the design-space box.
    #[serde(default = "default_true")]
    pub in_bounds: bool,
}

fn default_true() -> bool {
    true
}

impl DesignCandidate {
    pub fn new(id: DesignId, params: [f64; N_CST], flow: FlowConditions, space: &DesignSpace) -> Self {
        Self {
            id,
            in_bounds: space.contains(&params),
            params,
            flow,
            lineage: None,
            evaluations: Evaluations::default(),
            status: CandidateStatus::Active,
        }
    }

    pub fn cst(&self) -> CstParams {
        CstParams::from_vector(&self.params)
    }

    /// Surrogate input row `[Ma, AoA, Re, CST1..CST9]`.
    pub fn input_row(&self) -> [f64; 12] {
        let mut row = [0.0; 12];
        row[0] = self.flow.ma;
        row[1] = self.flow.aoa_deg;
        row[2] = self.flow.re;
        row[3..].copy_from_slice(&self.params);
        row
    }

    pub fn u_comb(&self) -> Option<f64> {
        self.evaluations.utility.map(|u| u.u_comb)
    }
}

/// How a set came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub operation: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Provenance {
    pub fn new(operation: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            operation: operation.into(),
            detail: detail.into(),
        }
    }
}

/// Stage-stamped ordered collection of candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSet {
    pub stage: usize,
    pub members: Vec<DesignCandidate>,
    pub provenance: Provenance,
}

impl DesignSet {
    pub fn new(stage: usize, members: Vec<DesignCandidate>, provenance: Provenance) -> Result<Self> {
        let set = Self {
            stage,
            members,
            provenance,
        };
        set.check_unique()?;
        Ok(set)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for m in &self.members {
            if !seen.insert(&m.id) {
                return Err(Error::State(format!("duplicate candidate id {}", m.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> Vec<DesignId> {
        self.members.iter().map(|m| m.id.clone()).collect()
    }

    pub fn get(&self, id: &DesignId) -> Option<&DesignCandidate> {
        self.members.iter().find(|m| &m.id == id)
    }

    pub fn get_mut(&mut self, id: &DesignId) -> Option<&mut DesignCandidate> {
        self.members.iter_mut().find(|m| &m.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    #[default]
    Lhs,
    Sobol,
    Random,
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lhs" | "latin" | "latin_hypercube" => Ok(SamplingStrategy::Lhs),
            "sobol" => Ok(SamplingStrategy::Sobol),
            "random" | "uniform" => Ok(SamplingStrategy::Random),
            other => Err(Error::Config(format!("unknown sampling strategy '{other}'"))),
        }
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingStrategy::Lhs => "lhs",
            SamplingStrategy::Sobol => "sobol",
            SamplingStrategy::Random => "random",
        })
    }
}

/// Unit-cube points for `n` candidates in `dims` dimensions.
pub fn unit_samples(dims: usize, n: usize, strategy: SamplingStrategy, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    Ok(match strategy {
        SamplingStrategy::Lhs => {
            let mut rng = seed::rng_for(seed, "lhs");
            let mut pts = vec![vec![0.0; dims]; n];
            let mut perm: Vec<usize> = (0..n).collect();
            for d in 0..dims {
                perm.shuffle(&mut rng);
                for (i, p) in pts.iter_mut().enumerate() {
                    let jitter: f64 = rng.random();
                    p[d] = (perm[i] as f64 + jitter) / n as f64;
                }
            }
            pts
        }
        SamplingStrategy::Sobol => SobolSequence::new(dims)?.take(n),
        SamplingStrategy::Random => (0..n)
            .map(|i| {
                let mut rng = seed::stream_rng(seed, i as u64);
                (0..dims).map(|_| rng.random::<f64>()).collect()
            })
            .collect(),
    })
}

/// Draws `n` candidates `ID-1..ID-n` from the space at a fixed operating point.
pub fn sample(
    space: &DesignSpace,
    n: usize,
    strategy: SamplingStrategy,
    flow: FlowConditions,
    seed: u64,
) -> Result<DesignSet> {
    space.validate()?;
    let pts = unit_samples(space.dims(), n, strategy, seed)?;
    let members = pts
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let mut params = [0.0; N_CST];
            for (p, (b, &t)) in params.iter_mut().zip(space.bounds.iter().zip(u)) {
                *p = b.clip(b.from_unit(t));
            }
            DesignCandidate::new(DesignId::from_index(i as u64 + 1), params, flow, space)
        })
        .collect();
    DesignSet::new(
        0,
        members,
        Provenance::new("sample", format!("{strategy} n={n} seed={seed}")),
    )
}

/// Interchange document: `samples` rows are `[Ma, AoA, Re, CST1..CST9]`,
/// `designid[j]` labels row `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDocument {
    pub samples: Vec<Vec<f64>>,
    pub designid: Vec<String>,
}

pub fn export_batch(set: &DesignSet) -> String {
    let doc = BatchDocument {
        samples: set.members.iter().map(|m| m.input_row().to_vec()).collect(),
        designid: set.members.iter().map(|m| m.id.0.clone()).collect(),
    };
    serde_json::to_string(&doc).expect("batch document serializes")
}

/// Rebuilds a set from a batch document. Rows outside the design space are
/// kept and flagged through `in_bounds`.
pub fn import_batch(doc: &str, space: &DesignSpace) -> Result<DesignSet> {
    let value: serde_json::Value = serde_json::from_str(doc).map_err(|e| Error::parse(None, e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::parse(None, "batch document must be a JSON object"))?;
    let rows = obj
        .get("samples")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::parse(None, "missing 'samples' array"))?;
    let ids = obj
        .get("designid")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::parse(None, "missing 'designid' array"))?;
    if rows.len() != ids.len() {
        return Err(Error::parse(
            None,
            format!("{} sample rows but {} design ids", rows.len(), ids.len()),
        ));
    }
    let mut members = Vec::with_capacity(rows.len());
    for (row, (r, id)) in rows.iter().zip(ids).enumerate() {
        let values = r
            .as_array()
            .ok_or_else(|| Error::parse(Some(row), "sample row must be an array"))?;
        if values.len() != 12 {
            return Err(Error::parse(
                Some(row),
                format!("expected 12 values, found {}", values.len()),
            ));
        }
        let mut nums = [0.0; 12];
        for (slot, v) in nums.iter_mut().zip(values) {
            *slot = v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(Some(row), "non-numeric sample value"))?;
        }
        let id = id
            .as_str()
            .ok_or_else(|| Error::parse(Some(row), "design id must be a string"))?;
        let mut params = [0.0; N_CST];
        params.copy_from_slice(&nums[3..]);
        let flow = FlowConditions::new(nums[0], nums[1], nums[2]);
        members.push(DesignCandidate::new(DesignId(id.to_string()), params, flow, space));
    }
    DesignSet::new(0, members, Provenance::new("import", "batch document"))
        .map_err(|e| Error::parse(None, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_space_matches_published_bounds() {
        let s = DesignSpace::default();
        assert_eq!(s.bounds[0].lower, 0.0644);
        assert_eq!(s.bounds[0].upper, 0.1932);
        assert_eq!(s.bounds[8].lower, -0.0586);
        assert_eq!(s.bounds[8].upper, -0.0195);
        s.validate().unwrap();
    }

    #[test]
    fn index_of_accepts_aliases() {
        let s = DesignSpace::default();
        assert_eq!(s.index_of("CST_U2"), Some(1));
        assert_eq!(s.index_of("cst_l3"), Some(6));
        assert_eq!(s.index_of("CST\\_L3"), Some(6));
        assert_eq!(s.index_of("CST9"), Some(8));
        assert_eq!(s.index_of("CST10"), None);
        assert_eq!(s.index_of("CHORD"), None);
    }

    #[test]
    fn override_file_validation() {
        let good = serde_json::to_string(&DesignSpace::default().bounds).unwrap();
        DesignSpace::from_override_json(&good).unwrap();
        let mut bad = DesignSpace::default().bounds;
        bad[3].lower = bad[3].upper;
        let bad = serde_json::to_string(&bad).unwrap();
        assert!(matches!(DesignSpace::from_override_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_strategy_is_config_error() {
        assert!(matches!("halton".parse::<SamplingStrategy>(), Err(Error::Config(_))));
    }

    fn assert_stratified(n: usize, seed: u64) {
        let space = DesignSpace::default();
        let set = sample(&space, n, SamplingStrategy::Lhs, FlowConditions::default(), seed).unwrap();
        for (d, b) in space.bounds.iter().enumerate() {
            let mut bins = vec![0usize; n];
            for m in &set.members {
                let u = (m.params[d] - b.lower) / b.width();
                bins[((u * n as f64) as usize).min(n - 1)] += 1;
            }
            assert!(bins.iter().all(|&c| c == 1), "n={n} dim={d}");
        }
    }

    #[test]
    fn lhs_is_stratified() {
        for n in [4, 16, 64] {
            for seed in [0, 7, 42] {
                assert_stratified(n, seed);
            }
        }
    }

    #[test]
    fn random_stays_in_bounds() {
        let space = DesignSpace::default();
        let set = sample(&space, 1000, SamplingStrategy::Random, FlowConditions::default(), 5).unwrap();
        assert_eq!(set.len(), 1000);
        assert!(set.members.iter().all(|m| space.contains(&m.params) && m.in_bounds));
    }

    #[test]
    fn sobol_first_dimension_projection() {
        let space = DesignSpace::default();
        let set = sample(&space, 8, SamplingStrategy::Sobol, FlowConditions::default(), 0).unwrap();
        let b = &space.bounds[0];
        let expected = [0.0, 0.5, 0.75, 0.25, 0.375, 0.875, 0.625, 0.125];
        for (m, u) in set.members.iter().zip(expected) {
            assert!((m.params[0] - b.from_unit(u)).abs() < 1e-15);
        }
    }

    #[test]
    fn ids_are_sequential() {
        let set = sample(
            &DesignSpace::default(),
            3,
            SamplingStrategy::Lhs,
            FlowConditions::default(),
            1,
        )
        .unwrap();
        assert_eq!(
            set.ids(),
            vec![
                DesignId::from_index(1),
                DesignId::from_index(2),
                DesignId::from_index(3)
            ]
        );
    }

    #[test]
    fn batch_shape_and_flow_columns() {
        let flow = FlowConditions::default();
        let set = sample(&DesignSpace::default(), 2, SamplingStrategy::Lhs, flow, 3).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&export_batch(&set)).unwrap();
        let obj = doc.as_object().unwrap();
        assert_eq!(obj.len(), 2);
        let rows = obj["samples"].as_array().unwrap();
        assert_eq!(rows.len(), 2);
        for r in rows {
            let r = r.as_array().unwrap();
            assert_eq!(r.len(), 12);
            assert_eq!(r[0].as_f64().unwrap(), 0.6);
            assert_eq!(r[1].as_f64().unwrap(), 2.5);
            assert_eq!(r[2].as_f64().unwrap(), 6.3e6);
        }
        assert_eq!(obj["designid"][1], "ID-2");
    }

    #[test]
    fn import_flags_out_of_bounds_rows() {
        let space = DesignSpace::default();
        let mut set = sample(&space, 3, SamplingStrategy::Lhs, FlowConditions::default(), 3).unwrap();
        set.members[1].params[4] = 0.9;
        let back = import_batch(&export_batch(&set), &space).unwrap();
        assert!(back.members[0].in_bounds);
        assert!(!back.members[1].in_bounds);
        assert_eq!(back.members[1].params[4], 0.9);
    }

    #[test]
    fn import_reports_bad_row() {
        let doc = r#"{"samples": [[0.6,2.5,6.3e6,1,1,1,1,1,1,1,1,1],[0.6,2.5]], "designid": ["ID-1","ID-2"]}"#;
        match import_batch(doc, &DesignSpace::default()) {
            Err(Error::Parse { row: Some(1), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(import_batch("{\"samples\": []}", &DesignSpace::default()).is_err());
    }
}
