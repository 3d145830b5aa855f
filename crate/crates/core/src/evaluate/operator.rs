//! Branch/trunk operator network for pressure distributions.
//!
//! `Cp(u, x) = b(u)ᵀ t(x) + bias`, where the branch network maps the
//! 12-entry design/flow vector to a latent vector of size `latent` and the
//! trunk network maps a surface coordinate to the same latent space.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{MinMax, MODEL_FORMAT_VERSION};
use super::{CpCurve, CpEvaluator, CpPoint, Head, MlpModel};
use crate::error::{Error, Result};
use crate::geometry::{generate_airfoil, CstParams, FlowConditions, Spacing, Surface};

/// What the trunk network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrunkInput {
    /// Surface point `(x, y)`.
    #[default]
    Xy,
    /// `(x, ±1)` with +1 on the upper surface.
    XSurface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorModel {
    #[serde(default = "default_version")]
    pub version: u32,
    pub branch: MlpModel,
    pub trunk: MlpModel,
    pub latent: usize,
    #[serde(default)]
    pub trunk_input: TrunkInput,
    /// Trunk coordinates are mapped from `[min, max]` to `[-1, 1]` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunk_scale: Option<MinMax>,
    /// Cp is mapped back from `[0, 1]` when present (single entry).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_norm: Option<MinMax>,
    #[serde(default)]
    pub bias: f64,
}

fn default_version() -> u32 {
    MODEL_FORMAT_VERSION
}

/// A coordinate at which Cp is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpQuery {
    pub x: f64,
    pub y: f64,
    pub surface: Surface,
}

impl OperatorModel {
    pub fn new(branch: MlpModel, trunk: MlpModel, trunk_input: TrunkInput) -> Result<Self> {
        let m = Self {
            version: MODEL_FORMAT_VERSION,
            latent: branch.output_size(),
            branch,
            trunk,
            trunk_input,
            trunk_scale: None,
            output_norm: None,
            bias: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported operator version {}", self.version)));
        }
        self.branch.validate()?;
        self.trunk.validate()?;
        if self.branch.head != Head::Point || self.trunk.head != Head::Point {
            return Err(Error::Model("branch and trunk must use point heads".into()));
        }
        if self.trunk.input_size != 2 {
            return Err(Error::Model(format!(
                "trunk takes 2 coordinates, not {}",
                self.trunk.input_size
            )));
        }
        if self.branch.output_size() != self.latent || self.trunk.output_size() != self.latent {
            return Err(Error::Model(format!(
                "branch ({}) and trunk ({}) outputs must both equal latent size {}",
                self.branch.output_size(),
                self.trunk.output_size(),
                self.latent
            )));
        }
        if let Some(s) = &self.trunk_scale {
            if s.min.len() != 2 || s.max.len() != 2 {
                return Err(Error::Model("trunk scaling needs two entries".into()));
            }
        }
        if let Some(n) = &self.output_norm {
            if n.min.len() != 1 || n.max.len() != 1 {
                return Err(Error::Model("operator output normalisation needs one entry".into()));
            }
        }
        Ok(())
    }

    fn trunk_coords(&self, q: &CpQuery) -> [f64; 2] {
        let raw = match self.trunk_input {
            TrunkInput::Xy => [q.x, q.y],
            TrunkInput::XSurface => [q.x, q.surface.sign()],
        };
        match &self.trunk_scale {
            Some(s) => [0, 1].map(|i| 2.0 * (raw[i] - s.min[i]) / (s.max[i] - s.min[i]) - 1.0),
            None => raw,
        }
    }

    /// Cp at each query point, in query order.
    pub fn evaluate(&self, input: &[f64], queries: &[CpQuery]) -> Result<Vec<f64>> {
        let b = self.branch.infer(input)?;
        queries
            .iter()
            .map(|q| {
                let t = self.trunk.infer(&self.trunk_coords(q))?;
                let v = b.iter().zip(&t).map(|(x, y)| x * y).sum::<f64>() + self.bias;
                Ok(match &self.output_norm {
                    Some(n) => n.denormalize(0, v),
                    None => v,
                })
            })
            .collect()
    }
}

/// Cp curve at the query coordinates.
pub fn operator_infer(model: &OperatorModel, input: &[f64], queries: &[CpQuery]) -> Result<CpCurve> {
    let values = model.evaluate(input, queries)?;
    CpCurve::new(
        queries
            .iter()
            .zip(values)
            .map(|(q, cp)| CpPoint {
                x: q.x,
                surface: q.surface,
                cp,
            })
            .collect(),
    )
}

/// Queries every surface station of the candidate's geometry.
pub struct OperatorCpEvaluator {
    model: OperatorModel,
    label: String,
}

impl OperatorCpEvaluator {
    pub fn new(model: OperatorModel, label: impl Into<String>) -> Self {
        Self {
            model,
            label: label.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(
            OperatorModel::load(path)?,
            format!("operator:{}", path.display()),
        ))
    }
}

impl CpEvaluator for OperatorCpEvaluator {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn cp_curve(&self, cst: &CstParams, flow: &FlowConditions, n_points: usize) -> Result<CpCurve> {
        let g = generate_airfoil(cst, n_points, Spacing::Cosine)?;
        let queries: Vec<CpQuery> = g
            .upper
            .iter()
            .map(|p| CpQuery {
                x: p[0],
                y: p[1],
                surface: Surface::Upper,
            })
            .chain(g.lower.iter().map(|p| CpQuery {
                x: p[0],
                y: p[1],
                surface: Surface::Lower,
            }))
            .collect();
        let mut input = vec![flow.ma, flow.aoa_deg, flow.re];
        input.extend_from_slice(&cst.to_vector());
        operator_infer(&self.model, &input, &queries)
    }
}
