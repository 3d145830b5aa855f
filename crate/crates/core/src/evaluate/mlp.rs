//! Feed-forward network inference from JSON weight files.
//!
//! Weight file schema (`version` 1):
//!
//! ```json
//! {
//!   "version": 1,
//!   "input_size": 12,
//!   "head": "gaussian",
//!   "input_norm": {"min": [...], "max": [...]},
//!   "output_norm": {"min": [...], "max": [...]},
//!   "layers": [
//!     {"weights": [[...], ...], "bias": [...], "activation": "leaky_relu"},
//!     {"weights": [[...], [...]], "bias": [0.0, 0.0], "activation": "linear"}
//!   ]
//! }
//! ```
//!
//! `weights` is row-major `out × in`. Inputs are min-max scaled to `[0, 1]`
//! when `input_norm` is present and outputs are mapped back from `[0, 1]`
//! when `output_norm` is present. A Gaussian head reads the two final
//! outputs as `(mean, raw spread)` and returns `(mean, softplus(raw))`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CoefficientPrediction, Evaluator, Gaussian, PredictionDistribution, ProbabilisticEvaluator};
use crate::error::{Error, Result};
use crate::geometry::{CstParams, FlowConditions};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    LeakyRelu,
    Softplus,
    Swish,
    Tanh,
}

/// Numerically stable `ln(1 + eˣ)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            Activation::Softplus => softplus(x),
            Activation::Swish => x / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| {
                let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
                self.activation.apply(z)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    #[default]
    Point,
    Gaussian,
}

/// Per-feature min-max scaling constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    fn check(&self, len: usize, what: &str) -> Result<()> {
        if self.min.len() != len || self.max.len() != len {
            return Err(Error::Model(format!("{what} normalisation must have {len} entries")));
        }
        if self.min.iter().zip(&self.max).any(|(a, b)| !(b > a)) {
            return Err(Error::Model(format!("{what} normalisation needs max > min")));
        }
        Ok(())
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub fn denormalize(&self, i: usize, v: f64) -> f64 {
        self.min[i] + v * (self.max[i] - self.min[i])
    }

    pub fn range(&self, i: usize) -> f64 {
        self.max[i] - self.min[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    #[serde(default = "default_version")]
    pub version: u32,
    pub input_size: usize,
    #[serde(default)]
    pub head: Head,
    pub layers: Vec<DenseLayer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_norm: Option<MinMax>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_norm: Option<MinMax>,
}

fn default_version() -> u32 {
    MODEL_FORMAT_VERSION
}

impl MlpModel {
    pub fn new(input_size: usize, head: Head, layers: Vec<DenseLayer>) -> Result<Self> {
        let m = Self {
            version: MODEL_FORMAT_VERSION,
            input_size,
            head,
            layers,
            input_norm: None,
            output_norm: None,
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

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(self.input_size, DenseLayer::outputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported model version {}", self.version)));
        }
        if self.layers.is_empty() {
            return Err(Error::Model("model has no layers".into()));
        }
        let mut width = self.input_size;
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.bias.len() {
                return Err(Error::Model(format!(
                    "layer {k}: {} weight rows but {} biases",
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            if layer.weights.iter().any(|r| r.len() != width) {
                return Err(Error::Model(format!("layer {k}: expected {width} inputs per row")));
            }
            width = layer.outputs();
        }
        if self.head == Head::Gaussian && width != 2 {
            return Err(Error::Model(format!(
                "gaussian head needs 2 outputs, model has {width}"
            )));
        }
        if let Some(n) = &self.input_norm {
            n.check(self.input_size, "input")?;
        }
        if let Some(n) = &self.output_norm {
            let expected = if self.head == Head::Gaussian { 1 } else { width };
            n.check(expected, "output")?;
        }
        Ok(())
    }

    /// Raw forward pass through every layer (after input scaling).
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_size {
            return Err(Error::Model(format!(
                "model expects {} inputs, got {}",
                self.input_size,
                input.len()
            )));
        }
        let mut x = match &self.input_norm {
            Some(n) => n.normalize(input),
            None => input.to_vec(),
        };
        for layer in &self.layers {
            x = layer.forward(&x);
        }
        Ok(x)
    }

    /// Model outputs: the de-normalised vector for a point head, `[mean, std]`
    /// for a Gaussian head.
    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        let raw = self.forward(input)?;
        Ok(match self.head {
            Head::Point => match &self.output_norm {
                Some(n) => raw.iter().enumerate().map(|(i, v)| n.denormalize(i, *v)).collect(),
                None => raw,
            },
            Head::Gaussian => {
                let g = self.gaussian_from_raw(&raw);
                vec![g.mean, g.std]
            }
        })
    }

    fn gaussian_from_raw(&self, raw: &[f64]) -> Gaussian {
        let std = softplus(raw[1]);
        match &self.output_norm {
            Some(n) => Gaussian {
                mean: n.denormalize(0, raw[0]),
                std: std * n.range(0),
            },
            None => Gaussian { mean: raw[0], std },
        }
    }

    /// Predictive Gaussian of a Gaussian-head model; a point head yields a
    /// zero-spread distribution on its first output.
    pub fn predict_gaussian(&self, input: &[f64]) -> Result<Gaussian> {
        match self.head {
            Head::Gaussian => Ok(self.gaussian_from_raw(&self.forward(input)?)),
            Head::Point => Ok(Gaussian::degenerate(self.infer(input)?[0])),
        }
    }
}

/// Exact forward pass.
pub fn mlp_infer(model: &MlpModel, input: &[f64]) -> Result<Vec<f64>> {
    model.infer(input)
}

/// Head distribution plus `m` seeded draws from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPrediction {
    pub distribution: Gaussian,
    pub draws: Vec<f64>,
}

pub fn gaussian_predict(model: &MlpModel, input: &[f64], m: usize, seed: u64) -> Result<SampledPrediction> {
    if m < 2 {
        return Err(Error::Input(format!("need at least 2 draws, got {m}")));
    }
    if model.head != Head::Gaussian {
        return Err(Error::Model("gaussian_predict requires a gaussian head".into()));
    }
    let distribution = model.predict_gaussian(input)?;
    Ok(SampledPrediction {
        draws: distribution.draw(m, seed),
        distribution,
    })
}

/// One model per coefficient, all fed `[Ma, AoA, Re, CST1..CST9]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpBundle {
    #[serde(default = "default_version")]
    pub version: u32,
    pub cd: MlpModel,
    pub cl: MlpModel,
    pub cm: MlpModel,
}

impl MlpBundle {
    pub fn from_json(text: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(text)?;
        if b.version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported bundle version {}", b.version)));
        }
        for m in [&b.cd, &b.cl, &b.cm] {
            m.validate()?;
            if m.input_size != 12 {
                return Err(Error::Model(format!(
                    "coefficient models take 12 inputs, got {}",
                    m.input_size
                )));
            }
        }
        Ok(b)
    }
}

pub struct MlpEvaluator {
    bundle: MlpBundle,
    label: String,
}

impl MlpEvaluator {
    pub fn new(bundle: MlpBundle, label: impl Into<String>) -> Self {
        Self {
            bundle,
            label: label.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(
            MlpBundle::from_json(&text)?,
            format!("mlp:{}", path.display()),
        ))
    }
}

fn input_vector(cst: &CstParams, flow: &FlowConditions) -> [f64; 12] {
    let mut row = [0.0; 12];
    row[0] = flow.ma;
    row[1] = flow.aoa_deg;
    row[2] = flow.re;
    row[3..].copy_from_slice(&cst.to_vector());
    row
}

impl ProbabilisticEvaluator for MlpEvaluator {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn predict(&self, cst: &CstParams, flow: &FlowConditions) -> Result<PredictionDistribution> {
        let x = input_vector(cst, flow);
        Ok(PredictionDistribution {
            cd: self.bundle.cd.predict_gaussian(&x)?,
            cl: self.bundle.cl.predict_gaussian(&x)?,
            cm: self.bundle.cm.predict_gaussian(&x)?,
        })
    }
}

impl Evaluator for MlpEvaluator {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn evaluate(&self, cst: &CstParams, flow: &FlowConditions) -> Result<CoefficientPrediction> {
        Ok(self.predict(cst, flow)?.mean())
    }
}
