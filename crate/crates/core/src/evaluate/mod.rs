//! Performance evaluation contracts and their implementations.
//!
//! Three evaluator families share the traits below:
//!
//! * [`AnalyticModel`]: a thin-airfoil reference model with
//!   Prandtl–Glauert compressibility scaling. Deterministic, smooth and cheap.
//! * [`SyntheticProbabilistic`]: wraps any deterministic evaluator with a
//!   fixed Gaussian spread per coefficient.
//! * [`MlpEvaluator`] / [`OperatorCpEvaluator`]: inference from JSON weight
//!   files (Gaussian-head feed-forward nets and branch/trunk operators).

mod analytic;
mod mlp;
mod operator;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CstParams, FlowConditions, Surface};
use crate::seed;

pub use analytic::{analytic_cp, analytic_evaluate, AnalyticCp, AnalyticModel, MIN_CP_POINTS};
pub use mlp::{
    gaussian_predict, mlp_infer, softplus, Activation, DenseLayer, Head, MinMax, MlpBundle, MlpEvaluator, MlpModel,
    SampledPrediction, LEAKY_RELU_SLOPE, MODEL_FORMAT_VERSION,
};
pub use operator::{operator_infer, CpQuery, OperatorCpEvaluator, OperatorModel, TrunkInput};
pub use synthetic::{synthetic_probabilistic, Sigmas, SyntheticProbabilistic};

/// Integral aerodynamic coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPrediction {
    pub cd: f64,
    pub cl: f64,
    pub cm: f64,
}

impl CoefficientPrediction {
    pub fn new(cd: f64, cl: f64, cm: f64) -> Self {
        Self { cd, cl, cm }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Cl => self.cl,
            Metric::Cd => self.cd,
            Metric::Cm => self.cm,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.cd.is_finite() && self.cl.is_finite() && self.cm.is_finite()
    }
}

/// Performance metric identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "CL")]
    Cl,
    #[serde(rename = "CD")]
    Cd,
    #[serde(rename = "CM")]
    Cm,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Cl, Metric::Cd, Metric::Cm];

    pub fn long_name(self) -> &'static str {
        match self {
            Metric::Cl => "Coefficient of Lift",
            Metric::Cd => "Coefficient of Drag",
            Metric::Cm => "Coefficient of Moment",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cl => "CL",
            Metric::Cd => "CD",
            Metric::Cm => "CM",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('_', "").as_str() {
            "CL" => Ok(Metric::Cl),
            "CD" => Ok(Metric::Cd),
            "CM" => Ok(Metric::Cm),
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

/// A normal distribution with seeded sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std < 0.0 {
            return Err(Error::Input(format!("invalid Gaussian (mean {mean}, std {std})")));
        }
        Ok(Self { mean, std })
    }

    pub fn degenerate(value: f64) -> Self {
        Self { mean: value, std: 0.0 }
    }

    /// `m` independent draws; identical `seed` gives an identical sequence.
    pub fn draw(&self, m: usize, seed: u64) -> Vec<f64> {
        if self.std == 0.0 {
            return vec![self.mean; m];
        }
        let normal = Normal::new(self.mean, self.std).expect("validated std");
        let mut rng = seed::stream_rng(seed, 0);
        normal.sample_iter(&mut rng).take(m).collect()
    }
}

/// Per-coefficient predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub cd: Gaussian,
    pub cl: Gaussian,
    pub cm: Gaussian,
}

impl PredictionDistribution {
    pub fn degenerate(p: CoefficientPrediction) -> Self {
        Self {
            cd: Gaussian::degenerate(p.cd),
            cl: Gaussian::degenerate(p.cl),
            cm: Gaussian::degenerate(p.cm),
        }
    }

    pub fn get(&self, metric: Metric) -> Gaussian {
        match metric {
            Metric::Cl => self.cl,
            Metric::Cd => self.cd,
            Metric::Cm => self.cm,
        }
    }

    pub fn mean(&self) -> CoefficientPrediction {
        CoefficientPrediction::new(self.cd.mean, self.cl.mean, self.cm.mean)
    }

    pub fn draw(&self, metric: Metric, m: usize, seed: u64) -> Vec<f64> {
        self.get(metric).draw(m, seed)
    }
}

/// One pressure-coefficient sample on the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpPoint {
    pub x: f64,
    pub surface: Surface,
    pub cp: f64,
}

/// Chordwise pressure distribution on both surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CpPoint>", into = "Vec<CpPoint>")]
pub struct CpCurve {
    points: Vec<CpPoint>,
}

impl TryFrom<Vec<CpPoint>> for CpCurve {
    type Error = Error;

    fn try_from(points: Vec<CpPoint>) -> Result<Self> {
        CpCurve::new(points)
    }
}

impl From<CpCurve> for Vec<CpPoint> {
    fn from(c: CpCurve) -> Self {
        c.points
    }
}

impl CpCurve {
    /// Checks that `x` lies in `[0, 1]` and increases strictly within each surface.
    pub fn new(points: Vec<CpPoint>) -> Result<Self> {
        for s in [Surface::Upper, Surface::Lower] {
            let mut last = f64::NEG_INFINITY;
            for p in points.iter().filter(|p| p.surface == s) {
                if !(0.0..=1.0).contains(&p.x) || !p.cp.is_finite() {
                    return Err(Error::Input(format!("Cp sample ({}, {}) out of range", p.x, p.cp)));
                }
                if p.x <= last {
                    return Err(Error::Input(format!(
                        "{s} surface x not strictly increasing at {}",
                        p.x
                    )));
                }
                last = p.x;
            }
        }
        Ok(Self { points })
    }

    /// Builds a curve from matching upper and lower samples.
    pub fn from_surfaces(upper: &[(f64, f64)], lower: &[(f64, f64)]) -> Result<Self> {
        let pts = upper
            .iter()
            .map(|&(x, cp)| CpPoint {
                x,
                surface: Surface::Upper,
                cp,
            })
            .chain(lower.iter().map(|&(x, cp)| CpPoint {
                x,
                surface: Surface::Lower,
                cp,
            }))
            .collect();
        Self::new(pts)
    }

    pub fn points(&self) -> &[CpPoint] {
        &self.points
    }

    /// `(x, Cp)` pairs of one surface, in increasing `x`.
    pub fn surface(&self, s: Surface) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.surface == s)
            .map(|p| (p.x, p.cp))
            .collect()
    }

    /// Linear interpolation on one surface; `None` outside the sampled range.
    pub fn interpolate(&self, s: Surface, x: f64) -> Option<f64> {
        let pts = self.surface(s);
        let first = pts.first()?;
        let last = pts.last()?;
        if x < first.0 || x > last.0 {
            return None;
        }
        let i = pts.partition_point(|p| p.0 < x);
        if i < pts.len() && pts[i].0 == x {
            return Some(pts[i].1);
        }
        let (x0, c0) = pts[i - 1];
        let (x1, c1) = pts[i];
        Some(c0 + (c1 - c0) * (x - x0) / (x1 - x0))
    }

    /// Trapezoidal `∫(Cp_lower − Cp_upper) dx`, the normal-force loading.
    /// Both surfaces must share stations.
    pub fn loading_integral(&self) -> f64 {
        let up = self.surface(Surface::Upper);
        let lo = self.surface(Surface::Lower);
        up.windows(2)
            .zip(lo.windows(2))
            .map(|(u, l)| {
                let dx = u[1].0 - u[0].0;
                0.5 * dx * ((l[0].1 - u[0].1) + (l[1].1 - u[1].1))
            })
            .sum()
    }
}

/// Deterministic coefficient predictor.
pub trait Evaluator: Send + Sync {
    fn name(&self) -> String;

    fn evaluate(&self, cst: &CstParams, flow: &FlowConditions) -> Result<CoefficientPrediction>;
}

/// Predictor returning a distribution per coefficient.
pub trait ProbabilisticEvaluator: Send + Sync {
    fn name(&self) -> String;

    fn predict(&self, cst: &CstParams, flow: &FlowConditions) -> Result<PredictionDistribution>;
}

/// Chordwise pressure predictor.
pub trait CpEvaluator: Send + Sync {
    fn name(&self) -> String;

    fn cp_curve(&self, cst: &CstParams, flow: &FlowConditions, n_points: usize) -> Result<CpCurve>;
}

impl<T: Evaluator + ?Sized> Evaluator for std::sync::Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn evaluate(&self, cst: &CstParams, flow: &FlowConditions) -> Result<CoefficientPrediction> {
        (**self).evaluate(cst, flow)
    }
}

impl<T: ProbabilisticEvaluator + ?Sized> ProbabilisticEvaluator for std::sync::Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn predict(&self, cst: &CstParams, flow: &FlowConditions) -> Result<PredictionDistribution> {
        (**self).predict(cst, flow)
    }
}

/// Treats a deterministic evaluator as a zero-spread probabilistic one.
pub struct Degenerate<E>(pub E);

impl<E: Evaluator> ProbabilisticEvaluator for Degenerate<E> {
    fn name(&self) -> String {
        format!("degenerate({})", self.0.name())
    }

    fn predict(&self, cst: &CstParams, flow: &FlowConditions) -> Result<PredictionDistribution> {
        Ok(PredictionDistribution::degenerate(self.0.evaluate(cst, flow)?))
    }
}

/// Uses the mean of a probabilistic evaluator as a point estimate.
pub struct MeanOf<P>(pub P);

impl<P: ProbabilisticEvaluator> Evaluator for MeanOf<P> {
    fn name(&self) -> String {
        format!("mean({})", self.0.name())
    }

    fn evaluate(&self, cst: &CstParams, flow: &FlowConditions) -> Result<CoefficientPrediction> {
        Ok(self.0.predict(cst, flow)?.mean())
    }
}
