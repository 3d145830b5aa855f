//! Deterministic pressure-distribution rating.
//!
//! The rubric looks at the upper surface only:
//!
//! 1. Mid-chord peak prominence `p`: the largest depth of `Cp` below the
//!    straight line joining `Cp(x₀)` and `Cp(x₁)` over the window `[x₀, x₁]`.
//!    `p ≥ severe` rates 1, `p ≥ moderate` rates 2, otherwise the base is 3.
//! 2. A base-3 curve gains one point when its steepest adverse gradient is
//!    below the benchmark's, and another when its peak suction is below the
//!    benchmark's. A curve equal to the benchmark therefore rates 3.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::CpCurve;
use crate::geometry::Surface;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RubricConfig {
    pub window: (f64, f64),
    /// Prominence at or above which the rating is 1.
    pub severe: f64,
    /// Prominence at or above which the rating is 2.
    pub moderate: f64,
    /// Gradients are measured aft of this station to skip the stagnation region.
    pub gradient_start: f64,
    /// Relative margin below which two gradients or peaks count as equal.
    pub tolerance: f64,
}

impl Default for RubricConfig {
    fn default() -> Self {
        Self {
            window: (0.3, 0.6),
            severe: 0.8,
            moderate: 0.4,
            gradient_start: 0.02,
            tolerance: 1e-9,
        }
    }
}

impl RubricConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.window;
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(Error::Config(format!(
                "rubric window ({a}, {b}) must satisfy 0 ≤ a < b ≤ 1"
            )));
        }
        if !(0.0 < self.moderate && self.moderate < self.severe) {
            return Err(Error::Config("rubric needs 0 < moderate < severe".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpRating {
    pub rating: u8,
    pub peak_prominence: f64,
    pub max_adverse_gradient: f64,
    pub peak_suction: f64,
    pub notes: Vec<String>,
}

/// Shape features of one upper-surface distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpFeatures {
    pub prominence: f64,
    pub max_adverse_gradient: f64,
    pub peak_suction: f64,
}

pub fn cp_features(curve: &CpCurve, cfg: &RubricConfig) -> Result<CpFeatures> {
    let upper = curve.surface(Surface::Upper);
    let (x0, x1) = cfg.window;
    let c0 = curve
        .interpolate(Surface::Upper, x0)
        .ok_or_else(|| Error::Input(format!("upper-surface Cp does not cover x = {x0}")))?;
    let c1 = curve
        .interpolate(Surface::Upper, x1)
        .ok_or_else(|| Error::Input(format!("upper-surface Cp does not cover x = {x1}")))?;
    let inside: Vec<&(f64, f64)> = upper.iter().filter(|(x, _)| *x > x0 && *x < x1).collect();
    if inside.is_empty() {
        return Err(Error::Input(format!("no upper-surface Cp samples inside ({x0}, {x1})")));
    }
    let prominence = inside
        .iter()
        .map(|(x, cp)| c0 + (c1 - c0) * (x - x0) / (x1 - x0) - cp)
        .fold(0.0f64, f64::max);
    let max_adverse_gradient = upper
        .windows(2)
        .filter(|w| w[0].0 >= cfg.gradient_start)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .fold(0.0f64, f64::max);
    let peak_suction = upper.iter().map(|(_, cp)| -cp).fold(f64::NEG_INFINITY, f64::max);
    Ok(CpFeatures {
        prominence,
        max_adverse_gradient,
        peak_suction,
    })
}

fn strictly_below(value: f64, reference: f64, tol: f64) -> bool {
    value < reference - tol * reference.abs().max(1.0)
}

pub fn rate_cp(curve: &CpCurve, benchmark: &CpCurve, cfg: &RubricConfig) -> Result<CpRating> {
    let f = cp_features(curve, cfg)?;
    let b = cp_features(benchmark, cfg)?;
    let mut notes = Vec::new();
    let rating = if f.prominence >= cfg.severe {
        notes.push(format!("pronounced mid-chord suction peak (depth {:.3})", f.prominence));
        1
    } else if f.prominence >= cfg.moderate {
        notes.push(format!("moderate mid-chord suction peak (depth {:.3})", f.prominence));
        2
    } else {
        let mut r = 3;
        if strictly_below(f.max_adverse_gradient, b.max_adverse_gradient, cfg.tolerance) {
            r += 1;
            notes.push(format!(
                "gentler pressure recovery than benchmark ({:.3} vs {:.3})",
                f.max_adverse_gradient, b.max_adverse_gradient
            ));
        }
        if strictly_below(f.peak_suction, b.peak_suction, cfg.tolerance) {
            r += 1;
            notes.push(format!(
                "lower peak suction than benchmark ({:.3} vs {:.3})",
                f.peak_suction, b.peak_suction
            ));
        }
        if r == 3 {
            notes.push("comparable to benchmark".into());
        }
        r
    };
    Ok(CpRating {
        rating: rating.clamp(1, 5),
        peak_prominence: f.prominence,
        max_adverse_gradient: f.max_adverse_gradient,
        peak_suction: f.peak_suction,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::analytic_cp;
    use crate::geometry::{CstParams, FlowConditions, Spacing};

    fn benchmark() -> CpCurve {
        let cst = CstParams::new(
            [0.1288, 0.1376, 0.1922, 0.19215, 0.2020],
            [0.13595, 0.22515, 0.0762, -0.03905],
        );
        analytic_cp(&cst, &FlowConditions::default(), 101).unwrap()
    }

    fn map_upper(c: &CpCurve, f: impl Fn(f64, f64) -> f64) -> CpCurve {
        let upper: Vec<(f64, f64)> = c
            .surface(Surface::Upper)
            .into_iter()
            .map(|(x, cp)| (x, f(x, cp)))
            .collect();
        CpCurve::from_surfaces(&upper, &c.surface(Surface::Lower)).unwrap()
    }

    #[test]
    fn benchmark_rates_three() {
        let b = benchmark();
        let r = rate_cp(&b, &b, &RubricConfig::default()).unwrap();
        assert_eq!(r.rating, 3);
        assert!(r.peak_prominence < 0.4);
    }

    #[test]
    fn injected_notch_rates_one() {
        let b = benchmark();
        let xs = Spacing::Uniform.stations(101);
        let upper: Vec<(f64, f64)> = xs
            .iter()
            .map(|&x| {
                let base = b.interpolate(Surface::Upper, x).unwrap();
                (x, if (x - 0.45).abs() < 1e-12 { base - 1.0 } else { base })
            })
            .collect();
        let notched = CpCurve::from_surfaces(&upper, &b.surface(Surface::Lower)).unwrap();
        let r = rate_cp(&notched, &b, &RubricConfig::default()).unwrap();
        assert!(r.peak_prominence >= 0.8, "{}", r.peak_prominence);
        assert_eq!(r.rating, 1);
    }

    #[test]
    fn half_gradient_same_peak_rates_four() {
        let b = benchmark();
        let peak = b
            .surface(Surface::Upper)
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min);
        let smooth = map_upper(&b, |_, cp| peak + 0.5 * (cp - peak));
        let r = rate_cp(&smooth, &b, &RubricConfig::default()).unwrap();
        assert_eq!(r.rating, 4, "{:?}", r.notes);
    }

    #[test]
    fn moderate_peak_rates_two() {
        let b = benchmark();
        let bumped = map_upper(&b, |x, cp| cp - 0.6 * (-((x - 0.45) / 0.03).powi(2)).exp());
        assert_eq!(rate_cp(&bumped, &b, &RubricConfig::default()).unwrap().rating, 2);
    }

    #[test]
    fn uncovered_window_is_an_error() {
        let short = CpCurve::from_surfaces(&[(0.0, 0.0), (0.2, -0.5)], &[(0.0, 0.0), (0.2, 0.1)]).unwrap();
        assert!(rate_cp(&short, &benchmark(), &RubricConfig::default()).is_err());
    }
}
