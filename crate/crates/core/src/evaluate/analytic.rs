//! Thin-airfoil reference model.
//!
//! The camber line `z(x) = (y_u + y_l)/2` is expanded in the usual Glauert
//! series over `x = (1 − cos θ)/2`:
//!
//! ```text
//! A0 = α − (1/π)∫ z'(θ) dθ        An = (2/π)∫ z'(θ) cos nθ dθ
//! CL = π(2A0 + A1)/β               CM,c/4 = (π/4)(A2 − A1)/β
//! ```
//!
//! with `β = √(1 − Ma²)`. Drag is a parabolic polar `CD = cd0 + K·CL²`.
//! This is stand-in physics for desk-scale runs, not a CFD substitute.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{CoefficientPrediction, CpCurve, CpEvaluator, CpPoint, Evaluator};
use crate::error::{Error, Result};
use crate::geometry::{class_function, shape_derivative, shape_function, CstParams, FlowConditions, Spacing, Surface};

const FOURIER_TERMS: usize = 8;
/// Leading-edge regularisation of the `√((1−x)/x)` loading singularity.
const LE_REGULARIZATION: f64 = 0.005;
pub const MIN_CP_POINTS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticModel {
    /// Zero-lift drag coefficient.
    pub cd0: f64,
    /// Induced/lift-dependent drag factor.
    pub k: f64,
    /// Midpoint-rule panels in θ for the camber integrals.
    pub quadrature_points: usize,
}

impl Default for AnalyticModel {
    fn default() -> Self {
        Self {
            cd0: 0.006,
            k: 0.01,
            quadrature_points: 256,
        }
    }
}

/// Glauert coefficients of one camber line at one incidence.
struct ThinAirfoil {
    a0: f64,
    a: [f64; FOURIER_TERMS + 1],
    beta: f64,
}

fn prandtl_glauert(ma: f64) -> Result<f64> {
    if !ma.is_finite() || ma < 0.0 {
        return Err(Error::Domain(format!("Mach number {ma} is not a valid subsonic value")));
    }
    if ma >= 1.0 {
        return Err(Error::Domain(format!(
            "Mach number {ma} ≥ 1 is outside the subsonic model"
        )));
    }
    Ok((1.0 - ma * ma).sqrt())
}

fn camber_slope(wu: &[f64; 5], wl: &[f64; 5], x: f64) -> f64 {
    // z = C(x)·(S_u − S_l)/2; the tied first weights make S_u − S_l vanish at x = 0.
    let ds = shape_function(wu, x).expect("x in range") - shape_function(wl, x).expect("x in range");
    let dds = shape_derivative(wu, x) - shape_derivative(wl, x);
    let dc = 0.5 * x.powf(-0.5) * (1.0 - x) - x.sqrt();
    0.5 * (dc * ds + class_function(x) * dds)
}

impl ThinAirfoil {
    fn solve(cst: &CstParams, flow: &FlowConditions, panels: usize) -> Result<Self> {
        if !cst.is_finite() || !flow.aoa_deg.is_finite() {
            return Err(Error::Input("non-finite evaluator input".into()));
        }
        let beta = prandtl_glauert(flow.ma)?;
        let wu = cst.upper_weights();
        let wl = cst.lower_weights();
        let h = PI / panels as f64;
        let mut mean_slope = 0.0;
        let mut a = [0.0; FOURIER_TERMS + 1];
        for j in 0..panels {
            let theta = (j as f64 + 0.5) * h;
            let x = 0.5 * (1.0 - theta.cos());
            let dz = camber_slope(&wu, &wl, x);
            mean_slope += dz * h;
            for (n, an) in a.iter_mut().enumerate().skip(1) {
                *an += dz * (n as f64 * theta).cos() * h;
            }
        }
        for an in a.iter_mut().skip(1) {
            *an *= 2.0 / PI;
        }
        Ok(Self {
            a0: flow.aoa_rad() - mean_slope / PI,
            a,
            beta,
        })
    }

    fn cl(&self) -> f64 {
        PI * (2.0 * self.a0 + self.a[1]) / self.beta
    }

    fn cm_quarter(&self) -> f64 {
        0.25 * PI * (self.a[2] - self.a[1]) / self.beta
    }

    /// Incompressible `Cp_lower − Cp_upper` at chord station `x`.
    fn loading(&self, x: f64) -> f64 {
        let theta = (1.0 - 2.0 * x).clamp(-1.0, 1.0).acos();
        let series: f64 = self
            .a
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, an)| an * (n as f64 * theta).sin())
            .sum();
        4.0 * (self.a0 * ((1.0 - x) / (x + LE_REGULARIZATION)).sqrt() + series)
    }
}

impl AnalyticModel {
    pub fn new(cd0: f64, k: f64) -> Result<Self> {
        if !(cd0 > 0.0) || !(k >= 0.0) {
            return Err(Error::Config(format!(
                "analytic polar needs cd0 > 0 and K ≥ 0 (got {cd0}, {k})"
            )));
        }
        Ok(Self {
            cd0,
            k,
            ..Self::default()
        })
    }
}

impl Evaluator for AnalyticModel {
    fn name(&self) -> String {
        "analytic".into()
    }

    fn evaluate(&self, cst: &CstParams, flow: &FlowConditions) -> Result<CoefficientPrediction> {
        let t = ThinAirfoil::solve(cst, flow, self.quadrature_points)?;
        let cl = t.cl();
        Ok(CoefficientPrediction::new(
            self.cd0 + self.k * cl * cl,
            cl,
            t.cm_quarter(),
        ))
    }
}

/// Coefficients from the default analytic model.
pub fn analytic_evaluate(cst: &CstParams, flow: &FlowConditions) -> Result<CoefficientPrediction> {
    AnalyticModel::default().evaluate(cst, flow)
}

/// Thin-airfoil pressure proxy.
///
/// Thickness enters as the elliptic-section perturbation velocity
/// `u_t = h(x)/√(x(1−x))`, which for the CST class function reduces to
/// `√(1−x)·(S_u + S_l)/2`. The camber/incidence loading `ΔCp` is split
/// evenly between the surfaces: `Cp_u,l = −(2u_t ± ΔCp/2)/β`. Both terms
/// vanish at the trailing edge, so the surfaces close there.
pub fn analytic_cp(cst: &CstParams, flow: &FlowConditions, n_points: usize) -> Result<CpCurve> {
    if n_points < MIN_CP_POINTS {
        return Err(Error::Input(format!(
            "Cp curve needs at least {MIN_CP_POINTS} points per surface, got {n_points}"
        )));
    }
    let t = ThinAirfoil::solve(cst, flow, AnalyticModel::default().quadrature_points)?;
    let wu = cst.upper_weights();
    let wl = cst.lower_weights();
    let mut points = Vec::with_capacity(2 * n_points);
    let xs = Spacing::Cosine.stations(n_points);
    let mut lower = Vec::with_capacity(n_points);
    for &x in &xs {
        let s_avg = 0.5 * (shape_function(&wu, x)? + shape_function(&wl, x)?);
        let ut = (1.0 - x).sqrt() * s_avg;
        let dcp = t.loading(x);
        points.push(CpPoint {
            x,
            surface: Surface::Upper,
            cp: -(2.0 * ut + 0.5 * dcp) / t.beta,
        });
        lower.push(CpPoint {
            x,
            surface: Surface::Lower,
            cp: -(2.0 * ut - 0.5 * dcp) / t.beta,
        });
    }
    points.extend(lower);
    CpCurve::new(points)
}

/// [`analytic_cp`] behind the [`CpEvaluator`] contract.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticCp;

impl CpEvaluator for AnalyticCp {
    fn name(&self) -> String {
        "analytic".into()
    }

    fn cp_curve(&self, cst: &CstParams, flow: &FlowConditions, n_points: usize) -> Result<CpCurve> {
        analytic_cp(cst, flow, n_points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric() -> CstParams {
        let u = [0.13, 0.14, 0.19, 0.19, 0.2];
        CstParams::new(u, [u[1], u[2], u[3], u[4]])
    }

    fn cambered() -> CstParams {
        CstParams::new(
            [0.1288, 0.1376, 0.1922, 0.19215, 0.2020],
            [0.13595, 0.22515, 0.0762, -0.03905],
        )
    }

    #[test]
    fn symmetric_section_at_zero_incidence_has_no_lift_or_moment() {
        let p = analytic_evaluate(&symmetric(), &FlowConditions::new(0.6, 0.0, 6.3e6)).unwrap();
        assert_eq!(p.cl, 0.0);
        assert_eq!(p.cm, 0.0);
        assert!(p.cd > 0.0);
    }

    #[test]
    fn lift_is_odd_in_incidence() {
        let cst = symmetric();
        for a in [0.5, 2.5, 4.0] {
            let up = analytic_evaluate(&cst, &FlowConditions::new(0.6, a, 6.3e6)).unwrap();
            let dn = analytic_evaluate(&cst, &FlowConditions::new(0.6, -a, 6.3e6)).unwrap();
            assert_eq!(up.cl, -dn.cl);
        }
    }

    #[test]
    fn zero_camber_matches_flat_plate_formula() {
        let p = analytic_evaluate(&symmetric(), &FlowConditions::default()).unwrap();
        let expected = 2.0 * PI * (2.5 * PI / 180.0) / (1.0f64 - 0.36).sqrt();
        assert!((p.cl - expected).abs() < 1e-12);
        assert!((p.cl - 0.3427).abs() < 1e-3);
    }

    #[test]
    fn supersonic_is_rejected() {
        let flow = FlowConditions::new(1.0, 2.5, 6.3e6);
        assert!(matches!(analytic_evaluate(&cambered(), &flow), Err(Error::Domain(_))));
        assert!(matches!(analytic_cp(&cambered(), &flow, 41), Err(Error::Domain(_))));
    }

    #[test]
    fn aft_camber_gives_lift_and_nose_down_moment() {
        let p = analytic_evaluate(&cambered(), &FlowConditions::default()).unwrap();
        assert!(p.cl > 0.3427);
        assert!(p.cm < 0.0);
    }

    #[test]
    fn symmetric_cp_surfaces_coincide_at_zero_incidence() {
        let c = analytic_cp(&symmetric(), &FlowConditions::new(0.6, 0.0, 6.3e6), 41).unwrap();
        let up = c.surface(Surface::Upper);
        let lo = c.surface(Surface::Lower);
        for (u, l) in up.iter().zip(&lo) {
            assert_eq!(u, l);
        }
    }

    #[test]
    fn loading_grows_with_incidence() {
        let loads: Vec<f64> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&a| {
                analytic_cp(&cambered(), &FlowConditions::new(0.6, a, 6.3e6), 101)
                    .unwrap()
                    .loading_integral()
            })
            .collect();
        assert!(loads[0] < loads[1] && loads[1] < loads[2], "{loads:?}");
    }

    #[test]
    fn trailing_edge_closure() {
        let c = analytic_cp(&cambered(), &FlowConditions::default(), 101).unwrap();
        let u = c.interpolate(Surface::Upper, 1.0).unwrap();
        let l = c.interpolate(Surface::Lower, 1.0).unwrap();
        assert!((u - l).abs() < 1e-9);
    }

    #[test]
    fn cp_rejects_too_few_points() {
        assert!(analytic_cp(&cambered(), &FlowConditions::default(), 20).is_err());
    }
}
