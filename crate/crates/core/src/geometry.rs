//! Class-shape transformation (CST) airfoil geometry.
//!
//! A surface is `y(x) = ±(C(x)·S(x) + x·y_te)` where the class function is
//! `C(x) = x^0.5·(1 − x)` (round nose, sharp tail) and the shape function
//! `S(x)` is a degree-4 Bernstein combination of five weights. The lower
//! surface reuses the first upper weight so the two surfaces share the same
//! leading-edge radius; only the four aft lower weights are free.
//!
//! The lower surface is evaluated with a negative sign, so positive lower
//! weights put the surface below the chord line and a negative last lower
//! weight lifts the aft lower surface (aft camber).

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent of `x` in the class function (round leading edge).
pub const CLASS_N1: f64 = 0.5;
/// Exponent of `1 − x` in the class function (sharp trailing edge).
pub const CLASS_N2: f64 = 1.0;
/// Bernstein degree used on both surfaces.
pub const BERNSTEIN_DEGREE: usize = 4;
/// Number of free CST weights (5 upper + 4 lower).
pub const N_CST: usize = 9;
/// Default samples per surface; the closed outline then has 201 points.
pub const DEFAULT_SURFACE_POINTS: usize = 101;
/// Smallest accepted number of samples per surface.
pub const MIN_SURFACE_POINTS: usize = 11;

/// A 2-D point `[x, y]` in chord fractions.
pub type Point = [f64; 2];

/// Which side of the chord line a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Upper,
    Lower,
}

impl Surface {
    pub fn sign(self) -> f64 {
        match self {
            Surface::Upper => 1.0,
            Surface::Lower => -1.0,
        }
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Surface::Upper => "upper",
            Surface::Lower => "lower",
        })
    }
}

/// CST weights of one airfoil.
///
/// `upper` holds `w_u1..w_u5`; `lower` holds `w_l2..w_l5`. The first lower
/// weight is always `upper[0]` and is never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CstParams {
    pub upper: [f64; 5],
    pub lower: [f64; 4],
    #[serde(default)]
    pub y_te: f64,
}

impl CstParams {
    pub fn new(upper: [f64; 5], lower: [f64; 4]) -> Self {
        Self {
            upper,
            lower,
            y_te: 0.0,
        }
    }

    /// Builds parameters from the flat `CST1..CST9` ordering used by batch files.
    pub fn from_vector(v: &[f64; N_CST]) -> Self {
        Self::new([v[0], v[1], v[2], v[3], v[4]], [v[5], v[6], v[7], v[8]])
    }

    pub fn to_vector(&self) -> [f64; N_CST] {
        let u = &self.upper;
        let l = &self.lower;
        [u[0], u[1], u[2], u[3], u[4], l[0], l[1], l[2], l[3]]
    }

    pub fn upper_weights(&self) -> [f64; 5] {
        self.upper
    }

    /// Lower-surface weights with the tied leading-edge weight in front.
    pub fn lower_weights(&self) -> [f64; 5] {
        let l = &self.lower;
        [self.upper[0], l[0], l[1], l[2], l[3]]
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().chain(self.lower.iter()).all(|w| w.is_finite()) && self.y_te.is_finite()
    }
}

/// Free-stream operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConditions {
    pub ma: f64,
    pub aoa_deg: f64,
    pub re: f64,
}

impl FlowConditions {
    pub fn new(ma: f64, aoa_deg: f64, re: f64) -> Self {
        Self { ma, aoa_deg, re }
    }

    pub fn aoa_rad(&self) -> f64 {
        self.aoa_deg.to_radians()
    }
}

impl Default for FlowConditions {
    /// Single-point design condition: Ma 0.6, AoA 2.5°, Re 6.3e6.
    fn default() -> Self {
        Self::new(0.6, 2.5, 6.3e6)
    }
}

/// Chordwise distribution of surface samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Cosine,
    Uniform,
}

impl FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Spacing::Cosine),
            "uniform" => Ok(Spacing::Uniform),
            other => Err(Error::Config(format!("unknown point spacing '{other}'"))),
        }
    }
}

impl Spacing {
    /// `n` chord stations from 0 to 1 inclusive.
    pub fn stations(self, n: usize) -> Vec<f64> {
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i == 0 {
                    0.0
                } else if i == n - 1 {
                    1.0
                } else {
                    let t = i as f64 / last;
                    match self {
                        Spacing::Cosine => 0.5 * (1.0 - (PI * t).cos()),
                        Spacing::Uniform => t,
                    }
                }
            })
            .collect()
    }
}

/// Surface coordinates of one airfoil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirfoilGeometry {
    /// Leading edge to trailing edge.
    pub upper: Vec<Point>,
    /// Leading edge to trailing edge.
    pub lower: Vec<Point>,
    /// Closed outline: trailing edge → upper → leading edge → lower → trailing edge.
    /// The shared leading-edge point appears once.
    pub outline: Vec<Point>,
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn check_chord(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("chord fraction {x} outside [0, 1]")));
    }
    Ok(())
}

/// Bernstein basis polynomial `C(n,i)·xⁱ·(1−x)ⁿ⁻ⁱ`.
pub fn bernstein(i: usize, n: usize, x: f64) -> Result<f64> {
    if i > n {
        return Err(Error::Domain(format!("bernstein index {i} exceeds degree {n}")));
    }
    check_chord(x)?;
    Ok(binomial(n, i) * x.powi(i as i32) * (1.0 - x).powi((n - i) as i32))
}

/// `C(x) = x^0.5 · (1 − x)`.
pub fn class_function(x: f64) -> f64 {
    x.powf(CLASS_N1) * (1.0 - x).powf(CLASS_N2)
}

/// Bernstein-weighted shape function `S(x)`; degree is `weights.len() − 1`.
pub fn shape_function(weights: &[f64], x: f64) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::Input("shape function needs at least one weight".into()));
    }
    let n = weights.len() - 1;
    let mut s = 0.0;
    for (i, w) in weights.iter().enumerate() {
        s += w * bernstein(i, n, x)?;
    }
    Ok(s)
}

/// Derivative `dS/dx` of the shape function.
pub(crate) fn shape_derivative(weights: &[f64], x: f64) -> f64 {
    let n = weights.len() - 1;
    if n == 0 {
        return 0.0;
    }
    // d/dx Σ wᵢ Bᵢ,ₙ = n Σ (wᵢ₊₁ − wᵢ) Bᵢ,ₙ₋₁
    (0..n)
        .map(|i| {
            let b = binomial(n - 1, i) * x.powi(i as i32) * (1.0 - x).powi((n - 1 - i) as i32);
            (weights[i + 1] - weights[i]) * b
        })
        .sum::<f64>()
        * n as f64
}

/// Surface ordinate at chord station `x`.
///
/// Upper: `C(x)·S(x) + x·y_te`; lower: the negative of the same expression,
/// so the trailing edge opens symmetrically to `±y_te`.
pub fn surface_y(weights: &[f64], x: f64, y_te: f64, surface: Surface) -> Result<f64> {
    check_chord(x)?;
    let s = shape_function(weights, x)?;
    Ok(surface.sign() * (class_function(x) * s + x * y_te))
}

/// Samples both surfaces and assembles the closed outline.
pub fn generate_airfoil(cst: &CstParams, n_points: usize, spacing: Spacing) -> Result<AirfoilGeometry> {
    if n_points < MIN_SURFACE_POINTS {
        return Err(Error::Input(format!(
            "need at least {MIN_SURFACE_POINTS} points per surface, got {n_points}"
        )));
    }
    if !cst.is_finite() {
        return Err(Error::Input("CST weights must be finite".into()));
    }
    let xs = spacing.stations(n_points);
    let wu = cst.upper_weights();
    let wl = cst.lower_weights();
    let mut upper = Vec::with_capacity(n_points);
    let mut lower = Vec::with_capacity(n_points);
    for &x in &xs {
        upper.push([x, surface_y(&wu, x, cst.y_te, Surface::Upper)?]);
        lower.push([x, surface_y(&wl, x, cst.y_te, Surface::Lower)?]);
    }
    let mut outline = Vec::with_capacity(2 * n_points - 1);
    outline.extend(upper.iter().rev().copied());
    outline.extend(lower.iter().skip(1).copied());
    Ok(AirfoilGeometry { upper, lower, outline })
}

/// Selig-style coordinate file: a name line followed by `x y` pairs along the outline.
pub fn export_coordinates(geom: &AirfoilGeometry, name: &str) -> String {
    let mut out = String::with_capacity(32 * (geom.outline.len() + 1));
    out.push_str(name.trim());
    out.push('\n');
    for [x, y] in &geom.outline {
        let _ = writeln!(out, "{x:.12} {y:.12}");
    }
    out
}

/// Parses a Selig-style coordinate file back into its name and outline.
pub fn parse_coordinates(text: &str) -> Result<(String, Vec<Point>)> {
    let mut lines = text.lines();
    let name = lines
        .next()
        .ok_or_else(|| Error::parse(None, "empty coordinate file"))?
        .trim()
        .to_string();
    let mut points = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = || -> Result<f64> {
            fields
                .next()
                .ok_or_else(|| Error::parse(Some(row), "expected two columns"))?
                .parse::<f64>()
                .map_err(|e| Error::parse(Some(row), e.to_string()))
        };
        let x = next()?;
        let y = next()?;
        points.push([x, y]);
    }
    Ok((name, points))
}

/// Extrudes the outline into a thin wing section in Wavefront OBJ format.
///
/// Vertices `1..=L` lie at `z = 0`, `L+1..=2L` at `z = span`. Each end gets
/// one polygon face and every outline segment becomes a quad side wall.
pub fn export_obj(geom: &AirfoilGeometry, span: f64) -> Result<String> {
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::Input(format!("extrusion span must be positive, got {span}")));
    }
    let n = geom.outline.len();
    if n < 3 {
        return Err(Error::Input("outline needs at least three points".into()));
    }
    let mut out = String::new();
    out.push_str("# extruded airfoil section\no airfoil\n");
    for z in [0.0, span] {
        for [x, y] in &geom.outline {
            let _ = writeln!(out, "v {x:.12} {y:.12} {z:.12}");
        }
    }
    let idx = |i: usize, side: usize| i + 1 + side * n;
    // end caps
    out.push('f');
    for i in 0..n {
        let _ = write!(out, " {}", idx(i, 0));
    }
    out.push_str("\nf");
    for i in (0..n).rev() {
        let _ = write!(out, " {}", idx(i, 1));
    }
    out.push('\n');
    let closed = geom.outline[0] == geom.outline[n - 1];
    let segments = if closed { n - 1 } else { n };
    for i in 0..segments {
        let j = (i + 1) % n;
        let _ = writeln!(out, "f {} {} {} {}", idx(i, 0), idx(j, 0), idx(j, 1), idx(i, 1));
    }
    Ok(out)
}
