//! Variance-based global sensitivity analysis.
//!
//! A Saltelli design holds base matrices `A`, `B` and the cross matrices
//! `A_B^(i)` (A with column i from B) and `B_A^(i)` (B with column i from A),
//! for `N(2P + 2)` rows in total. First-order indices use the Saltelli 2010
//! estimator and total-effect indices the Jansen estimator, each averaged over
//! the two base orientations:
//!
//! ```text
//! V_i  = 1/N Σ f(B)(f(A_B^i) − f(A))        S_i  = V_i / V
//! VT_i = 1/2N Σ (f(A) − f(A_B^i))²          S_Ti = VT_i / V
//! ```
//!
//! Outputs are centred on the pooled `A ∪ B` mean and `V` is the pooled
//! variance, which makes the indices exactly invariant to affine rescaling.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{Evaluator, Metric};
use crate::geometry::{CstParams, FlowConditions, N_CST};
use crate::sampling::{DesignSpace, ParamBound};
use crate::seed;
use crate::sobol::{SobolSequence, MAX_DIMS};

pub const DEFAULT_BASE_N: usize = 128;
pub const DEFAULT_TOP_K: usize = 4;
pub const MIN_GRID: usize = 16;
const SECOND_ORDER_INNER: usize = 64;

/// Saltelli sampling design, stored in parameter units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaltelliDesign {
    pub base_n: usize,
    pub names: Vec<String>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// `ab[i]` is `A` with column `i` taken from `B`.
    pub ab: Vec<Vec<Vec<f64>>>,
    /// `ba[i]` is `B` with column `i` taken from `A`.
    pub ba: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SaltelliDesign {
    pub fn dims(&self) -> usize {
        self.names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.base_n * (2 * self.dims() + 2)
    }

    /// All rows in evaluation order: `A`, `B`, `A_B^(1..P)`, `B_A^(1..P)`.
    pub fn rows(&self) -> Vec<&[f64]> {
        let mut rows = Vec::with_capacity(self.n_rows());
        rows.extend(self.a.iter().map(Vec::as_slice));
        rows.extend(self.b.iter().map(Vec::as_slice));
        for m in self.ab.iter().chain(&self.ba) {
            rows.extend(m.iter().map(Vec::as_slice));
        }
        rows
    }

    fn block(&self, k: usize) -> std::ops::Range<usize> {
        k * self.base_n..(k + 1) * self.base_n
    }
}

fn build_design(bounds: &[ParamBound], base_n: usize, seed: u64) -> Result<SaltelliDesign> {
    let p = bounds.len();
    if p == 0 || 2 * p > MAX_DIMS {
        return Err(Error::Config(format!(
            "Saltelli design supports 1..={} parameters, got {p}",
            MAX_DIMS / 2
        )));
    }
    if base_n < 2 {
        return Err(Error::Config(format!("base_n must be at least 2, got {base_n}")));
    }
    let mut warnings = Vec::new();
    if !base_n.is_power_of_two() {
        let w = format!("base_n {base_n} is not a power of two; Sobol balance is lost");
        log::warn!("{w}");
        warnings.push(w);
    }
    let mut rng = seed::rng_for(seed, "saltelli");
    let shift: Vec<u32> = (0..2 * p).map(|_| rand::Rng::random(&mut rng)).collect();
    let seq = SobolSequence::new(2 * p)?.with_digital_shift(shift);
    let scale = |u: &[f64]| -> Vec<f64> { bounds.iter().zip(u).map(|(b, &t)| b.from_unit(t)).collect() };
    let mut a = Vec::with_capacity(base_n);
    let mut b = Vec::with_capacity(base_n);
    for j in 0..base_n as u64 {
        let u = seq.point(j);
        a.push(scale(&u[..p]));
        b.push(scale(&u[p..]));
    }
    let cross = |base: &[Vec<f64>], donor: &[Vec<f64>], i: usize| -> Vec<Vec<f64>> {
        base.iter()
            .zip(donor)
            .map(|(r, d)| {
                let mut r = r.clone();
                r[i] = d[i];
                r
            })
            .collect()
    };
    let ab = (0..p).map(|i| cross(&a, &b, i)).collect();
    let ba = (0..p).map(|i| cross(&b, &a, i)).collect();
    Ok(SaltelliDesign {
        base_n,
        names: bounds.iter().map(|b| b.name.clone()).collect(),
        a,
        b,
        ab,
        ba,
        warnings,
    })
}

/// Saltelli design over the design space. A non-power-of-two `base_n` is
/// accepted and recorded in `warnings`.
pub fn saltelli_sample(space: &DesignSpace, base_n: usize, seed: u64) -> Result<SaltelliDesign> {
    build_design(&space.bounds, base_n, seed)
}

/// Saltelli design over the unit cube `[0, 1)^dims`, parameters `x1..`.
pub fn saltelli_unit(dims: usize, base_n: usize, seed: u64) -> Result<SaltelliDesign> {
    build_design(&unit_bounds(dims), base_n, seed)
}

pub fn unit_bounds(dims: usize) -> Vec<ParamBound> {
    (1..=dims)
        .map(|i| ParamBound {
            name: format!("x{i}"),
            lower: 0.0,
            upper: 1.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub s_first: Vec<f64>,
    pub s_total: Vec<f64>,
}

fn pooled_variance(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(var > 1e-24 * scale * scale) || !var.is_finite() {
        return Err(Error::Degenerate(format!(
            "output variance {var} is zero or not finite"
        )));
    }
    Ok((mean, var))
}

/// First-order and total-effect indices from outputs aligned with
/// [`SaltelliDesign::rows`].
pub fn sobol_first_total(design: &SaltelliDesign, outputs: &[f64]) -> Result<SobolIndices> {
    let p = design.dims();
    let n = design.base_n;
    if outputs.len() != design.n_rows() {
        return Err(Error::Input(format!(
            "{} outputs for a design of {} rows",
            outputs.len(),
            design.n_rows()
        )));
    }
    if outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite model output".into()));
    }
    let (mean, var) = pooled_variance(&outputs[..2 * n])?;
    let y: Vec<f64> = outputs.iter().map(|v| v - mean).collect();
    let fa = &y[design.block(0)];
    let fb = &y[design.block(1)];
    let mut s_first = Vec::with_capacity(p);
    let mut s_total = Vec::with_capacity(p);
    for i in 0..p {
        let fab = &y[design.block(2 + i)];
        let fba = &y[design.block(2 + p + i)];
        let mut vi = 0.0;
        let mut vti = 0.0;
        for j in 0..n {
            vi += fb[j] * (fab[j] - fa[j]) + fa[j] * (fba[j] - fb[j]);
            vti += (fa[j] - fab[j]).powi(2) + (fb[j] - fba[j]).powi(2);
        }
        s_first.push(vi / (2.0 * n as f64) / var);
        s_total.push(vti / (4.0 * n as f64) / var);
    }
    Ok(SobolIndices { s_first, s_total })
}

/// Closed second-order index `S_ij` by brute-force conditional expectation.
///
/// `(x_i, x_j)` runs over the midpoints of an `n_grid × n_grid` grid; the
/// remaining coordinates use one common inner sample for every cell, so
/// additive functions give exactly separable conditional means. Intended as
/// a reference oracle: cost is `n_grid² · 64` evaluations.
pub fn sobol_second_order<F>(bounds: &[ParamBound], f: F, pair: (usize, usize), n_grid: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let p = bounds.len();
    let (i, j) = pair;
    if i == j || i >= p || j >= p {
        return Err(Error::Config(format!(
            "invalid parameter pair ({i}, {j}) for {p} parameters"
        )));
    }
    if n_grid < MIN_GRID {
        return Err(Error::Config(format!(
            "n_grid must be at least {MIN_GRID}, got {n_grid}"
        )));
    }
    let inner: Vec<Vec<f64>> = if p > 2 {
        (0..SECOND_ORDER_INNER as u64)
            .map(|k| {
                let mut rng = seed::stream_rng(seed::derive_seed(seed, "second-order"), k);
                bounds
                    .iter()
                    .map(|b| b.from_unit(rand::Rng::random(&mut rng)))
                    .collect()
            })
            .collect()
    } else {
        vec![bounds.iter().map(|b| b.from_unit(0.5)).collect()]
    };
    let mid = |b: &ParamBound, k: usize| b.from_unit((k as f64 + 0.5) / n_grid as f64);
    let cells: Vec<(f64, Vec<f64>)> = (0..n_grid * n_grid)
        .into_par_iter()
        .map(|c| {
            let (gi, gj) = (c / n_grid, c % n_grid);
            let vals: Vec<f64> = inner
                .iter()
                .map(|base| {
                    let mut x = base.clone();
                    x[i] = mid(&bounds[i], gi);
                    x[j] = mid(&bounds[j], gj);
                    f(&x)
                })
                .collect();
            (vals.iter().sum::<f64>() / vals.len() as f64, vals)
        })
        .collect();
    let all: Vec<f64> = cells.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let (_, var) = pooled_variance(&all)?;
    let cond: Vec<f64> = cells.iter().map(|(m, _)| *m).collect();
    let grand = cond.iter().sum::<f64>() / cond.len() as f64;
    let variance = |xs: &[f64]| xs.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / xs.len() as f64;
    let v_closed = variance(&cond);
    let row_means: Vec<f64> = (0..n_grid)
        .map(|gi| cond[gi * n_grid..(gi + 1) * n_grid].iter().sum::<f64>() / n_grid as f64)
        .collect();
    let col_means: Vec<f64> = (0..n_grid)
        .map(|gj| (0..n_grid).map(|gi| cond[gi * n_grid + gj]).sum::<f64>() / n_grid as f64)
        .collect();
    Ok((v_closed - variance(&row_means) - variance(&col_means)) / var)
}

/// Monotone influence of one parameter on one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub rho: f64,
    pub sign: i8,
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[k]] {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=end] {
            r[idx] = avg;
        }
        k = end + 1;
    }
    r
}

/// Spearman rank correlation; 0 when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Spearman correlation of each parameter with the output over the `A` rows.
pub fn influence_signs(design: &SaltelliDesign, outputs: &[f64]) -> Result<Vec<Influence>> {
    if outputs.len() < design.base_n {
        return Err(Error::Input("outputs do not cover the A block".into()));
    }
    let y = &outputs[..design.base_n];
    Ok((0..design.dims())
        .map(|i| {
            let col: Vec<f64> = design.a.iter().map(|r| r[i]).collect();
            let rho = spearman(&col, y);
            let sign = if rho > 0.0 {
                1
            } else if rho < 0.0 {
                -1
            } else {
                0
            };
            Influence { rho, sign }
        })
        .collect())
}

/// Indices and influence for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSensitivity {
    pub metric: Metric,
    pub s_first: Vec<f64>,
    pub s_total: Vec<f64>,
    pub rho: Vec<f64>,
    pub sign: Vec<i8>,
    /// Parameter indices by descending `s_total`, ties by position.
    pub ranking: Vec<usize>,
}

impl MetricSensitivity {
    pub fn new(metric: Metric, indices: SobolIndices, influence: &[Influence]) -> Self {
        let mut ranking: Vec<usize> = (0..indices.s_total.len()).collect();
        ranking.sort_by(|&a, &b| indices.s_total[b].total_cmp(&indices.s_total[a]).then(a.cmp(&b)));
        Self {
            metric,
            rho: influence.iter().map(|i| i.rho).collect(),
            sign: influence.iter().map(|i| i.sign).collect(),
            s_first: indices.s_first,
            s_total: indices.s_total,
            ranking,
        }
    }
}

/// One templated design rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heuristic {
    pub metric: Metric,
    pub param: String,
    pub sign: i8,
    pub s_total: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub names: Vec<String>,
    pub base_n: usize,
    pub rows: usize,
    pub seed: u64,
    pub evaluator: String,
    pub metrics: Vec<MetricSensitivity>,
    pub top_k: usize,
    pub heuristics: Vec<Heuristic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn rule_text(param: &str, sign: i8, metric: Metric) -> String {
    match sign {
        1 => format!("increasing {param} will increase {metric}"),
        -1 => format!("increasing {param} will decrease {metric}"),
        _ => format!("changing {param} has no monotone effect on {metric}"),
    }
}

/// Ranks parameters per metric by total effect and emits up to `top_k`
/// rules per metric.
pub fn synthesize_report(names: &[String], metrics: Vec<MetricSensitivity>, top_k: usize) -> SensitivityReport {
    let mut heuristics = Vec::new();
    for m in &metrics {
        for &i in m.ranking.iter().take(top_k) {
            heuristics.push(Heuristic {
                metric: m.metric,
                param: names[i].clone(),
                sign: m.sign[i],
                s_total: m.s_total[i],
                text: rule_text(&names[i], m.sign[i], m.metric),
            });
        }
    }
    SensitivityReport {
        names: names.to_vec(),
        base_n: 0,
        rows: 0,
        seed: 0,
        evaluator: String::new(),
        metrics,
        top_k,
        heuristics,
        warnings: Vec::new(),
    }
}

impl SensitivityReport {
    pub fn metric(&self, metric: Metric) -> Option<&MetricSensitivity> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    /// Influence sign of a parameter on a metric, if reported.
    pub fn sign(&self, metric: Metric, param: usize) -> Option<i8> {
        self.metric(metric).and_then(|m| m.sign.get(param).copied())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per (metric, parameter).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "param", "s_first", "s_total", "rho", "sign", "rank"])?;
        for m in &self.metrics {
            for (i, name) in self.names.iter().enumerate() {
                let rank = m.ranking.iter().position(|&r| r == i).unwrap_or(i) + 1;
                w.write_record([
                    m.metric.to_string(),
                    name.clone(),
                    format!("{:.6}", m.s_first[i]),
                    format!("{:.6}", m.s_total[i]),
                    format!("{:.6}", m.rho[i]),
                    m.sign[i].to_string(),
                    rank.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Sensitivity analysis\n\n");
        let _ = writeln!(
            s,
            "Saltelli design with N = {} ({} evaluations), seed {}, evaluator `{}`.\n",
            self.base_n, self.rows, self.seed, self.evaluator
        );
        for w in &self.warnings {
            let _ = writeln!(s, "> warning: {w}\n");
        }
        for m in &self.metrics {
            let _ = writeln!(s, "## {} ({})\n", m.metric, m.metric.long_name());
            let _ = writeln!(s, "The following CST parameters are most significant:\n");
            for h in self.heuristics.iter().filter(|h| h.metric == m.metric) {
                let _ = writeln!(s, "- {} (S_T = {:.3})", h.text, h.s_total);
            }
            let _ = writeln!(s, "\n| param | S_i | S_Ti | rho |\n|---|---|---|---|");
            for &i in &m.ranking {
                let _ = writeln!(
                    s,
                    "| {} | {:.4} | {:.4} | {:+.3} |",
                    self.names[i], m.s_first[i], m.s_total[i], m.rho[i]
                );
            }
            s.push('\n');
        }
        s
    }
}

/// Evaluates the design with `evaluator` at `flow` and builds the report for
/// CL, CD and CM.
pub fn run_sensitivity(
    space: &DesignSpace,
    evaluator: &dyn Evaluator,
    flow: &FlowConditions,
    base_n: usize,
    seed: u64,
    top_k: usize,
) -> Result<SensitivityReport> {
    if space.dims() != N_CST {
        return Err(Error::Config(format!("sensitivity needs {N_CST} CST parameters")));
    }
    let design = saltelli_sample(space, base_n, seed)?;
    let preds = design
        .rows()
        .par_iter()
        .map(|r| {
            let mut v = [0.0; N_CST];
            v.copy_from_slice(r);
            evaluator.evaluate(&CstParams::from_vector(&v), flow)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut metrics = Vec::with_capacity(3);
    for metric in Metric::ALL {
        let y: Vec<f64> = preds.iter().map(|p| p.get(metric)).collect();
        let idx = sobol_first_total(&design, &y)?;
        let inf = influence_signs(&design, &y)?;
        metrics.push(MetricSensitivity::new(metric, idx, &inf));
    }
    let mut report = synthesize_report(&design.names, metrics, top_k);
    report.base_n = base_n;
    report.rows = design.n_rows();
    report.seed = seed;
    report.evaluator = evaluator.name();
    report.warnings = design.warnings.clone();
    Ok(report)
}
