//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use foilset_core::evaluate::{
    analytic_evaluate, mlp_infer, operator_infer, Activation, CoefficientPrediction, CpQuery, DenseLayer, Gaussian,
    Head, Metric, MlpModel, OperatorModel, ProbabilisticEvaluator, TrunkInput,
};
use foilset_core::geometry::{
    bernstein, export_coordinates, generate_airfoil, parse_coordinates, CstParams, Spacing, Surface,
};
use foilset_core::pipeline::run::{Engine, Event, EventKind, RunStatus};
use foilset_core::pipeline::stages::verdict;
use foilset_core::pipeline::store::{read_events, RunDir};
use foilset_core::pipeline::{run_report, Directive, ReviewDecision, RunConfig, VerdictKind};
use foilset_core::risk::{empirical_cvar, risk_filter, RiskConfig};
use foilset_core::sampling::{
    export_batch, import_batch, sample, CandidateStatus, DesignCandidate, DesignId, DesignSet, DesignSpace, Provenance,
    SamplingStrategy,
};
use foilset_core::score::{utility_cd, utility_cl, utility_cm, utility_combined, UtilityConfig};
use foilset_core::sensitivity::{saltelli_sample, saltelli_unit, sobol_first_total};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn near(name: &str, got: f64, want: f64, tol: f64) -> Check {
    ensure((got - want).abs() <= tol, || {
        format!("{name}: got {got}, want {want} ± {tol}")
    })
}

fn within_time(start: Instant, limit: Duration) -> Check {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:?}, limit {limit:?}"))
}

// Independent utility oracle with the published constants.
fn oracle_u_comb(cl: f64, cd: f64, cm: f64) -> f64 {
    let u_cl = if cl < 0.5 {
        -5.0
    } else {
        ((cl.min(1.2) - 0.5) / 0.7).sqrt()
    };
    let u_cd = (-65.0 * cd).exp();
    let u_cm = (cm.clamp(-0.3, 0.0) + 0.3) / 0.3;
    0.5 * u_cl + 0.3 * u_cd + 0.2 * u_cm
}

// Lower-tail mean by plain sorting.
fn oracle_tail_mean(xs: &[f64], alpha: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((1.0 - alpha) * v.len() as f64 + 1e-9).floor() as usize;
    v[..k].iter().sum::<f64>() / k as f64
}

fn criterion_1() -> Check {
    let cfg = UtilityConfig::default();
    let p = CoefficientPrediction::new(0.010, 0.522, -0.073);
    let u = utility_combined(&p, &cfg);
    near("U(CL)", u.u_cl, 0.177, 0.001)?;
    near("U(CM)", u.u_cm, 0.7566, 0.001)?;
    ensure((0.515..=0.525).contains(&u.u_cd), || {
        format!("U(CD) {} outside [0.515, 0.525]", u.u_cd)
    })?;
    near("U(CD) closed form", u.u_cd, (-0.65f64).exp(), 1e-12)?;
    near("U_comb", u.u_comb, 0.3955, 0.003)?;
    near("U_comb oracle", u.u_comb, oracle_u_comb(0.522, 0.010, -0.073), 1e-12)
}

fn criterion_2() -> Check {
    let cfg = UtilityConfig::default();
    near("utility_cm(-0.362)", utility_cm(-0.362, &cfg), 0.0, 1e-12)?;
    near("utility_cd(0.013)", utility_cd(0.013, &cfg), 0.4296, 0.002)?;
    ensure(utility_cl(0.49, &cfg) == -5.0, || {
        "CL below floor must be penalised".into()
    })?;
    let run = RunConfig::default();
    ensure(verdict(0.452, 4, &run), || {
        "ID-470 (u 0.452, rating 4) must be valid".into()
    })?;
    ensure(!verdict(0.4898, 2, &run), || {
        "ID-762 (u 0.4898, rating 2) must be invalid".into()
    })
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let space = DesignSpace::default();
    let d = saltelli_sample(&space, 128, 3).map_err(|e| e.to_string())?;
    ensure(d.n_rows() == 2560 && d.rows().len() == 2560, || {
        format!("{} rows, want 2560", d.n_rows())
    })?;

    let a = [1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let d = saltelli_unit(9, 4096, 11).map_err(|e| e.to_string())?;
    let y: Vec<f64> = d
        .rows()
        .iter()
        .map(|r| r.iter().zip(&a).map(|(x, c)| x * c).sum())
        .collect();
    let idx = sobol_first_total(&d, &y).map_err(|e| e.to_string())?;
    for (i, ai) in a.iter().enumerate() {
        near(&format!("S_{}", i + 1), idx.s_first[i], ai * ai / 14.0, 0.03)?;
        near(
            &format!("S_T{} - S_{}", i + 1, i + 1),
            idx.s_total[i] - idx.s_first[i],
            0.0,
            0.03,
        )?;
    }
    within_time(start, Duration::from_secs(10))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let hand = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.6, 0.4, 1.0];
    let t = empirical_cvar(&hand, 0.7).map_err(|e| e.to_string())?;
    near("hand tail mean", t.tail_mean, 0.2, 1e-12)?;
    near("hand quantile", t.var_quantile, 0.3, 1e-12)?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let xs: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = rng.random_range(-5.0..5.0);
        let s = rng.random_range(0.1..10.0);
        let base = empirical_cvar(&xs, 0.7).map_err(|e| e.to_string())?.tail_mean;
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let scaled: Vec<f64> = xs.iter().map(|x| x * s).collect();
        let ts = empirical_cvar(&shifted, 0.7).map_err(|e| e.to_string())?.tail_mean;
        let tk = empirical_cvar(&scaled, 0.7).map_err(|e| e.to_string())?.tail_mean;
        near("translation", ts, base + c, 1e-12)?;
        near("homogeneity", tk, base * s, 1e-12 * s.max(1.0))?;
        near("oracle", base, oracle_tail_mean(&xs, 0.7), 1e-12)?;
    }

    let normal = Normal::new(0.75, 0.024).unwrap();
    let big: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).collect();
    let reference = oracle_tail_mean(&big, 0.7);
    let g = Gaussian::new(0.75, 0.024).map_err(|e| e.to_string())?;
    let draws = g.draw(200, 17);
    let est = empirical_cvar(&draws, 0.7).map_err(|e| e.to_string())?.tail_mean;
    near("Normal(0.75, 0.024) tail mean", est, reference, 0.006)?;

    let space = DesignSpace::default();
    let mut members = Vec::new();
    for (i, w) in [(1u64, 0.75), (2, 0.69)] {
        let mut params: [f64; 9] = space.center().try_into().unwrap();
        params[0] = w;
        members.push(DesignCandidate::new(
            DesignId::from_index(i),
            params,
            Default::default(),
            &space,
        ));
    }
    let set = DesignSet::new(5, members, Provenance::new("fixture", "")).map_err(|e| e.to_string())?;
    let fixed = FixedCl;
    let out = risk_filter(&set, &fixed, &RiskConfig::default()).map_err(|e| e.to_string())?;
    ensure(out.kept.ids() == vec![DesignId::from_index(1)], || {
        format!("kept {:?}", out.kept.ids())
    })?;
    ensure(
        out.excluded.len() == 1 && out.excluded[0].id == DesignId::from_index(2),
        || "0.69 must be excluded".into(),
    )?;
    within_time(start, Duration::from_secs(5))
}

/// Zero-spread evaluator whose CL equals the first upper weight.
struct FixedCl;

impl ProbabilisticEvaluator for FixedCl {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn predict(
        &self,
        cst: &CstParams,
        _flow: &foilset_core::geometry::FlowConditions,
    ) -> foilset_core::Result<foilset_core::evaluate::PredictionDistribution> {
        Ok(foilset_core::evaluate::PredictionDistribution::degenerate(
            CoefficientPrediction::new(0.01, cst.upper[0], -0.05),
        ))
    }
}

fn criterion_5() -> Check {
    for k in 0..101 {
        let x = k as f64 / 100.0;
        let s: f64 = (0..=4).map(|i| bernstein(i, 4, x).unwrap()).sum();
        near("partition of unity", s, 1.0, 1e-12)?;
    }
    let space = DesignSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let u: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        let v: [f64; 9] = space.from_unit(&u).try_into().unwrap();
        let cst = CstParams::from_vector(&v);
        let g = generate_airfoil(&cst, 101, Spacing::Cosine).map_err(|e| e.to_string())?;
        let (u0, l0) = (g.upper[0], g.lower[0]);
        let (u1, l1) = (g.upper[100], g.lower[100]);
        ensure(u0 == [0.0, 0.0] && l0 == [0.0, 0.0], || {
            "leading edge must sit at the origin".into()
        })?;
        near("upper TE", u1[1], cst.y_te, 1e-12)?;
        near("lower TE", l1[1], -cst.y_te, 1e-12)?;
        ensure(g.outline.len() == 201, || "outline must have 201 points".into())?;
        ensure(g.outline[0] == u1 && g.outline[200] == l1, || {
            "outline must start and end at the TE".into()
        })?;

        let mut sym = cst;
        sym.lower = [sym.upper[1], sym.upper[2], sym.upper[3], sym.upper[4]];
        let gs = generate_airfoil(&sym, 101, Spacing::Cosine).map_err(|e| e.to_string())?;
        for (a, b) in gs.upper.iter().zip(&gs.lower) {
            ensure(a[0] == b[0] && (a[1] + b[1]).abs() < 1e-12, || {
                "mirrored weights must give a symmetric section".into()
            })?;
        }

        let (_, pts) = parse_coordinates(&export_coordinates(&g, "x")).map_err(|e| e.to_string())?;
        for (p, q) in pts.iter().zip(&g.outline) {
            ensure((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9, || {
                "coordinate round trip".into()
            })?;
        }
    }
    let set = sample(&space, 100, SamplingStrategy::Lhs, Default::default(), 5).map_err(|e| e.to_string())?;
    let back = import_batch(&export_batch(&set), &space).map_err(|e| e.to_string())?;
    for (a, b) in set.members.iter().zip(&back.members) {
        ensure(a.id == b.id, || "batch ids".into())?;
        for (x, y) in a.params.iter().zip(&b.params) {
            ensure((x - y).abs() < 1e-9, || "batch parameters".into())?;
        }
    }
    Ok(())
}

fn oracle_activation(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Linear => z,
        Activation::LeakyRelu => {
            if z < 0.0 {
                0.2 * z
            } else {
                z
            }
        }
        Activation::Softplus => (1.0 + z.exp()).ln(),
        Activation::Swish => z * (1.0 / (1.0 + (-z).exp())),
        Activation::Tanh => (z.exp() - (-z).exp()) / (z.exp() + (-z).exp()),
    }
}

fn oracle_forward(layers: &[DenseLayer], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for l in layers {
        let mut out = vec![0.0; l.bias.len()];
        for (o, (row, b)) in out.iter_mut().zip(l.weights.iter().zip(&l.bias)) {
            let mut z = *b;
            for j in 0..h.len() {
                z += row[j] * h[j];
            }
            *o = oracle_activation(l.activation, z);
        }
        h = out;
    }
    h
}

fn random_layers(rng: &mut ChaCha8Rng, sizes: &[usize], last: Activation) -> Vec<DenseLayer> {
    let hidden = [
        Activation::LeakyRelu,
        Activation::Softplus,
        Activation::Tanh,
        Activation::Swish,
    ];
    (0..sizes.len() - 1)
        .map(|k| DenseLayer {
            weights: (0..sizes[k + 1])
                .map(|_| (0..sizes[k]).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            bias: (0..sizes[k + 1]).map(|_| rng.random_range(-0.5..0.5)).collect(),
            activation: if k + 2 == sizes.len() {
                last
            } else {
                hidden[rng.random_range(0..hidden.len())]
            },
        })
        .collect()
}

fn criterion_6() -> Check {
    near("leaky-ReLU(-1)", Activation::LeakyRelu.apply(-1.0), -0.2, 1e-15)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let n_in = 12;
        let width = rng.random_range(2..8);
        let layers = random_layers(&mut rng, &[n_in, width, width, 3], Activation::Linear);
        let model = MlpModel::new(n_in, Head::Point, layers.clone()).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = mlp_infer(&model, &x).map_err(|e| e.to_string())?;
        for (g, w) in got.iter().zip(oracle_forward(&layers, &x)) {
            near("mlp", *g, w, 1e-6)?;
        }

        let gl = random_layers(&mut rng, &[n_in, width, 2], Activation::Linear);
        let gm = MlpModel::new(n_in, Head::Gaussian, gl).map_err(|e| e.to_string())?;
        let out = mlp_infer(&gm, &x).map_err(|e| e.to_string())?;
        ensure(out[1] > 0.0, || "softplus head must be positive".into())?;

        let latent = rng.random_range(2..6);
        let bl = random_layers(&mut rng, &[n_in, width, latent], Activation::Linear);
        let tl = random_layers(&mut rng, &[2, width, latent], Activation::Linear);
        let op = OperatorModel::new(
            MlpModel::new(n_in, Head::Point, bl.clone()).map_err(|e| e.to_string())?,
            MlpModel::new(2, Head::Point, tl.clone()).map_err(|e| e.to_string())?,
            TrunkInput::XSurface,
        )
        .map_err(|e| e.to_string())?;
        let queries: Vec<CpQuery> = (0..5)
            .map(|k| CpQuery {
                x: k as f64 / 4.0,
                y: 0.0,
                surface: if k % 2 == 0 { Surface::Upper } else { Surface::Lower },
            })
            .collect();
        let curve = operator_infer(&op, &x, &queries).map_err(|e| e.to_string())?;
        let b = oracle_forward(&bl, &x);
        for q in &queries {
            let t = oracle_forward(&tl, &[q.x, if q.surface == Surface::Upper { 1.0 } else { -1.0 }]);
            let want: f64 = b.iter().zip(&t).map(|(p, q)| p * q).sum();
            let got = curve
                .points()
                .iter()
                .find(|p| p.x == q.x && p.surface == q.surface)
                .ok_or("missing query point")?
                .cp;
            near("operator", got, want, 1e-6)?;
        }
    }
    Ok(())
}

fn desk_config() -> RunConfig {
    RunConfig {
        seed: 42,
        n_initial: 1024,
        ..RunConfig::default()
    }
}

fn run_to_review(dir: &std::path::Path, cfg: RunConfig) -> Result<RunDir, String> {
    let mut run = RunDir::create(dir, cfg, "acceptance").map_err(|e| e.to_string())?;
    while run.state().status == RunStatus::Ready {
        run.commit(EventKind::Advance, "acceptance")
            .map_err(|e| e.to_string())?;
    }
    Ok(run)
}

fn stage_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir.join("stages"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = run_to_review(&tmp.path().join("a"), desk_config())?;
    let st = run.state();
    ensure(st.status == RunStatus::AwaitingReview, || {
        format!("run ended in {:?}", st.status)
    })?;
    let names: Vec<&str> = st.stages.iter().map(|s| s.name.as_str()).collect();
    ensure(
        names
            == [
                "generate",
                "utility-filter",
                "refine",
                "risk-filter",
                "refine-rank-cp",
                "review",
            ],
        || format!("stages {names:?}"),
    )?;
    for s in st.stages.iter().filter(|s| s.pure_filter) {
        ensure(s.set.len() <= s.input, || {
            format!("stage {} grew from {} to {}", s.index, s.input, s.set.len())
        })?;
    }
    let sizes: Vec<usize> = st.stages[1..].iter().map(|s| s.set.len()).collect();
    ensure(sizes.windows(2).all(|w| w[1] <= w[0]), || {
        format!("cardinalities {sizes:?}")
    })?;

    let stage2 = &st.stages[1].set;
    ensure(!stage2.is_empty(), || "stage 2 is empty".into())?;
    for m in &stage2.members {
        let p = analytic_evaluate(&m.cst(), &m.flow).map_err(|e| e.to_string())?;
        let u = oracle_u_comb(p.cl, p.cd, p.cm);
        ensure(u >= 0.40, || format!("{} has u_comb {u}", m.id))?;
    }

    let cfg = &st.config;
    let prob = &run.engine().evaluators.probabilistic;
    let risk = &st.stages[3].set;
    ensure(!risk.is_empty(), || "risk filter removed every design".into())?;
    for m in &risk.members {
        let r = m.evaluations.risk.as_ref().ok_or("missing risk assessment")?;
        let draws = prob
            .predict(&m.cst(), &m.flow)
            .map_err(|e| e.to_string())?
            .draw(Metric::Cl, cfg.stage4.m, r.seed);
        let t = oracle_tail_mean(&draws, cfg.stage4.alpha);
        ensure(t >= 0.70, || format!("{} recomputed tail mean {t}", m.id))?;
    }

    let refined = &st.stages[2].set;
    let parent_cl = |c: &DesignCandidate| -> f64 {
        let pid = &c.lineage.as_ref().unwrap().parent;
        stage2.get(pid).unwrap().evaluations.prediction.unwrap().cl
    };
    let n = refined.len() as f64;
    let mean_child = refined
        .members
        .iter()
        .map(|c| c.evaluations.prediction.unwrap().cl)
        .sum::<f64>()
        / n;
    let mean_parent = refined.members.iter().map(parent_cl).sum::<f64>() / n;
    ensure(mean_child > mean_parent, || {
        format!("refined mean CL {mean_child} <= parents {mean_parent}")
    })?;

    let again = run_to_review(&tmp.path().join("b"), desk_config())?;
    ensure(stage_bytes(run.path()) == stage_bytes(again.path()), || {
        "rerun stage files differ".into()
    })?;
    ensure(st.sensitivity == again.state().sensitivity, || {
        "rerun sensitivity differs".into()
    })?;
    within_time(start, Duration::from_secs(60))
}

fn criterion_8() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        n_initial: 256,
        ..RunConfig::default()
    };
    let mut run = run_to_review(tmp.path(), cfg)?;
    let queue = run.state().review_queue();
    ensure(queue.len() >= 3, || format!("review queue has {} designs", queue.len()))?;
    let directive: Directive = "increase CST_L3 to raise CM"
        .parse()
        .map_err(|e: foilset_core::Error| e.to_string())?;
    let scripted = [
        (queue[0].clone(), VerdictKind::Valid, vec![]),
        (queue[1].clone(), VerdictKind::Invalid, vec![directive]),
        (queue[2].clone(), VerdictKind::Invalid, vec![]),
    ];
    for (id, v, dirs) in scripted {
        let d = ReviewDecision {
            candidate: id,
            verdict: v,
            note: "scripted".into(),
            directives: dirs,
            actor: "reviewer".into(),
            timestamp: None,
        };
        run.commit(EventKind::Decision { decision: d }, "reviewer")
            .map_err(|e| e.to_string())?;
    }
    run.commit(EventKind::Iterate, "reviewer").map_err(|e| e.to_string())?;
    run.commit(EventKind::Converge, "reviewer").map_err(|e| e.to_string())?;

    let events: Vec<Event> = read_events(run.path()).map_err(|e| e.to_string())?;
    let replayed = Engine::replay(&events).map_err(|e| e.to_string())?;
    let ids = |s: &foilset_core::pipeline::RunState| -> BTreeSet<DesignId> {
        s.current_set()
            .map(|x| x.ids().into_iter().collect())
            .unwrap_or_default()
    };
    ensure(ids(run.state()) == ids(&replayed.state), || {
        "replayed id sets differ".into()
    })?;
    let on_disk = std::fs::read_to_string(run.path().join("report.md")).map_err(|e| e.to_string())?;
    ensure(run_report(&replayed.state).to_markdown() == on_disk, || {
        "replayed report.md differs".into()
    })?;
    let on_disk_json = std::fs::read_to_string(run.path().join("report.json")).map_err(|e| e.to_string())?;
    ensure(
        run_report(&replayed.state).to_json().map_err(|e| e.to_string())? == on_disk_json,
        || "replayed report.json differs".into(),
    )?;
    drop(run);
    let reopened = RunDir::open(tmp.path()).map_err(|e| e.to_string())?;
    ensure(reopened.state() == &replayed.state, || "reopened state differs".into())?;
    let st = &replayed.state;
    ensure(st.status == RunStatus::Converged, || format!("status {:?}", st.status))?;
    ensure(
        st.current_set()
            .unwrap()
            .members
            .iter()
            .any(|m| m.status == CandidateStatus::Valid || m.lineage.is_some()),
        || "iteration lost every design".into(),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("benchmark utility reproduction", criterion_1),
        ("spot values and verdicts", criterion_2),
        ("Saltelli budget and additive oracle", criterion_3),
        ("CVaR suite", criterion_4),
        ("geometry suite", criterion_5),
        ("inference oracle equivalence", criterion_6),
        ("end-to-end desk run", criterion_7),
        ("replay determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("criterion {}: PASS  {name} ({secs:.2}s)", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.2}s): {e}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
