//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aim_core::attribution::{
    brute_force, rank_greedy, solve_exact_with, AttributionInstance, CandidatePair, ExactOptions,
};
use aim_core::baseline_model::{fit_baseline, predict_p, BaselineModel, Hyperparams, ModelKind};
use aim_core::domain_io::{control_rows, CohortKind, Dataset, LabeledRow};
use aim_core::estimator::{
    estimate_all, estimate_incremental, estimate_launch_impact, incremental_propensity,
    LaunchImpactSeries,
};
use aim_core::simulator::{
    simulate, simulate_attribution, AttributionScenario, ScenarioConfig, Simulation,
};
use aim_core::validation::{
    experiment_consistency, impact_by_date, residual_regularity, spike_capture, DailySeries,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use rayon::prelude::*;

const SEEDS: u64 = 100;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&fixture(name)).unwrap()
}

fn run(cfg: &ScenarioConfig, seed: u64) -> Simulation {
    let mut c = cfg.clone();
    c.rng_seed = seed;
    simulate(&c).unwrap()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Incrementality equation, written out independently of the library.
fn oracle_incremental(n: f64, s: f64, p: f64) -> f64 {
    (s - n * p) / (1.0 - p)
}

/// Binomial standard error of a daily estimate at baseline rate `p`.
fn oracle_se(n: f64, p: f64) -> f64 {
    (n * p * (1.0 - p)).sqrt() / (1.0 - p)
}

/// A single age bucket: the toy generator has no age effect, so the bin
/// class contains it exactly and no age extrapolation is needed.
fn flat_age_binned() -> (ModelKind, Hyperparams) {
    (
        ModelKind::Binned,
        Hyperparams {
            age_edges: vec![0.0],
            ..Hyperparams::default()
        },
    )
}

fn fit(sim: &Simulation, kind: ModelKind, hp: &Hyperparams) -> BaselineModel {
    let rows = control_rows(&sim.dataset, &sim.launches);
    fit_baseline(&rows, kind, hp).unwrap().0
}

/// Daily signups with every calendar day present.
fn aggregate(dataset: &Dataset) -> DailySeries {
    let counts = dataset.daily_signup_counts(None);
    let (&first, _) = counts.first_key_value().unwrap();
    let (&last, _) = counts.last_key_value().unwrap();
    let mut out = DailySeries::new();
    let mut d = first;
    while d <= last {
        out.insert(d, counts.get(&d).copied().unwrap_or(0) as f64);
        d = d.succ_opt().unwrap();
    }
    out
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn toy_exactness() -> Outcome {
    let (v, clamped) = estimate_incremental(1000, 500, 0.2).unwrap();
    let oracle = oracle_incremental(1000.0, 500.0, 0.2);
    outcome(
        v == 375.0 && !clamped && oracle == 375.0,
        format!("estimate {v}, oracle {oracle}"),
    )
}

/// Within-3-SE day counts and worst per-seed relative AUC error for one launch.
fn recovery(cfg: &ScenarioConfig, content: &str, p_true: f64) -> (usize, usize, f64, f64) {
    let (kind, hp) = flat_age_binned();
    let per_seed: Vec<(usize, usize, f64, f64)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let sim = run(cfg, seed);
            let model = fit(&sim, kind, &hp);
            let launch = sim
                .launches
                .iter()
                .find(|l| l.content_id == content)
                .unwrap();
            let est = estimate_launch_impact(&sim.dataset, launch, &model, None).unwrap();
            let truth = sim.truth.incremental_series(content, None);
            let (mut inside, mut total) = (0, 0);
            let mut true_auc = 0.0;
            for d in &est.daily {
                let t = truth.get(&d.date).copied().unwrap_or(0) as f64;
                true_auc += t;
                total += 1;
                if (d.n_incremental - t).abs() <= 3.0 * oracle_se(d.n_signups as f64, p_true) {
                    inside += 1;
                }
            }
            let rel = if true_auc > 0.0 {
                (est.total_incremental - true_auc).abs() / true_auc
            } else {
                f64::NAN
            };
            (inside, total, rel, est.total_incremental)
        })
        .collect();
    let inside = per_seed.iter().map(|r| r.0).sum();
    let total = per_seed.iter().map(|r| r.1).sum();
    let worst = per_seed.iter().map(|r| r.2).fold(0.0, f64::max);
    let mean_total = per_seed.iter().map(|r| r.3).sum::<f64>() / per_seed.len() as f64;
    (inside, total, worst, mean_total)
}

fn generator_rate(cfg: &ScenarioConfig) -> f64 {
    let g = &cfg.launches[0].baseline;
    assert!(
        g.age == 0.0 && g.activity == 0.0 && g.promo == 0.0,
        "fixture baseline must be flat"
    );
    sigmoid(g.intercept)
}

fn simulator_recovery() -> Outcome {
    let cfg = scenario("toy.json");
    let (inside, total, worst, _) = recovery(&cfg, "album_a", generator_rate(&cfg));
    let share = inside as f64 / total as f64;
    outcome(
        share >= 0.99 && worst <= 0.05,
        format!(
            "{inside}/{total} days within 3 SE ({:.2}%), worst AUC error {:.2}%",
            100.0 * share,
            100.0 * worst
        ),
    )
}

fn null_calibration() -> Outcome {
    let cfg = scenario("null.json");
    assert_eq!(cfg.launches[0].total_scheduled(), 0);
    let (inside, total, _, mean_total) = recovery(&cfg, "phantom", generator_rate(&cfg));
    let share = inside as f64 / total as f64;
    outcome(
        share >= 0.99,
        format!(
            "{inside}/{total} day-seeds within 3 SE of 0 ({:.2}%), mean AUC {mean_total:.1}",
            100.0 * share
        ),
    )
}

fn propensity_properties() -> Outcome {
    let mut violations = 0;
    for k in 0..20 {
        let p_b = (k as f64 + 0.5) / 20.0;
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let p_hat = 0.998 * i as f64 / 999.0;
            let v = incremental_propensity(p_b, p_hat).unwrap();
            if v > prev {
                violations += 1;
            }
            prev = v;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 10_000 {
        let n = rng.random_range(1..100_000u64);
        let s = rng.random_range(0..=n);
        let p = rng.random_range(0.0..0.99);
        let (est, clamped) = estimate_incremental(n, s, p).unwrap();
        if clamped {
            continue;
        }
        let via = n as f64 * incremental_propensity(s as f64 / n as f64, p).unwrap();
        worst = worst.max((via - est).abs() / est.abs().max(1.0));
        checked += 1;
    }
    outcome(
        violations == 0 && worst <= 1e-12,
        format!("{violations} monotonicity violations on 20x1000 grid, worst identity error {worst:.1e} over {checked} draws"),
    )
}

fn random_instance(rng: &mut ChaCha8Rng) -> AttributionInstance {
    loop {
        let n_sub = rng.random_range(1..=10);
        let mut pairs = Vec::new();
        for i in 0..n_sub {
            for j in 0..3 {
                if rng.random::<f64>() < 0.6 {
                    pairs.push(CandidatePair {
                        subscriber_id: format!("s{i}"),
                        content_id: format!("c{j}"),
                        affinity: rng.random::<f64>(),
                        order: 1,
                    });
                }
            }
        }
        if pairs.is_empty() || pairs.len() > 25 {
            continue;
        }
        let mut quotas = BTreeMap::new();
        for j in 0..3 {
            let c = format!("c{j}");
            let n = pairs.iter().filter(|p| p.content_id == c).count() as u32;
            quotas.insert(c, rng.random_range(0..=n));
        }
        return AttributionInstance::new(pairs, &quotas).unwrap();
    }
}

struct SolverChecks {
    exact: Outcome,
    constraints: Outcome,
}

fn solver_exactness() -> SolverChecks {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut solves, mut mismatches, mut invalid, mut bound_violations) = (0, 0, 0, 0);
    for _ in 0..50 {
        let inst = random_instance(&mut rng);
        for lambda in [0.0, 0.5, 5.0] {
            let (exact, stats) = solve_exact_with(&inst, lambda, &ExactOptions::default()).unwrap();
            let brute = brute_force(&inst, lambda).unwrap();
            let greedy = rank_greedy(&inst).unwrap();
            for a in [&exact, &brute, &greedy] {
                invalid += usize::from(a.verify(&inst).is_err());
                solves += 1;
            }
            bound_violations += stats.bound_violations;
            if (exact.objective - brute.objective).abs() > 1e-9 {
                mismatches += 1;
            }
        }
    }
    SolverChecks {
        exact: outcome(
            mismatches == 0 && bound_violations == 0,
            format!("{mismatches} objective mismatches in 150 exact vs brute-force solves"),
        ),
        constraints: outcome(
            invalid == 0,
            format!("{invalid} invalid of {solves} assignments"),
        ),
    }
}

fn pareto_properties(invalid_out: &mut usize) -> Outcome {
    let t = Instant::now();
    let sim = simulate_attribution(&AttributionScenario::default()).unwrap();
    let grid = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
    let mut points = Vec::new();
    for &lambda in &grid {
        let solved: Vec<_> = sim
            .instances
            .par_iter()
            .map(|inst| {
                let (a, _) = solve_exact_with(inst, lambda, &ExactOptions::default()).unwrap();
                (a.verify(inst).is_ok(), a)
            })
            .collect();
        *invalid_out += solved.iter().filter(|(ok, _)| !ok).count();
        let multi: usize = solved.iter().map(|(_, a)| a.multi_assigned.len()).sum();
        let attributed: usize = solved.iter().map(|(_, a)| a.attributed_subscribers).sum();
        let affinity: f64 = solved.iter().map(|(_, a)| a.total_affinity).sum();
        let assigned: usize = solved.iter().map(|(_, a)| a.assigned.len()).sum();
        points.push((
            lambda,
            multi,
            multi as f64 / attributed as f64,
            affinity / assigned as f64,
        ));
    }
    let greedy_multi: usize = sim
        .instances
        .iter()
        .map(|inst| {
            let a = rank_greedy(inst).unwrap();
            *invalid_out += usize::from(a.verify(inst).is_err());
            a.multi_assigned.len()
        })
        .sum();
    let monotone = points
        .windows(2)
        .all(|w| w[1].1 >= w[0].1 && w[1].3 >= w[0].3 - 1e-12);
    let min_at_zero = points.iter().all(|p| p.2 >= points[0].2);
    let curve: Vec<String> = points
        .iter()
        .map(|(l, m, _, a)| format!("{l}:{m}/{a:.4}"))
        .collect();
    outcome(
        monotone && min_at_zero && greedy_multi >= points[0].1,
        format!(
            "multi-consumers {:.1}%, lambda:multi/affinity {}, greedy multi {greedy_multi}, {:.1?}",
            100.0 * sim.truth.multi_consumer_fraction,
            curve.join(" "),
            t.elapsed()
        ),
    )
}

fn glm_recovery() -> Outcome {
    let (b0, b_age, b_act, b_promo) = (-1.5, 0.8, -0.5, 2.0);
    let truth = |age: f64, act: f64, promo: f64| {
        sigmoid(b0 + b_age * age.ln_1p() + b_act * act.ln_1p() + b_promo * promo)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let activity = LogNormal::new(0.7, 0.6).unwrap();
    let rows: Vec<LabeledRow> = (0..100_000)
        .map(|i| {
            let age = rng.random_range(0..60u32);
            let act = activity.sample(&mut rng);
            let promo = if rng.random::<f64>() < 0.3 {
                rng.random::<f64>()
            } else {
                0.0
            };
            let consumed = rng.random::<f64>() < truth(f64::from(age), act, promo);
            LabeledRow {
                subscriber_id: format!("s{i}"),
                content_id: "c".into(),
                consumed,
                age_days: age,
                activity: act,
                promo_intensity: promo,
                kind: CohortKind::PreLaunch,
            }
        })
        .collect();
    let (model, _) = fit_baseline(&rows, ModelKind::Glm, &Hyperparams::default()).unwrap();
    let mae = rows
        .iter()
        .map(|r| {
            let (a, x, p) = (f64::from(r.age_days), r.activity, r.promo_intensity);
            (predict_p(&model, a, x, p) - truth(a, x, p)).abs()
        })
        .sum::<f64>()
        / rows.len() as f64;
    outcome(mae < 0.02, format!("MAE {mae:.5} on 100000 rows"))
}

fn residual_directionality() -> Outcome {
    let cfg = scenario("seasonal.json");
    let improved = (0..SEEDS)
        .into_par_iter()
        .filter(|&seed| {
            let sim = run(&cfg, seed);
            let r = residual_regularity(&sim.truth.signup_series(), &[sim.truth.impact_by_date()])
                .unwrap();
            r.improved()
        })
        .count();
    outcome(
        improved >= 95,
        format!("truth removal more regular on {improved}/{SEEDS} seeds"),
    )
}

fn pooled_impact(series: &[LaunchImpactSeries], content: &str) -> DailySeries {
    let of: Vec<_> = series
        .iter()
        .filter(|s| s.content_id == content)
        .cloned()
        .collect();
    impact_by_date(&of)
}

fn spike_behavior() -> Outcome {
    let mega = run(&scenario("mega_launch.json"), 21);
    let model = fit(&mega, ModelKind::Glm, &Hyperparams::default());
    let series = estimate_all(&mega.dataset, &mega.launches, &model).unwrap();
    let launch = &mega.launches[0];
    let capture = spike_capture(
        &aggregate(&mega.dataset),
        &pooled_impact(&series, "mega"),
        launch,
    )
    .unwrap();
    let fraction = capture.fraction.unwrap_or(f64::NAN);

    let shock = run(&scenario("shock.json"), 22);
    let model = fit(&shock, ModelKind::Glm, &Hyperparams::default());
    let series = estimate_all(&shock.dataset, &shock.launches, &model).unwrap();
    let bystander = &shock.launches[0];
    let s = spike_capture(
        &aggregate(&shock.dataset),
        &pooled_impact(&series, "bystander"),
        bystander,
    )
    .unwrap();
    let shock_share = if s.excess > 0.0 {
        s.captured / s.excess
    } else {
        f64::NAN
    };

    outcome(
        (0.9..=1.1).contains(&fraction) && capture.significant && s.significant && shock_share.abs() < 0.1,
        format!(
            "mega-launch captured {:.0} of excess {:.0} ({fraction:.3}); shock excess {:.0}, attributed {:.1} ({:.3})",
            capture.captured, capture.excess, s.excess, s.captured, shock_share
        ),
    )
}

fn experiment_check() -> Outcome {
    let cfg = scenario("experiment.json");
    let design = cfg.experiment.clone().unwrap();
    let sim = run(&cfg, cfg.rng_seed);
    let model = fit(&sim, ModelKind::Glm, &Hyperparams::default());
    let series = estimate_all(&sim.dataset, &sim.launches, &model).unwrap();
    let arm = |g: &str| -> f64 {
        series
            .iter()
            .filter(|s| s.group.as_deref() == Some(g))
            .map(|s| s.total_raw_incremental)
            .sum()
    };
    let lift = cfg.experiment_lift().unwrap();
    let r = experiment_consistency(
        arm(&design.treatment_group),
        arm(&design.control_group),
        lift,
        u64::from(design.treatment_size),
    )
    .unwrap();
    let rel = r.relative_discrepancy.unwrap();
    outcome(
        rel.abs() < 0.15,
        format!(
            "expected {:.1}, observed {:.1}, relative discrepancy {rel:+.3}",
            r.expected, r.observed
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let mut o = f();
        o.detail = format!("{} [{:.1?}]", o.detail, t.elapsed());
        o
    };
    results.push((1, "toy-example exactness", timed(&toy_exactness)));
    results.push((2, "simulator recovery", timed(&simulator_recovery)));
    results.push((3, "null calibration", timed(&null_calibration)));
    results.push((4, "propensity properties", timed(&propensity_properties)));
    let solver = solver_exactness();
    let mut pareto_invalid = 0;
    let pareto = pareto_properties(&mut pareto_invalid);
    results.push((5, "solver exactness", solver.exact));
    results.push((
        6,
        "constraint satisfaction",
        outcome(
            solver.constraints.pass && pareto_invalid == 0,
            format!(
                "{}; {pareto_invalid} invalid in the Pareto sweep",
                solver.constraints.detail
            ),
        ),
    ));
    results.push((7, "pareto properties", pareto));
    results.push((8, "baseline-model recovery", timed(&glm_recovery)));
    results.push((9, "residual regularity", timed(&residual_directionality)));
    results.push((10, "spike capture", timed(&spike_behavior)));
    results.push((11, "experiment consistency", timed(&experiment_check)));

    let mut failed = Vec::new();
    for (n, name, o) in &results {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {status} {name}: {}", o.detail);
        if !o.pass {
            failed.push(*n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
