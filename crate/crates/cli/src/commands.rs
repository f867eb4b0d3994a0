use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use aim_core::attribution::{
    attribution_records, build_instance, pareto_sweep_many, rank_greedy, solve_exact_with,
    write_attribution_csv, write_pareto_csv, Assignment, AttributionInstance, AttributionRecord,
    ExactOptions,
};
use aim_core::baseline_model::{fit_baseline, BaselineModel, TrainingReport};
use aim_core::domain_io::{control_rows, load_dataset, read_launches, ContentLaunch, Dataset};
use aim_core::estimator::{estimate_all, write_impact_csv, ImpactSummary, LaunchImpactSeries};
use aim_core::simulator::{simulate, GroundTruth, ScenarioConfig, GROUND_TRUTH_FILE};
use aim_core::validation::{
    experiment_consistency, impact_by_date, multiple_assignment_diagnostic, residual_regularity,
    spike_capture, DailySeries, ValidationReport, TREND_WINDOW,
};
use aim_core::{AimError, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Solver};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AimError + '_ {
    move |e| AimError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AimError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

struct Inputs {
    dataset: Dataset,
    launches: Vec<ContentLaunch>,
    files: Vec<(&'static str, PathBuf)>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let signups = cfg.signups_path()?;
    let consumption = cfg.consumption_path()?;
    let promotion = cfg.promotion_path()?;
    let launches_path = cfg.launches_path()?;
    let dataset = load_dataset(&signups, &consumption, promotion.as_deref())?;
    let launches = read_launches(&launches_path)?;
    if launches.is_empty() {
        return Err(AimError::Config(format!(
            "{} lists no launches",
            launches_path.display()
        )));
    }
    let mut files = vec![
        ("signups", signups),
        ("consumption", consumption),
        ("launches", launches_path),
    ];
    if let Some(p) = promotion {
        files.push(("promotion", p));
    }
    log::info!(
        "loaded {} signups, {} consumption events, {} launches",
        dataset.signups().len(),
        dataset.consumption().len(),
        launches.len()
    );
    Ok(Inputs {
        dataset,
        launches,
        files,
    })
}

fn model_for(cfg: &RunConfig, inputs: &Inputs) -> Result<(BaselineModel, Option<TrainingReport>)> {
    if let Some(p) = &cfg.model_file {
        log::info!("using saved model {}", p.display());
        return Ok((BaselineModel::load(p)?, None));
    }
    let rows = control_rows(&inputs.dataset, &inputs.launches);
    let (model, report) = fit_baseline(&rows, cfg.model, &cfg.hyperparams)?;
    if report.extrapolation_flagged {
        log::warn!(
            "youngest control subscription is {} days old; predictions at age 0 extrapolate",
            report.min_age_days
        );
    }
    Ok((model, Some(report)))
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<()> {
    let path = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| AimError::Config("simulate needs --scenario".into()))?;
    let mut scenario = ScenarioConfig::load(path)?;
    if let Some(seed) = cfg.seed {
        scenario.rng_seed = seed;
    }
    let out = cfg.out_dir()?;
    let sim = simulate(&scenario)?;
    sim.write(&out)?;
    write_json(&scenario, &out.join("scenario.json"))?;
    log::info!(
        "simulated {} signups over {} days (seed {})",
        sim.dataset.signups().len(),
        scenario.days,
        scenario.rng_seed
    );
    Ok(())
}

pub fn fit_cmd(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.out_dir()?;
    let rows = control_rows(&inputs.dataset, &inputs.launches);
    let (model, report) = fit_baseline(&rows, cfg.model, &cfg.hyperparams)?;
    model.save(&out.join("model.json"))?;
    write_json(&report, &out.join("training_report.json"))
}

fn estimates(cfg: &RunConfig, inputs: &Inputs) -> Result<(BaselineModel, Vec<LaunchImpactSeries>)> {
    let (model, _) = model_for(cfg, inputs)?;
    let series = estimate_all(&inputs.dataset, &inputs.launches, &model)?;
    Ok((model, series))
}

pub fn estimate_cmd(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.out_dir()?;
    let (model, report) = model_for(cfg, &inputs)?;
    let series = estimate_all(&inputs.dataset, &inputs.launches, &model)?;
    model.save(&out.join("model.json"))?;
    if let Some(r) = report {
        write_json(&r, &out.join("training_report.json"))?;
    }
    write_impact_csv(&series, &out.join("impact.csv"))?;
    let summary = ImpactSummary::from_series(&series);
    summary.save(&out.join("impact_summary.json"))?;
    log::info!(
        "total incremental signups: {:.1}",
        summary.total_incremental
    );
    Ok(())
}

fn instances(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<AttributionInstance>> {
    let (model, series) = estimates(cfg, inputs)?;
    let mut out = build_instance(&inputs.dataset, &inputs.launches, &series, &model)?;
    if let Some(g) = cfg.decay_gamma {
        out = out
            .iter()
            .map(|i| i.with_order_decay(g))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct InstanceSummary {
    date: Option<chrono::NaiveDate>,
    group: Option<String>,
    candidates: usize,
    assigned: usize,
    multi_assigned: usize,
    objective: f64,
    mean_affinity: f64,
    optimality_gap: Option<f64>,
    nodes: usize,
}

fn solve(cfg: &RunConfig, inst: &AttributionInstance) -> Result<Assignment> {
    match cfg.solver {
        Solver::Greedy => rank_greedy(inst),
        Solver::Exact => {
            let (a, stats) = solve_exact_with(inst, cfg.lambda, &ExactOptions::default())?;
            if stats.node_limit_hit {
                log::warn!(
                    "node limit reached on {:?}/{:?}; optimality gap {:.3e}",
                    inst.date,
                    inst.group,
                    stats.gap
                );
            }
            Ok(a)
        }
    }
}

fn attribute(
    cfg: &RunConfig,
    inputs: &Inputs,
) -> Result<(Vec<AttributionRecord>, Vec<InstanceSummary>)> {
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for inst in instances(cfg, inputs)? {
        let a = solve(cfg, &inst)?;
        if let Err(msg) = a.verify(&inst) {
            return Err(AimError::InvalidRecord(format!(
                "solver returned an invalid assignment: {msg}"
            )));
        }
        records.extend(attribution_records(&inst, &a));
        summaries.push(InstanceSummary {
            date: inst.date,
            group: inst.group.clone(),
            candidates: inst.candidates.len(),
            assigned: a.assigned.len(),
            multi_assigned: a.multi_assigned.len(),
            objective: a.objective,
            mean_affinity: a.mean_affinity,
            optimality_gap: a.optimality_gap,
            nodes: a.nodes,
        });
    }
    Ok((records, summaries))
}

pub fn attribute_cmd(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.out_dir()?;
    let (records, summaries) = attribute(cfg, &inputs)?;
    write_attribution_csv(&records, &out.join("attribution.csv"))?;
    write_json(&summaries, &out.join("attribution_summary.json"))
}

pub fn pareto_cmd(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.out_dir()?;
    let points = pareto_sweep_many(&instances(cfg, &inputs)?, &cfg.lambdas)?;
    write_pareto_csv(&points, &out.join("pareto.csv"))
}

/// Daily signups with missing days filled in as zero.
fn aggregate_series(dataset: &Dataset) -> DailySeries {
    let counts = dataset.daily_signup_counts(None);
    let mut out = DailySeries::new();
    if let (Some((&first, _)), Some((&last, _))) =
        (counts.first_key_value(), counts.last_key_value())
    {
        let mut d = first;
        while d <= last {
            out.insert(d, counts.get(&d).copied().unwrap_or(0) as f64);
            d = d.succ_opt().expect("date in range");
        }
    }
    out
}

fn experiment_lift(cfg: &RunConfig, given: Option<f64>) -> Result<f64> {
    if let Some(l) = given {
        return Ok(l);
    }
    let dir = cfg.data_dir.as_ref().ok_or_else(|| {
        AimError::Config("experiment lift not given and no data directory".into())
    })?;
    GroundTruth::load(&dir.join(GROUND_TRUTH_FILE))?
        .experiment_lift
        .ok_or_else(|| AimError::Config("experiment lift not given and not in ground truth".into()))
}

pub fn validate_cmd(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.out_dir()?;
    let (_, series) = estimates(cfg, &inputs)?;
    let mut report = ValidationReport::default();

    for (name, path) in &inputs.files {
        report
            .fingerprints
            .insert((*name).to_string(), sha256_file(path)?);
    }
    let cfg_json = serde_json::to_vec(cfg).expect("config serializes");
    report
        .fingerprints
        .insert("run_config".into(), hex::encode(Sha256::digest(&cfg_json)));

    let aggregate = aggregate_series(&inputs.dataset);
    if aggregate.len() >= 2 * TREND_WINDOW {
        report.residual = Some(residual_regularity(&aggregate, &[impact_by_date(&series)])?);
    } else {
        report.notes.push(format!(
            "residual regularity skipped: {} days of signups, {} needed",
            aggregate.len(),
            2 * TREND_WINDOW
        ));
    }

    for launch in &inputs.launches {
        let of_launch: Vec<LaunchImpactSeries> = series
            .iter()
            .filter(|s| s.content_id == launch.content_id)
            .cloned()
            .collect();
        match spike_capture(&aggregate, &impact_by_date(&of_launch), launch) {
            Ok(s) => report.spikes.push(s),
            Err(e) => report.notes.push(format!(
                "spike capture skipped for `{}`: {e}",
                launch.content_id
            )),
        }
    }
    if !report.spikes.iter().any(|s| s.significant) {
        report.notes.push("no significant launch spikes".into());
    }

    let (records, _) = attribute(cfg, &inputs)?;
    report.multi_assignment = Some(multiple_assignment_diagnostic(&records));

    if let Some(exp) = &cfg.experiment {
        let arm_total = |group: &str| -> f64 {
            series
                .iter()
                .filter(|s| s.group.as_deref() == Some(group))
                .map(|s| s.total_raw_incremental)
                .sum()
        };
        let lift = experiment_lift(cfg, exp.lift)?;
        report.experiment = Some(experiment_consistency(
            arm_total(&exp.treatment_group),
            arm_total(&exp.control_group),
            lift,
            exp.treatment_size,
        )?);
        let arm_sizes: BTreeMap<&str, usize> = [&exp.treatment_group, &exp.control_group]
            .into_iter()
            .map(|g| {
                let n = inputs
                    .dataset
                    .signups()
                    .iter()
                    .filter(|s| s.group.as_deref() == Some(g.as_str()))
                    .count();
                (g.as_str(), n)
            })
            .collect();
        if arm_sizes.values().any(|&n| n < 1000) {
            report.notes.push(format!(
                "experiment arms are small ({arm_sizes:?} signups); the check may be underpowered"
            ));
        }
    }

    report.summarize();
    report.save(&out.join("validation_report.json"))
}
