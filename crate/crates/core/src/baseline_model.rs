//! Non-incremental consumption probability as a function of subscription age,
//! subscriber activity and promotion, trained on pre-launch cohorts.
//!
//! Two estimators share one interface:
//! - a logistic GLM over `[log1p(age), log1p(activity), promo]`, fitted by
//!   full-batch gradient ascent with backtracking line search and an L2 penalty
//!   on the slopes (the intercept is unpenalized);
//! - a binned empirical-rate grid, used as a diagnostic and fallback.
//!
//! Age extrapolation matters here: control subscribers are always older than
//! the launch-day cohort, which is scored at age 0.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain_io::{read_json, write_json, CohortKind, LabeledRow};
use crate::error::{AimError, Result};

/// Predictions are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Glm,
    Binned,
}

impl std::str::FromStr for ModelKind {
    type Err = AimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glm" => Ok(ModelKind::Glm),
            "binned" => Ok(ModelKind::Binned),
            other => Err(AimError::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log1p,
}

impl Transform {
    fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log1p => x.ln_1p(),
        }
    }
}

/// One model input: `(transform(raw) - center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub transform: Transform,
    pub center: f64,
    pub scale: f64,
}

impl FeatureSpec {
    fn value(&self, raw: f64) -> f64 {
        (self.transform.apply(raw) - self.center) / self.scale
    }
}

const FEATURES: [(&str, Transform); 3] = [
    ("age_days", Transform::Log1p),
    ("activity", Transform::Log1p),
    ("promo_intensity", Transform::Identity),
];

fn raw_features(age_days: f64, activity: f64, promo: f64) -> [f64; 3] {
    [age_days, activity, promo]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub l2: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub age_edges: Vec<f64>,
    pub activity_edges: Vec<f64>,
    pub promo_edges: Vec<f64>,
    /// Flag the fit when the youngest training subscription is older than this.
    pub max_extrapolation_days: u32,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            l2: 1e-6,
            max_iter: 500,
            grad_tol: 1e-8,
            age_edges: vec![0.0, 7.0, 14.0, 21.0, 28.0, 42.0, 56.0],
            activity_edges: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0],
            promo_edges: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            max_extrapolation_days: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub n_rows: usize,
    pub log_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// All labels identical; a constant model was returned.
    pub degenerate: bool,
    pub min_age_days: u32,
    /// The youngest training age exceeds `max_extrapolation_days`.
    pub extrapolation_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCell {
    pub age_bucket: usize,
    pub activity_bucket: usize,
    pub promo_bucket: usize,
    pub count: u64,
    pub positives: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Coefficients {
    Glm {
        intercept: f64,
        weights: Vec<f64>,
    },
    Binned {
        age_edges: Vec<f64>,
        activity_edges: Vec<f64>,
        promo_edges: Vec<f64>,
        /// Non-empty cells sorted by (age, activity, promo) bucket.
        cells: Vec<BinCell>,
        global_rate: f64,
        min_age_bucket: usize,
        max_age_bucket: usize,
    },
}

/// A fitted baseline consumption model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub kind: ModelKind,
    pub feature_spec: Vec<FeatureSpec>,
    pub coefficients: Coefficients,
    pub training: TrainingReport,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn bucket(edges: &[f64], x: f64) -> usize {
    edges.iter().filter(|&&e| e <= x).count().saturating_sub(1)
}

/// Fits the baseline model on control-cohort rows.
pub fn fit_baseline(
    rows: &[LabeledRow],
    kind: ModelKind,
    hp: &Hyperparams,
) -> Result<(BaselineModel, TrainingReport)> {
    if rows.is_empty() {
        return Err(AimError::EmptyInput("no training rows".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.kind == CohortKind::PostLaunch) {
        return Err(AimError::InvalidRecord(format!(
            "post-launch row for `{}` in training set",
            r.subscriber_id
        )));
    }

    let min_age_days = rows.iter().map(|r| r.age_days).min().unwrap_or(0);
    let positives = rows.iter().filter(|r| r.consumed).count();
    let degenerate = positives == 0 || positives == rows.len();
    if degenerate {
        log::warn!(
            "degenerate training labels ({positives} of {} positive); fitting a constant model",
            rows.len()
        );
    }

    let mut model = match (kind, degenerate) {
        (_, true) => constant_model(rows, positives),
        (ModelKind::Glm, false) => fit_glm(rows, hp),
        (ModelKind::Binned, false) => fit_binned(rows, hp),
    };
    model.training.min_age_days = min_age_days;
    model.training.extrapolation_flagged = min_age_days > hp.max_extrapolation_days;
    if model.training.extrapolation_flagged {
        log::info!("baseline model extrapolates {min_age_days} days of subscription age to age 0");
    }
    let report = model.training.clone();
    Ok((model, report))
}

fn identity_spec() -> Vec<FeatureSpec> {
    FEATURES
        .iter()
        .map(|(name, t)| FeatureSpec {
            name: (*name).to_string(),
            transform: *t,
            center: 0.0,
            scale: 1.0,
        })
        .collect()
}

fn constant_model(rows: &[LabeledRow], positives: usize) -> BaselineModel {
    let rate = clamp_prob(positives as f64 / rows.len() as f64);
    let mut model = BaselineModel {
        kind: ModelKind::Glm,
        feature_spec: identity_spec(),
        coefficients: Coefficients::Glm {
            intercept: logit(rate),
            weights: vec![0.0; FEATURES.len()],
        },
        training: TrainingReport {
            n_rows: rows.len(),
            log_loss: 0.0,
            iterations: 0,
            converged: true,
            degenerate: true,
            min_age_days: 0,
            extrapolation_flagged: false,
        },
    };
    model.training.log_loss = log_loss(&model, rows);
    model
}

fn log_loss(model: &BaselineModel, rows: &[LabeledRow]) -> f64 {
    let total: f64 = rows
        .iter()
        .map(|r| {
            let p = predict_p(model, f64::from(r.age_days), r.activity, r.promo_intensity);
            if r.consumed {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    (total / rows.len() as f64).max(0.0)
}

struct Design {
    z: Vec<[f64; 3]>,
    y: Vec<f64>,
}

impl Design {
    /// Penalized mean log-likelihood at `beta = [intercept, w0, w1, w2]`.
    fn objective(&self, beta: &[f64; 4], l2: f64) -> f64 {
        let ll: f64 = self
            .z
            .iter()
            .zip(&self.y)
            .map(|(z, &y)| {
                let eta = beta[0] + beta[1] * z[0] + beta[2] * z[1] + beta[3] * z[2];
                y * eta - softplus(eta)
            })
            .sum();
        ll / self.y.len() as f64
            - 0.5 * l2 * (beta[1] * beta[1] + beta[2] * beta[2] + beta[3] * beta[3])
    }

    fn gradient(&self, beta: &[f64; 4], l2: f64) -> [f64; 4] {
        let mut g = [0.0; 4];
        for (z, &y) in self.z.iter().zip(&self.y) {
            let eta = beta[0] + beta[1] * z[0] + beta[2] * z[1] + beta[3] * z[2];
            let r = y - logistic(eta);
            g[0] += r;
            g[1] += r * z[0];
            g[2] += r * z[1];
            g[3] += r * z[2];
        }
        let n = self.y.len() as f64;
        for k in 0..4 {
            g[k] /= n;
        }
        for k in 1..4 {
            g[k] -= l2 * beta[k];
        }
        g
    }
}

fn fit_glm(rows: &[LabeledRow], hp: &Hyperparams) -> BaselineModel {
    let n = rows.len() as f64;
    let transformed: Vec<[f64; 3]> = rows
        .iter()
        .map(|r| {
            let raw = raw_features(f64::from(r.age_days), r.activity, r.promo_intensity);
            [
                FEATURES[0].1.apply(raw[0]),
                FEATURES[1].1.apply(raw[1]),
                FEATURES[2].1.apply(raw[2]),
            ]
        })
        .collect();

    let mut spec = identity_spec();
    for (k, fs) in spec.iter_mut().enumerate() {
        let mean = transformed.iter().map(|t| t[k]).sum::<f64>() / n;
        let var = transformed
            .iter()
            .map(|t| (t[k] - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        fs.center = mean;
        fs.scale = if sd > 1e-12 { sd } else { 1.0 };
    }

    let design = Design {
        z: transformed
            .iter()
            .map(|t| {
                [
                    (t[0] - spec[0].center) / spec[0].scale,
                    (t[1] - spec[1].center) / spec[1].scale,
                    (t[2] - spec[2].center) / spec[2].scale,
                ]
            })
            .collect(),
        y: rows
            .iter()
            .map(|r| if r.consumed { 1.0 } else { 0.0 })
            .collect(),
    };

    let base_rate = design.y.iter().sum::<f64>() / n;
    let mut beta = [logit(clamp_prob(base_rate)), 0.0, 0.0, 0.0];
    let mut value = design.objective(&beta, hp.l2);
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < hp.max_iter {
        let g = design.gradient(&beta, hp.l2);
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < hp.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Armijo backtracking, restarting from twice the last accepted step.
        let mut t = (step * 2.0).min(64.0);
        let mut accepted = false;
        while t > 1e-12 {
            let cand = [
                beta[0] + t * g[0],
                beta[1] + t * g[1],
                beta[2] + t * g[2],
                beta[3] + t * g[3],
            ];
            let v = design.objective(&cand, hp.l2);
            if v >= value + 1e-4 * t * gnorm2 {
                beta = cand;
                value = v;
                step = t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no ascent direction left at machine precision
            converged = true;
            break;
        }
    }

    let mut model = BaselineModel {
        kind: ModelKind::Glm,
        feature_spec: spec,
        coefficients: Coefficients::Glm {
            intercept: beta[0],
            weights: beta[1..].to_vec(),
        },
        training: TrainingReport {
            n_rows: rows.len(),
            log_loss: 0.0,
            iterations,
            converged,
            degenerate: false,
            min_age_days: 0,
            extrapolation_flagged: false,
        },
    };
    model.training.log_loss = log_loss(&model, rows);
    model
}

fn fit_binned(rows: &[LabeledRow], hp: &Hyperparams) -> BaselineModel {
    use std::collections::BTreeMap;

    let mut counts: BTreeMap<(usize, usize, usize), (u64, u64)> = BTreeMap::new();
    for r in rows {
        let key = (
            bucket(&hp.age_edges, f64::from(r.age_days)),
            bucket(&hp.activity_edges, r.activity),
            bucket(&hp.promo_edges, r.promo_intensity),
        );
        let e = counts.entry(key).or_default();
        e.0 += 1;
        e.1 += u64::from(r.consumed);
    }
    let positives: u64 = counts.values().map(|c| c.1).sum();
    let global_rate = positives as f64 / rows.len() as f64;
    let min_age_bucket = counts.keys().map(|k| k.0).min().unwrap_or(0);
    let max_age_bucket = counts.keys().map(|k| k.0).max().unwrap_or(0);
    let cells = counts
        .into_iter()
        .map(|((a, b, c), (count, pos))| BinCell {
            age_bucket: a,
            activity_bucket: b,
            promo_bucket: c,
            count,
            positives: pos,
            rate: pos as f64 / count as f64,
        })
        .collect();

    let mut model = BaselineModel {
        kind: ModelKind::Binned,
        feature_spec: identity_spec(),
        coefficients: Coefficients::Binned {
            age_edges: hp.age_edges.clone(),
            activity_edges: hp.activity_edges.clone(),
            promo_edges: hp.promo_edges.clone(),
            cells,
            global_rate,
            min_age_bucket,
            max_age_bucket,
        },
        training: TrainingReport {
            n_rows: rows.len(),
            log_loss: 0.0,
            iterations: 0,
            converged: true,
            degenerate: false,
            min_age_days: 0,
            extrapolation_flagged: false,
        },
    };
    model.training.log_loss = log_loss(&model, rows);
    model
}

/// Baseline probability that a non-incremental subscriber with these
/// covariates consumes the content.
pub fn predict_p(model: &BaselineModel, age_days: f64, activity: f64, promo_intensity: f64) -> f64 {
    let raw = raw_features(age_days, activity, promo_intensity);
    let p = match &model.coefficients {
        Coefficients::Glm { intercept, weights } => {
            let eta = intercept
                + weights
                    .iter()
                    .zip(&model.feature_spec)
                    .zip(raw)
                    .map(|((w, fs), x)| w * fs.value(x))
                    .sum::<f64>();
            logistic(eta)
        }
        Coefficients::Binned {
            age_edges,
            activity_edges,
            promo_edges,
            cells,
            global_rate,
            min_age_bucket,
            max_age_bucket,
        } => {
            let key = (
                bucket(age_edges, age_days).clamp(*min_age_bucket, *max_age_bucket),
                bucket(activity_edges, activity),
                bucket(promo_edges, promo_intensity),
            );
            cells
                .binary_search_by(|c| (c.age_bucket, c.activity_bucket, c.promo_bucket).cmp(&key))
                .map(|i| cells[i].rate)
                .unwrap_or(*global_rate)
        }
    };
    clamp_prob(p)
}

/// Mean baseline probability over a post-launch cohort's own covariates: the
/// counterfactual consumption rate of the cohort had nobody joined for the launch.
pub fn adjusted_mean_rate(model: &BaselineModel, post_rows: &[LabeledRow]) -> Result<f64> {
    if post_rows.is_empty() {
        return Err(AimError::EmptyInput("no post-launch rows to score".into()));
    }
    let total: f64 = post_rows
        .iter()
        .map(|r| predict_p(model, f64::from(r.age_days), r.activity, r.promo_intensity))
        .sum();
    Ok(total / post_rows.len() as f64)
}

impl BaselineModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| AimError::json("<model>", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Intercept and standardized slopes, for GLMs.
    pub fn glm_weights(&self) -> Option<(f64, &[f64])> {
        match &self.coefficients {
            Coefficients::Glm { intercept, weights } => Some((*intercept, weights)),
            Coefficients::Binned { .. } => None,
        }
    }
}
