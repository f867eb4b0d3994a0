use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain_io::{read_json, ContentLaunch};
use crate::error::{AimError, Result};

/// How daily signup counts scatter around their seasonal mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignupNoise {
    #[default]
    Poisson,
    /// The rounded mean, exactly.
    None,
}

/// Coefficients of the generating baseline consumption model on raw
/// features `log1p(age_days)`, `log1p(activity)` and `promo_intensity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    pub intercept: f64,
    #[serde(default)]
    pub age: f64,
    #[serde(default)]
    pub activity: f64,
    #[serde(default)]
    pub promo: f64,
}

impl Default for GlmParams {
    /// A flat 20% consumption rate.
    fn default() -> Self {
        Self {
            intercept: (0.2f64 / 0.8).ln(),
            age: 0.0,
            activity: 0.0,
            promo: 0.0,
        }
    }
}

impl GlmParams {
    pub fn probability(&self, age_days: f64, activity: f64, promo_intensity: f64) -> f64 {
        let eta = self.intercept
            + self.age * age_days.ln_1p()
            + self.activity * activity.ln_1p()
            + self.promo * promo_intensity;
        1.0 / (1.0 + (-eta).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchScenario {
    #[serde(flatten)]
    pub launch: ContentLaunch,
    /// Incremental subscribers joining on launch day + k, spread over groups by share.
    #[serde(default)]
    pub incremental_schedule: Vec<u32>,
    /// Extra incremental subscribers that join only within the named group.
    #[serde(default)]
    pub group_schedules: BTreeMap<String, Vec<u32>>,
    #[serde(default)]
    pub baseline: GlmParams,
}

impl LaunchScenario {
    fn incrementals_on(schedule: &[u32], offset: i64) -> u32 {
        usize::try_from(offset)
            .ok()
            .and_then(|k| schedule.get(k).copied())
            .unwrap_or(0)
    }

    /// Scheduled incrementals `offset` days after launch, shared across groups.
    pub fn shared_on(&self, offset: i64) -> u32 {
        Self::incrementals_on(&self.incremental_schedule, offset)
    }

    pub fn group_on(&self, group: &str, offset: i64) -> u32 {
        self.group_schedules
            .get(group)
            .map_or(0, |s| Self::incrementals_on(s, offset))
    }

    pub fn total_scheduled(&self) -> u64 {
        self.incremental_schedule
            .iter()
            .chain(self.group_schedules.values().flatten())
            .map(|&v| u64::from(v))
            .sum()
    }
}

/// Multiplies expected signups over `[start, end]` (inclusive), e.g. a
/// marketing push or an outage unrelated to any launch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalShock {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShare {
    pub name: String,
    pub share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for LogNormalParams {
    fn default() -> Self {
        Self {
            mu: 0.7,
            sigma: 0.6,
        }
    }
}

/// Each (subscriber, launch) pair is promoted with probability `rate`, at
/// an intensity drawn from `Beta(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromotionParams {
    pub rate: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PromotionParams {
    fn default() -> Self {
        Self {
            rate: 0.3,
            alpha: 2.0,
            beta: 5.0,
        }
    }
}

/// A randomized campaign: the treatment group is exposed, the control group
/// is not. Campaign-driven incrementals are the treatment group's
/// `group_schedules`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub control_group: String,
    pub treatment_group: String,
    /// Number of people exposed to the campaign.
    pub treatment_size: u32,
}

fn default_dow() -> [f64; 7] {
    [1.0; 7]
}

fn default_partial_view_rate() -> f64 {
    0.1
}

/// A synthetic signup and consumption scenario with known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub days: u32,
    pub start_date: NaiveDate,
    pub base_signups_per_day: u32,
    /// Monday-first multipliers on the expected signup count.
    #[serde(default = "default_dow")]
    pub day_of_week_multipliers: [f64; 7],
    /// Amplitude of a yearly sinusoid on the expected signup count.
    #[serde(default)]
    pub annual_amplitude: f64,
    #[serde(default)]
    pub signup_noise: SignupNoise,
    /// When set, scheduled incrementals replace organic signups instead of
    /// adding to them, keeping the daily total at the seasonal level.
    #[serde(default)]
    pub incrementals_within_base: bool,
    #[serde(default)]
    pub groups: Vec<GroupShare>,
    #[serde(default)]
    pub launches: Vec<LaunchScenario>,
    #[serde(default)]
    pub external_shocks: Vec<ExternalShock>,
    #[serde(default)]
    pub activity: LogNormalParams,
    #[serde(default)]
    pub promotion: PromotionParams,
    /// Chance that a non-consumer still samples the content below the
    /// completion threshold.
    #[serde(default = "default_partial_view_rate")]
    pub partial_view_rate: f64,
    /// Added to the log-activity mean of incremental subscribers only.
    #[serde(default)]
    pub incremental_activity_shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentDesign>,
    pub rng_seed: u64,
}

fn positive(value: f64, what: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(AimError::Config(format!(
            "{what} must be positive, got {value}"
        )))
    }
}

fn probability(value: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AimError::Config(format!(
            "{what} must lie in [0, 1], got {value}"
        )))
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + chrono::Days::new(u64::from(self.days.saturating_sub(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(AimError::Config("days must be >= 1".into()));
        }
        for (k, &m) in self.day_of_week_multipliers.iter().enumerate() {
            positive(m, &format!("day_of_week_multipliers[{k}]"))?;
        }
        if !(self.annual_amplitude.abs() < 1.0) {
            return Err(AimError::Config(format!(
                "annual_amplitude {} must lie in (-1, 1)",
                self.annual_amplitude
            )));
        }
        for g in &self.groups {
            positive(g.share, &format!("share of group `{}`", g.name))?;
        }
        let mut names: Vec<&str> = self.groups.iter().map(|g| g.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(AimError::Config("group names must be unique".into()));
        }
        for s in &self.external_shocks {
            positive(s.multiplier, "shock multiplier")?;
            if s.end < s.start {
                return Err(AimError::Config(format!(
                    "shock ends {} before it starts {}",
                    s.end, s.start
                )));
            }
        }
        let mut ids: Vec<&str> = Vec::new();
        for l in &self.launches {
            l.launch.validate()?;
            ids.push(&l.launch.content_id);
            for g in l.group_schedules.keys() {
                if !self.groups.iter().any(|s| &s.name == g) {
                    return Err(AimError::Config(format!(
                        "launch `{}` schedules incrementals for unknown group `{g}`",
                        l.launch.content_id
                    )));
                }
            }
            let b = &l.baseline;
            if ![b.intercept, b.age, b.activity, b.promo]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(AimError::Config(format!(
                    "launch `{}` has non-finite baseline coefficients",
                    l.launch.content_id
                )));
            }
        }
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(AimError::Config("launch content ids must be unique".into()));
        }
        if !(self.activity.sigma >= 0.0 && self.activity.mu.is_finite()) {
            return Err(AimError::Config("activity sigma must be >= 0".into()));
        }
        probability(self.promotion.rate, "promotion rate")?;
        positive(self.promotion.alpha, "promotion alpha")?;
        positive(self.promotion.beta, "promotion beta")?;
        probability(self.partial_view_rate, "partial_view_rate")?;
        if let Some(e) = &self.experiment {
            for g in [&e.control_group, &e.treatment_group] {
                if !self.groups.iter().any(|s| &s.name == g) {
                    return Err(AimError::Config(format!(
                        "experiment names unknown group `{g}`"
                    )));
                }
            }
            if e.control_group == e.treatment_group || e.treatment_size == 0 {
                return Err(AimError::Config(
                    "experiment needs distinct arms and a positive treatment_size".into(),
                ));
            }
        }
        if !self.incremental_activity_shift.is_finite() {
            return Err(AimError::Config(
                "incremental_activity_shift must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Expected signups on day `day` (0-based) before incrementals are added.
    pub fn expected_signups(&self, day: u32) -> f64 {
        use chrono::Datelike;
        let date = self.start_date + chrono::Days::new(u64::from(day));
        let dow = self.day_of_week_multipliers[date.weekday().num_days_from_monday() as usize];
        let annual =
            1.0 + self.annual_amplitude * (std::f64::consts::TAU * f64::from(day) / 365.25).sin();
        let shock: f64 = self
            .external_shocks
            .iter()
            .filter(|s| s.start <= date && date <= s.end)
            .map(|s| s.multiplier)
            .product();
        f64::from(self.base_signups_per_day) * dow * annual * shock
    }

    /// True campaign lift per exposed person, if the scenario is an experiment.
    pub fn experiment_lift(&self) -> Option<f64> {
        let e = self.experiment.as_ref()?;
        let extra: u64 = self
            .launches
            .iter()
            .filter_map(|l| l.group_schedules.get(&e.treatment_group))
            .flatten()
            .map(|&v| u64::from(v))
            .sum();
        Some(extra as f64 / f64::from(e.treatment_size))
    }

    pub fn contents(&self) -> Vec<ContentLaunch> {
        self.launches.iter().map(|l| l.launch.clone()).collect()
    }
}

/// The subscriber-level attribution setup: subscribers spread over days,
/// each consuming a geometric number of contents drawn by Zipf popularity,
/// with baseline probabilities uniform on (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionScenario {
    pub subscribers: u32,
    pub contents: u32,
    pub days: u32,
    pub start_date: NaiveDate,
    /// Zipf exponent of content popularity.
    pub zipf_exponent: f64,
    /// Chance of consuming one more content, so P(at least two) equals it.
    pub multi_consumption_prob: f64,
    /// Share of subscribers incremental to exactly one of their contents.
    pub incremental_rate: f64,
    pub rng_seed: u64,
}

impl Default for AttributionScenario {
    fn default() -> Self {
        Self {
            subscribers: 10_000,
            contents: 1_000,
            days: 100,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            zipf_exponent: 1.0,
            multi_consumption_prob: 0.6,
            incremental_rate: 0.5,
            rng_seed: 0,
        }
    }
}

impl AttributionScenario {
    pub fn validate(&self) -> Result<()> {
        if self.subscribers == 0 || self.contents == 0 || self.days == 0 {
            return Err(AimError::Config(
                "subscribers, contents and days must all be >= 1".into(),
            ));
        }
        positive(self.zipf_exponent, "zipf_exponent")?;
        if !(0.0..1.0).contains(&self.multi_consumption_prob) {
            return Err(AimError::Config(
                "multi_consumption_prob must lie in [0, 1)".into(),
            ));
        }
        probability(self.incremental_rate, "incremental_rate")
    }
}
