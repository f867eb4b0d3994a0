//! Incremental signups per content, day and group.
//!
//! Incremental subscribers always consume the content they joined for, so the
//! observed consumer count on day `t` is `S = N+ + (N - N+) * p`, where `p` is
//! the baseline (non-incremental) consumption rate. Solving for `N+` gives
//! `(S - N * p) / (1 - p)`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline_model::{adjusted_mean_rate, BaselineModel};
use crate::domain_io::{
    build_cohorts, labeled_rows, write_json, CohortKind, ContentLaunch, Dataset,
};
use crate::error::{AimError, Result};

/// Baseline rates at or above `1 - DENOMINATOR_GUARD` are rejected.
pub const DENOMINATOR_GUARD: f64 = 1e-3;

fn check_rate(rate: f64) -> Result<()> {
    if !(rate >= 0.0 && rate < 1.0 - DENOMINATOR_GUARD) {
        return Err(AimError::UnstableDenominator { rate, date: None });
    }
    Ok(())
}

/// Returns `(n_incremental, clamped)`; `n_incremental` is clamped into
/// `[0, n_consumers]`.
pub fn estimate_incremental(
    n_signups: u64,
    n_consumers: u64,
    baseline_rate: f64,
) -> Result<(f64, bool)> {
    let raw = raw_incremental(n_signups, n_consumers, baseline_rate)?;
    let clamped_value = raw.clamp(0.0, n_consumers as f64);
    Ok((clamped_value, clamped_value != raw))
}

fn raw_incremental(n_signups: u64, n_consumers: u64, baseline_rate: f64) -> Result<f64> {
    if n_consumers > n_signups {
        return Err(AimError::InvalidRecord(format!(
            "{n_consumers} consumers exceed {n_signups} signups"
        )));
    }
    check_rate(baseline_rate)?;
    let n = n_signups as f64;
    let s = n_consumers as f64;
    Ok((s - n * baseline_rate) / (1.0 - baseline_rate))
}

/// Probability that a consumer is incremental given their consumption
/// probability and baseline probability, clamped to `[0, 1]`. Non-increasing
/// in `p_hat`.
pub fn incremental_propensity(p_consume: f64, p_hat: f64) -> Result<f64> {
    check_rate(p_hat)?;
    Ok(((p_consume - p_hat) / (1.0 - p_hat)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyEstimate {
    pub content_id: String,
    pub date: NaiveDate,
    pub group: Option<String>,
    pub n_signups: u64,
    pub n_consumers: u64,
    pub baseline_rate: f64,
    pub n_incremental: f64,
    /// Unclamped value of the incrementality equation.
    pub raw_incremental: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchImpactSeries {
    pub content_id: String,
    pub group: Option<String>,
    pub daily: Vec<DailyEstimate>,
    pub total_incremental: f64,
    pub total_raw_incremental: f64,
}

impl LaunchImpactSeries {
    fn from_daily(
        content_id: String,
        group: Option<String>,
        mut daily: Vec<DailyEstimate>,
    ) -> Self {
        daily.sort_by_key(|d| d.date);
        let total_incremental = daily.iter().map(|d| d.n_incremental).sum();
        let total_raw_incremental = daily.iter().map(|d| d.raw_incremental).sum();
        Self {
            content_id,
            group,
            daily,
            total_incremental,
            total_raw_incremental,
        }
    }

    pub fn estimate_on(&self, date: NaiveDate) -> Option<&DailyEstimate> {
        self.daily
            .binary_search_by_key(&date, |d| d.date)
            .ok()
            .map(|i| &self.daily[i])
    }

    /// Daily incremental estimates keyed by date.
    pub fn by_date(&self) -> BTreeMap<NaiveDate, f64> {
        self.daily
            .iter()
            .map(|d| (d.date, d.n_incremental))
            .collect()
    }
}

/// Estimates incremental signups for every post-launch day of one launch,
/// restricted to `group` when given.
pub fn estimate_launch_impact(
    dataset: &Dataset,
    launch: &ContentLaunch,
    model: &BaselineModel,
    group: Option<&str>,
) -> Result<LaunchImpactSeries> {
    let slices = build_cohorts(dataset, launch)?;
    let post: Vec<_> = slices
        .into_iter()
        .filter(|s| s.kind == CohortKind::PostLaunch)
        .map(|mut s| {
            if let Some(g) = group {
                s.members.retain(|id| {
                    dataset.subscriber(id).and_then(|r| r.group.as_deref()) == Some(g)
                });
            }
            s
        })
        .filter(|s| !s.members.is_empty())
        .collect();

    let daily = post
        .par_iter()
        .map(|slice| {
            let rows = labeled_rows(dataset, slice, launch);
            let n_signups = rows.len() as u64;
            let n_consumers = rows.iter().filter(|r| r.consumed).count() as u64;
            let baseline_rate = adjusted_mean_rate(model, &rows)?;
            let tag = |e: AimError| match e {
                AimError::UnstableDenominator { rate, .. } => AimError::UnstableDenominator {
                    rate,
                    date: Some(slice.signup_date),
                },
                other => other,
            };
            let raw = raw_incremental(n_signups, n_consumers, baseline_rate).map_err(tag)?;
            let (n_incremental, clamped) =
                estimate_incremental(n_signups, n_consumers, baseline_rate).map_err(tag)?;
            Ok(DailyEstimate {
                content_id: launch.content_id.clone(),
                date: slice.signup_date,
                group: group.map(str::to_string),
                n_signups,
                n_consumers,
                baseline_rate,
                n_incremental,
                raw_incremental: raw,
                clamped,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LaunchImpactSeries::from_daily(
        launch.content_id.clone(),
        group.map(str::to_string),
        daily,
    ))
}

/// Runs [`estimate_launch_impact`] for every launch and every group in the dataset.
pub fn estimate_all(
    dataset: &Dataset,
    launches: &[ContentLaunch],
    model: &BaselineModel,
) -> Result<Vec<LaunchImpactSeries>> {
    let groups = dataset.groups();
    let mut out = Vec::new();
    for launch in launches {
        for g in &groups {
            out.push(estimate_launch_impact(
                dataset,
                launch,
                model,
                g.as_deref(),
            )?);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ImpactRow<'a> {
    content_id: &'a str,
    group: Option<&'a str>,
    date: NaiveDate,
    n_signups: u64,
    n_consumers: u64,
    baseline_rate: f64,
    n_incremental: f64,
    clamped: bool,
}

/// Writes `impact.csv`.
pub fn write_impact_csv(series: &[LaunchImpactSeries], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AimError::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(file));
    for s in series {
        for d in &s.daily {
            wtr.serialize(ImpactRow {
                content_id: &d.content_id,
                group: d.group.as_deref(),
                date: d.date,
                n_signups: d.n_signups,
                n_consumers: d.n_consumers,
                baseline_rate: d.baseline_rate,
                n_incremental: d.n_incremental,
                clamped: d.clamped,
            })?;
        }
    }
    wtr.flush().map_err(|e| AimError::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchTotal {
    pub content_id: String,
    pub group: Option<String>,
    pub days: usize,
    pub total_incremental: f64,
    pub total_raw_incremental: f64,
    pub clamped_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSummary {
    pub launches: Vec<LaunchTotal>,
    pub total_incremental: f64,
}

impl ImpactSummary {
    pub fn from_series(series: &[LaunchImpactSeries]) -> Self {
        let launches: Vec<LaunchTotal> = series
            .iter()
            .map(|s| LaunchTotal {
                content_id: s.content_id.clone(),
                group: s.group.clone(),
                days: s.daily.len(),
                total_incremental: s.total_incremental,
                total_raw_incremental: s.total_raw_incremental,
                clamped_days: s.daily.iter().filter(|d| d.clamped).count(),
            })
            .collect();
        let total_incremental = launches.iter().map(|l| l.total_incremental).sum();
        Self {
            launches,
            total_incremental,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example_is_375() {
        assert_eq!(
            estimate_incremental(1000, 500, 0.2).unwrap(),
            (375.0, false)
        );
    }

    #[test]
    fn consumers_at_baseline_give_zero() {
        let (n, clamped) = estimate_incremental(1000, 200, 0.2).unwrap();
        assert!(n.abs() < 1e-9);
        assert!(!clamped);
    }

    #[test]
    fn negative_raw_is_clamped() {
        assert_eq!(estimate_incremental(1000, 150, 0.2).unwrap(), (0.0, true));
    }

    #[test]
    fn zero_baseline_counts_every_consumer() {
        assert_eq!(estimate_incremental(800, 123, 0.0).unwrap(), (123.0, false));
    }

    #[test]
    fn unstable_denominator() {
        assert!(matches!(
            estimate_incremental(10, 5, 0.999),
            Err(AimError::UnstableDenominator { .. })
        ));
        assert!(incremental_propensity(0.5, 0.9995).is_err());
    }

    #[test]
    fn propensity_examples() {
        assert!((incremental_propensity(0.5, 0.2).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(incremental_propensity(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(incremental_propensity(1.0, 0.2).unwrap(), 1.0);
        assert_eq!(incremental_propensity(0.1, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn group_sums_match_pooled_estimate() {
        let groups = [(400u64, 150u64), (350, 120), (250, 90)];
        let p = 0.22;
        let per_group: f64 = groups
            .iter()
            .map(|&(n, s)| estimate_incremental(n, s, p).unwrap().0)
            .sum();
        let (n, s) = groups
            .iter()
            .fold((0, 0), |acc, g| (acc.0 + g.0, acc.1 + g.1));
        let pooled = estimate_incremental(n, s, p).unwrap().0;
        assert!((per_group - pooled).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn output_within_zero_and_consumers(n in 0u64..5000, frac in 0.0f64..=1.0, p in 0.0f64..0.998) {
            let s = (n as f64 * frac).floor() as u64;
            let (v, _) = estimate_incremental(n, s, p).unwrap();
            prop_assert!(v >= 0.0 && v <= s as f64);
        }

        #[test]
        fn equation_equals_scaled_propensity(n in 1u64..100_000, frac in 0.0f64..=1.0, p in 0.0f64..0.998) {
            let s = (n as f64 * frac).round() as u64;
            let (v, clamped) = estimate_incremental(n, s, p).unwrap();
            if !clamped {
                let via = n as f64 * incremental_propensity(s as f64 / n as f64, p).unwrap();
                prop_assert!((v - via).abs() <= 1e-12 * (n as f64).max(1.0));
            }
        }
    }
}
