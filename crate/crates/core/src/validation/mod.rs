//! Non-experimental checks on estimates and attributions.
//!
//! Good impact estimates leave a signup residual that looks like the usual
//! seasonal pattern, account for visible launch spikes, avoid piling many
//! contents onto the same subscribers, and agree with randomized experiments
//! where those exist.

mod seasonal;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use seasonal::{fit_template, rmse, SeasonalTemplate, TREND_WINDOW};

use crate::attribution::AttributionRecord;
use crate::domain_io::{write_json, ContentLaunch};
use crate::error::{AimError, Result};
use crate::estimator::LaunchImpactSeries;

/// Daily values keyed by date.
pub type DailySeries = BTreeMap<NaiveDate, f64>;

/// Sums the daily estimates of several launch series.
pub fn impact_by_date(series: &[LaunchImpactSeries]) -> DailySeries {
    let mut out = DailySeries::new();
    for s in series {
        for d in &s.daily {
            *out.entry(d.date).or_insert(0.0) += d.n_incremental;
        }
    }
    out
}

fn dense(aggregate: &DailySeries) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    let dates: Vec<NaiveDate> = aggregate.keys().copied().collect();
    if dates.windows(2).any(|w| (w[1] - w[0]).num_days() != 1) {
        return Err(AimError::InvalidRecord(
            "aggregate series must cover consecutive days".into(),
        ));
    }
    Ok((dates, aggregate.values().copied().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub dates: Vec<NaiveDate>,
    /// Aggregate signups minus all removed impacts.
    pub residual_series: Vec<f64>,
    pub template: Vec<f64>,
    /// RMSE of the residual around its own seasonal template.
    pub regularity_score: f64,
    /// The same metric on the aggregate series with nothing removed.
    pub baseline_score: f64,
}

impl ResidualReport {
    pub fn improved(&self) -> bool {
        self.regularity_score < self.baseline_score
    }
}

/// Removes `impacts` from the aggregate signup series and scores how closely
/// what remains follows a seasonal template. Lower is more regular.
pub fn residual_regularity(
    aggregate: &DailySeries,
    impacts: &[DailySeries],
) -> Result<ResidualReport> {
    let needed = 2 * TREND_WINDOW;
    if aggregate.len() < needed {
        return Err(AimError::InsufficientData {
            needed,
            got: aggregate.len(),
        });
    }
    let (dates, values) = dense(aggregate)?;
    let mut residual = values.clone();
    for series in impacts {
        for (date, v) in series {
            let Ok(t) = dates.binary_search(date) else {
                return Err(AimError::InvalidRecord(format!(
                    "impact on {date} falls outside the aggregate series"
                )));
            };
            residual[t] -= v;
        }
    }
    let base_fit = fit_template(&dates, &values, None);
    let fit = fit_template(&dates, &residual, None);
    Ok(ResidualReport {
        regularity_score: rmse(&residual, &fit.fitted),
        baseline_score: rmse(&values, &base_fit.fitted),
        dates,
        residual_series: residual,
        template: fit.fitted,
    })
}

/// One candidate configuration's estimates, for ranking by regularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityComparison {
    pub name: String,
    pub regularity_score: f64,
    pub baseline_score: f64,
}

/// Scores every candidate and sorts them from most to least regular.
pub fn compare_regularity(
    aggregate: &DailySeries,
    candidates: &[(String, Vec<DailySeries>)],
) -> Result<Vec<RegularityComparison>> {
    let mut out = candidates
        .iter()
        .map(|(name, impacts)| {
            let r = residual_regularity(aggregate, impacts)?;
            Ok(RegularityComparison {
                name: name.clone(),
                regularity_score: r.regularity_score,
                baseline_score: r.baseline_score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        a.regularity_score
            .total_cmp(&b.regularity_score)
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRate {
    pub key: String,
    pub attributed: usize,
    pub multi_assigned: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiAssignmentReport {
    /// Share of attributed subscribers assigned to two or more contents.
    pub overall_rate: f64,
    pub attributed: usize,
    pub multi_assigned: usize,
    /// Each breakdown is sorted by rate, highest first.
    pub by_content: Vec<MultiRate>,
    pub by_date: Vec<MultiRate>,
    pub by_group: Vec<MultiRate>,
}

fn breakdown<K: Fn(&AttributionRecord) -> String>(
    records: &[AttributionRecord],
    key: K,
) -> Vec<MultiRate> {
    // A subscriber is counted once per key even when attributed to several contents.
    let mut members: BTreeMap<String, BTreeMap<(Option<NaiveDate>, Option<&str>, &str), bool>> =
        BTreeMap::new();
    for r in records {
        members.entry(key(r)).or_default().insert(
            (r.date, r.group.as_deref(), r.subscriber_id.as_str()),
            r.multi_assigned,
        );
    }
    let mut out: Vec<MultiRate> = members
        .into_iter()
        .map(|(key, subs)| {
            let attributed = subs.len();
            let multi_assigned = subs.values().filter(|&&m| m).count();
            MultiRate {
                key,
                attributed,
                multi_assigned,
                rate: multi_assigned as f64 / attributed as f64,
            }
        })
        .collect();
    out.sort_by(|a, b| b.rate.total_cmp(&a.rate).then_with(|| a.key.cmp(&b.key)));
    out
}

/// Multiple-assignment rates overall and by content, date and group.
/// Subscribers are identified within their (date, group) instance.
pub fn multiple_assignment_diagnostic(records: &[AttributionRecord]) -> MultiAssignmentReport {
    let mut subscribers = BTreeMap::new();
    for r in records {
        subscribers.insert(
            (r.date, r.group.as_deref(), r.subscriber_id.as_str()),
            r.multi_assigned,
        );
    }
    let attributed = subscribers.len();
    let multi_assigned = subscribers.values().filter(|&&m| m).count();
    let fmt_opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    MultiAssignmentReport {
        overall_rate: if attributed == 0 {
            0.0
        } else {
            multi_assigned as f64 / attributed as f64
        },
        attributed,
        multi_assigned,
        by_content: breakdown(records, |r| r.content_id.clone()),
        by_date: breakdown(records, |r| fmt_opt(r.date.map(|d| d.to_string()))),
        by_group: breakdown(records, |r| fmt_opt(r.group.clone())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeCapture {
    pub content_id: String,
    /// Aggregate signups above the seasonal template over the post-launch window.
    pub excess: f64,
    /// Estimated incrementals over the same window.
    pub captured: f64,
    /// `captured / excess`, clamped to `[0, 2]`; `None` when there is no spike.
    pub fraction: Option<f64>,
    pub undefined_spike: bool,
    /// Day-level RMSE of the series around its template outside the window.
    pub noise_sd: f64,
    /// The excess exceeds three standard deviations of summed daily noise.
    pub significant: bool,
}

/// Compares a launch's estimated incrementals with the visible signup spike.
/// The seasonal template is fitted with the post-launch window masked out.
pub fn spike_capture(
    aggregate: &DailySeries,
    impact: &DailySeries,
    launch: &ContentLaunch,
) -> Result<SpikeCapture> {
    let (dates, values) = dense(aggregate)?;
    if dates.is_empty()
        || launch.launch_date < dates[0]
        || launch.launch_date > dates[dates.len() - 1]
    {
        return Err(AimError::InvalidRecord(format!(
            "launch of `{}` on {} is outside the aggregate series",
            launch.content_id, launch.launch_date
        )));
    }
    let in_window = |d: &NaiveDate| *d >= launch.launch_date && *d <= launch.post_end();
    let mask: Vec<bool> = dates.iter().map(in_window).collect();
    let tpl = fit_template(&dates, &values, Some(&mask));
    let excess: f64 = (0..dates.len())
        .filter(|&t| mask[t])
        .map(|t| values[t] - tpl.fitted[t])
        .sum();
    let captured: f64 = impact
        .iter()
        .filter(|(d, _)| in_window(d))
        .map(|(_, v)| v)
        .sum();
    let undefined_spike = excess <= 0.0;

    let outside: Vec<usize> = (0..dates.len()).filter(|&t| !mask[t]).collect();
    let noise_sd = if outside.is_empty() {
        0.0
    } else {
        let a: Vec<f64> = outside.iter().map(|&t| values[t]).collect();
        let b: Vec<f64> = outside.iter().map(|&t| tpl.fitted[t]).collect();
        rmse(&a, &b)
    };
    let window_len = mask.iter().filter(|&&m| m).count() as f64;
    Ok(SpikeCapture {
        content_id: launch.content_id.clone(),
        excess,
        captured,
        fraction: (!undefined_spike).then(|| (captured / excess).clamp(0.0, 2.0)),
        undefined_spike,
        noise_sd,
        significant: excess > 3.0 * noise_sd * window_len.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConsistency {
    /// `lift * treatment_size`.
    pub expected: f64,
    /// `treatment_estimate - control_estimate`.
    pub observed: f64,
    pub discrepancy: f64,
    /// Discrepancy over `expected`; `None` when the expected lift is zero.
    pub relative_discrepancy: Option<f64>,
}

/// Checks the arm difference of AIM estimates against the experiment's
/// lift times the treatment size.
pub fn experiment_consistency(
    treatment_estimate: f64,
    control_estimate: f64,
    experiment_lift: f64,
    treatment_size: u64,
) -> Result<ExperimentConsistency> {
    if treatment_size == 0 {
        return Err(AimError::Config("treatment_size must be positive".into()));
    }
    let expected = experiment_lift * treatment_size as f64;
    let observed = treatment_estimate - control_estimate;
    let discrepancy = observed - expected;
    Ok(ExperimentConsistency {
        expected,
        observed,
        discrepancy,
        relative_discrepancy: (expected != 0.0).then(|| discrepancy / expected),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Mean capture over launches with a defined spike.
    pub spike_capture_fraction: Option<f64>,
    pub experiment_discrepancy: Option<f64>,
    pub multi_assignment_rate: Option<f64>,
}

/// Everything `validate` writes to `validation_report.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// SHA-256 digests of the inputs and configuration, keyed by name.
    pub fingerprints: BTreeMap<String, String>,
    pub residual: Option<ResidualReport>,
    pub spikes: Vec<SpikeCapture>,
    pub multi_assignment: Option<MultiAssignmentReport>,
    pub experiment: Option<ExperimentConsistency>,
    pub consistency: ConsistencyReport,
    pub notes: Vec<String>,
}

impl ValidationReport {
    /// Fills the summary block from the detailed sections.
    pub fn summarize(&mut self) {
        let defined: Vec<f64> = self.spikes.iter().filter_map(|s| s.fraction).collect();
        self.consistency = ConsistencyReport {
            spike_capture_fraction: (!defined.is_empty())
                .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
            experiment_discrepancy: self.experiment.as_ref().map(|e| e.discrepancy),
            multi_assignment_rate: self.multi_assignment.as_ref().map(|m| m.overall_rate),
        };
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(k: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(k)
    }

    fn flat(n: u64, v: f64) -> DailySeries {
        (0..n).map(|k| (day(k), v)).collect()
    }

    fn record(sub: &str, content: &str, multi: bool) -> AttributionRecord {
        AttributionRecord {
            subscriber_id: sub.into(),
            content_id: content.into(),
            date: Some(day(0)),
            group: None,
            affinity: 0.5,
            multi_assigned: multi,
        }
    }

    #[test]
    fn zero_estimates_leave_scores_equal() {
        let agg: DailySeries = (0..70)
            .map(|k| (day(k), 100.0 + (k % 7) as f64 * 3.0 + (k % 5) as f64))
            .collect();
        let zeros: DailySeries = agg.keys().map(|&d| (d, 0.0)).collect();
        let r = residual_regularity(&agg, &[zeros]).unwrap();
        assert_eq!(r.regularity_score, r.baseline_score);
    }

    #[test]
    fn short_series_is_insufficient() {
        assert!(matches!(
            residual_regularity(&flat(55, 1.0), &[]),
            Err(AimError::InsufficientData {
                needed: 56,
                got: 55
            })
        ));
    }

    #[test]
    fn removing_a_spike_improves_regularity() {
        let mut agg = flat(84, 100.0);
        let mut spike = DailySeries::new();
        for k in 40..45 {
            *agg.get_mut(&day(k)).unwrap() += 80.0;
            spike.insert(day(k), 80.0);
        }
        let r = residual_regularity(&agg, &[spike]).unwrap();
        assert!(r.regularity_score < 1e-9);
        assert!(r.baseline_score > 10.0);
    }

    #[test]
    fn multi_rates() {
        let disjoint = [record("a", "x", false), record("b", "y", false)];
        assert_eq!(multiple_assignment_diagnostic(&disjoint).overall_rate, 0.0);
        let doubled = [
            record("a", "x", true),
            record("a", "y", true),
            record("b", "x", true),
            record("b", "y", true),
        ];
        let r = multiple_assignment_diagnostic(&doubled);
        assert_eq!(r.overall_rate, 1.0);
        assert_eq!(r.attributed, 2);
        assert!(r.by_content.iter().all(|c| c.rate == 1.0));
    }

    #[test]
    fn breakdowns_sorted_descending() {
        let recs = [
            record("a", "x", true),
            record("a", "y", true),
            record("b", "y", false),
            record("c", "z", false),
        ];
        let r = multiple_assignment_diagnostic(&recs);
        let rates: Vec<f64> = r.by_content.iter().map(|c| c.rate).collect();
        assert_eq!(rates, vec![1.0, 0.5, 0.0]);
        assert!((r.overall_rate - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn phantom_launch_on_flat_series_is_undefined() {
        let agg = flat(90, 200.0);
        let launch = ContentLaunch::new("ghost", day(45));
        let s = spike_capture(&agg, &DailySeries::new(), &launch).unwrap();
        assert!(s.undefined_spike);
        assert_eq!(s.fraction, None);
    }

    #[test]
    fn spike_capture_of_exact_impact_is_one() {
        let mut agg = flat(90, 200.0);
        let mut impact = DailySeries::new();
        let mut launch = ContentLaunch::new("big", day(45));
        launch.post_window_days = 6;
        for k in 45..52 {
            *agg.get_mut(&day(k)).unwrap() += 150.0;
            impact.insert(day(k), 150.0);
        }
        let s = spike_capture(&agg, &impact, &launch).unwrap();
        assert!((s.fraction.unwrap() - 1.0).abs() < 1e-9);
        assert!(s.significant);
    }

    #[test]
    fn launch_outside_series_is_an_error() {
        let launch = ContentLaunch::new("late", day(200));
        assert!(spike_capture(&flat(90, 1.0), &DailySeries::new(), &launch).is_err());
    }

    #[test]
    fn experiment_identity() {
        let e = experiment_consistency(260.0, 60.0, 0.02, 10_000).unwrap();
        assert_eq!(e.discrepancy, 0.0);
        assert_eq!(e.relative_discrepancy, Some(0.0));
        assert!(experiment_consistency(1.0, 0.0, 0.1, 0).is_err());
    }
}
