use super::dataset::Dataset;
use super::types::{CohortKind, CohortSlice, ContentLaunch, LabeledRow, SignupRecord};
use crate::error::{AimError, Result};

/// Whether the subscriber "consumed" the launch content: some event reached
/// the completion threshold within `label_window_days` of the content becoming
/// available to them (day 0 is the availability date itself).
pub fn consumption_label(dataset: &Dataset, subscriber_id: &str, launch: &ContentLaunch) -> bool {
    let Some(sub) = dataset.subscriber(subscriber_id) else {
        return false;
    };
    label_for(dataset, sub, launch)
}

fn label_for(dataset: &Dataset, sub: &SignupRecord, launch: &ContentLaunch) -> bool {
    let available = launch.availability_date(sub.signup_date);
    let window = i64::from(launch.label_window_days);
    dataset
        .events_of(&sub.subscriber_id)
        .filter(|ev| ev.content_id == launch.content_id)
        .filter(|ev| {
            let offset = (ev.event_date - available).num_days();
            (0..window).contains(&offset)
        })
        .any(|ev| ev.completion_fraction >= launch.completion_threshold)
}

/// Splits signups around a launch into per-date control (pre-launch) and
/// treatment (post-launch) slices. Dates without signups produce no slice;
/// gap-day signups are excluded entirely.
pub fn build_cohorts(dataset: &Dataset, launch: &ContentLaunch) -> Result<Vec<CohortSlice>> {
    let mut slices = Vec::new();
    for (date, members) in dataset.signups_between(launch.pre_start(), launch.pre_end()) {
        slices.push(CohortSlice {
            content_id: launch.content_id.clone(),
            signup_date: date,
            members: members.iter().map(|s| s.subscriber_id.clone()).collect(),
            kind: CohortKind::PreLaunch,
        });
    }
    if slices.is_empty() {
        return Err(AimError::EmptyControl {
            content_id: launch.content_id.clone(),
        });
    }
    let post_stop = launch.post_end() + chrono::Days::new(1);
    for (date, members) in dataset.signups_between(launch.launch_date, post_stop) {
        slices.push(CohortSlice {
            content_id: launch.content_id.clone(),
            signup_date: date,
            members: members.iter().map(|s| s.subscriber_id.clone()).collect(),
            kind: CohortKind::PostLaunch,
        });
    }
    Ok(slices)
}

/// Labels and covariates for every member of a slice.
pub fn labeled_rows(
    dataset: &Dataset,
    slice: &CohortSlice,
    launch: &ContentLaunch,
) -> Vec<LabeledRow> {
    slice
        .members
        .iter()
        .filter_map(|id| dataset.subscriber(id))
        .map(|sub| labeled_row(dataset, sub, launch, slice.kind))
        .collect()
}

pub(crate) fn labeled_row(
    dataset: &Dataset,
    sub: &SignupRecord,
    launch: &ContentLaunch,
    kind: CohortKind,
) -> LabeledRow {
    let age_days = match kind {
        CohortKind::PostLaunch => 0,
        CohortKind::PreLaunch => (launch.launch_date - sub.signup_date).num_days().max(0) as u32,
    };
    LabeledRow {
        subscriber_id: sub.subscriber_id.clone(),
        content_id: launch.content_id.clone(),
        consumed: label_for(dataset, sub, launch),
        age_days,
        activity: sub.activity,
        promo_intensity: dataset.promo_intensity(&sub.subscriber_id, &launch.content_id),
        kind,
    }
}

/// Control rows pooled across launches: the training set for the baseline model.
/// Launches without any control signups are skipped with a warning.
pub fn control_rows(dataset: &Dataset, launches: &[ContentLaunch]) -> Vec<LabeledRow> {
    let mut rows = Vec::new();
    for launch in launches {
        match build_cohorts(dataset, launch) {
            Ok(slices) => {
                for slice in slices.iter().filter(|s| s.kind == CohortKind::PreLaunch) {
                    rows.extend(labeled_rows(dataset, slice, launch));
                }
            }
            Err(e) => log::warn!("skipping launch in training pool: {e}"),
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain_io::{ConsumptionRecord, PromotionRecord};
    use chrono::NaiveDate;

    fn day(n: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(n)
    }

    fn signup(id: &str, d: u64) -> SignupRecord {
        SignupRecord {
            subscriber_id: id.into(),
            signup_date: day(d),
            group: None,
            activity: 1.0,
        }
    }

    fn event(id: &str, content: &str, d: u64, frac: f64) -> ConsumptionRecord {
        ConsumptionRecord {
            subscriber_id: id.into(),
            content_id: content.into(),
            event_date: day(d),
            completion_fraction: frac,
        }
    }

    fn launch_at(d: u64) -> ContentLaunch {
        ContentLaunch {
            completion_threshold: 0.7,
            label_window_days: 7,
            ..ContentLaunch::new("a", day(d))
        }
    }

    #[test]
    fn label_inside_window_above_threshold() {
        let ds = Dataset::new(
            vec![signup("s", 10)],
            vec![event("s", "a", 12, 0.9)],
            vec![],
        )
        .unwrap();
        assert!(consumption_label(&ds, "s", &launch_at(10)));
    }

    #[test]
    fn label_outside_window() {
        let ds = Dataset::new(
            vec![signup("s", 10)],
            vec![event("s", "a", 20, 0.9)],
            vec![],
        )
        .unwrap();
        assert!(!consumption_label(&ds, "s", &launch_at(10)));
    }

    #[test]
    fn label_below_threshold() {
        let ds = Dataset::new(
            vec![signup("s", 10)],
            vec![event("s", "a", 10, 0.3), event("s", "a", 11, 0.69)],
            vec![],
        )
        .unwrap();
        assert!(!consumption_label(&ds, "s", &launch_at(10)));
    }

    #[test]
    fn pre_launch_availability_is_launch_date() {
        // joined day 2, content launches day 10: an event on day 4 predates availability
        let ds = Dataset::new(
            vec![signup("s", 2), signup("t", 2)],
            vec![event("s", "a", 4, 0.9), event("t", "a", 12, 0.8)],
            vec![],
        )
        .unwrap();
        assert!(!consumption_label(&ds, "s", &launch_at(10)));
        assert!(consumption_label(&ds, "t", &launch_at(10)));
        // day 17 is the 8th day after availability
        let late =
            Dataset::new(vec![signup("u", 2)], vec![event("u", "a", 17, 0.8)], vec![]).unwrap();
        assert!(!consumption_label(&late, "u", &launch_at(10)));
    }

    #[test]
    fn absent_subscriber_is_false() {
        let ds = Dataset::new(vec![signup("s", 1)], vec![], vec![]).unwrap();
        assert!(!consumption_label(&ds, "nobody", &launch_at(10)));
    }

    #[test]
    fn cohort_windows() {
        let signups: Vec<_> = (80..=120).map(|d| signup(&format!("s{d}"), d)).collect();
        let ds = Dataset::new(signups, vec![], vec![]).unwrap();
        let launch = ContentLaunch {
            pre_window_days: 7,
            pre_gap_days: 2,
            post_window_days: 14,
            ..ContentLaunch::new("a", day(100))
        };
        let slices = build_cohorts(&ds, &launch).unwrap();
        let pre: Vec<_> = slices
            .iter()
            .filter(|s| s.kind == CohortKind::PreLaunch)
            .map(|s| s.signup_date)
            .collect();
        let post: Vec<_> = slices
            .iter()
            .filter(|s| s.kind == CohortKind::PostLaunch)
            .map(|s| s.signup_date)
            .collect();
        assert_eq!(pre, (91..98).map(day).collect::<Vec<_>>());
        assert_eq!(post, (100..=114).map(day).collect::<Vec<_>>());
        // gap days 98 and 99 appear nowhere
        assert!(slices
            .iter()
            .all(|s| s.signup_date != day(98) && s.signup_date != day(99)));
    }

    #[test]
    fn empty_control_window_is_an_error() {
        let ds = Dataset::new(vec![signup("s", 100)], vec![], vec![]).unwrap();
        let err = build_cohorts(&ds, &launch_at(100)).unwrap_err();
        assert!(matches!(err, AimError::EmptyControl { .. }));
    }

    #[test]
    fn labeled_row_covariates() {
        let ds = Dataset::new(
            vec![signup("pre", 95), signup("post", 101)],
            vec![],
            vec![PromotionRecord {
                subscriber_id: "post".into(),
                content_id: "a".into(),
                promo_intensity: 0.4,
            }],
        )
        .unwrap();
        let launch = ContentLaunch {
            pre_gap_days: 2,
            pre_window_days: 10,
            ..launch_at(100)
        };
        let slices = build_cohorts(&ds, &launch).unwrap();
        let rows: Vec<_> = slices
            .iter()
            .flat_map(|s| labeled_rows(&ds, s, &launch))
            .collect();
        let pre = rows.iter().find(|r| r.subscriber_id == "pre").unwrap();
        let post = rows.iter().find(|r| r.subscriber_id == "post").unwrap();
        assert_eq!(pre.age_days, 5);
        assert_eq!(pre.promo_intensity, 0.0);
        assert_eq!(pre.kind, CohortKind::PreLaunch);
        assert_eq!(post.age_days, 0);
        assert_eq!(post.promo_intensity, 0.4);
    }
}
