use chrono::{Datelike, NaiveDate};

/// Width of the centered moving average used for the smooth trend.
pub const TREND_WINDOW: usize = 28;

/// A day-of-week times smooth-trend fit of a daily series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalTemplate {
    pub trend: Vec<f64>,
    /// Monday-first multiplicative factors with mean 1.
    pub day_of_week: [f64; 7],
    pub fitted: Vec<f64>,
}

/// Fits the template to `values` observed on consecutive `dates`. Points
/// with `mask[t] = true` are excluded from the fit and receive an
/// interpolated template value, which lets a launch window be compared
/// against what the season alone predicts.
pub fn fit_template(
    dates: &[NaiveDate],
    values: &[f64],
    mask: Option<&[bool]>,
) -> SeasonalTemplate {
    let n = values.len();
    let masked = |t: usize| mask.is_some_and(|m| m[t]);
    let half = TREND_WINDOW / 2;

    let mut trend = vec![0.0; n];
    let fallback = {
        let kept: Vec<f64> = (0..n).filter(|&t| !masked(t)).map(|t| values[t]).collect();
        if kept.is_empty() {
            0.0
        } else {
            kept.iter().sum::<f64>() / kept.len() as f64
        }
    };
    for (t, tr) in trend.iter_mut().enumerate() {
        // 2x28 moving average: the two end points carry half weight.
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(n - 1);
        let (mut num, mut den) = (0.0, 0.0);
        for s in lo..=hi {
            if masked(s) {
                continue;
            }
            let w = if s.abs_diff(t) == half { 0.5 } else { 1.0 };
            num += w * values[s];
            den += w;
        }
        *tr = if den > 0.0 { num / den } else { fallback };
    }

    // Day-of-week factors come from points whose trend window is complete,
    // unless the series is too short to have any.
    let interior = |t: usize| t >= half && t + half < n;
    let use_interior = (0..n).any(|t| interior(t) && !masked(t));
    let mut sums = [0.0; 7];
    let mut counts = [0usize; 7];
    for t in 0..n {
        if masked(t) || trend[t] <= 0.0 || (use_interior && !interior(t)) {
            continue;
        }
        let d = dates[t].weekday().num_days_from_monday() as usize;
        sums[d] += values[t] / trend[t];
        counts[d] += 1;
    }
    let mut day_of_week = [1.0; 7];
    let present: Vec<usize> = (0..7).filter(|&d| counts[d] > 0).collect();
    for &d in &present {
        day_of_week[d] = sums[d] / counts[d] as f64;
    }
    if !present.is_empty() {
        let mean = present.iter().map(|&d| day_of_week[d]).sum::<f64>() / present.len() as f64;
        if mean > 0.0 {
            for &d in &present {
                day_of_week[d] /= mean;
            }
        }
    }

    let fitted = (0..n)
        .map(|t| trend[t] * day_of_week[dates[t].weekday().num_days_from_monday() as usize])
        .collect();
    SeasonalTemplate {
        trend,
        day_of_week,
        fitted,
    }
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        (0..n)
            .map(|k| start + chrono::Days::new(k as u64))
            .collect()
    }

    #[test]
    fn pure_weekly_pattern_is_reproduced() {
        let pattern = [0.9, 0.8, 0.9, 1.0, 1.1, 1.2, 1.1];
        let d = dates(84);
        let v: Vec<f64> = d
            .iter()
            .map(|x| 500.0 * pattern[x.weekday().num_days_from_monday() as usize])
            .collect();
        let tpl = fit_template(&d, &v, None);
        // away from the edges the 2x28 average of a weekly pattern is flat
        for t in 14..70 {
            assert!((tpl.fitted[t] - v[t]).abs() < 1e-9, "day {t}");
        }
    }

    #[test]
    fn masked_spike_does_not_lift_the_template() {
        let d = dates(84);
        let mut v = vec![100.0; 84];
        let mut mask = vec![false; 84];
        for t in 40..47 {
            v[t] = 300.0;
            mask[t] = true;
        }
        let tpl = fit_template(&d, &v, Some(&mask));
        for t in 40..47 {
            assert!((tpl.fitted[t] - 100.0).abs() < 1e-9);
        }
        let unmasked = fit_template(&d, &v, None);
        assert!(unmasked.fitted[43] > 110.0);
    }

    #[test]
    fn rmse_basics() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]) - 12.5f64.sqrt()).abs() < 1e-12);
    }
}
