use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baseline_model::{predict_p, BaselineModel};
use crate::domain_io::{labeled_row, CohortKind, ContentLaunch, Dataset};
use crate::error::{AimError, Result};
use crate::estimator::LaunchImpactSeries;

/// Default `gamma` for [`AttributionInstance::with_order_decay`].
pub const DEFAULT_DECAY_GAMMA: f64 = 0.8;

/// A subscriber-content pair: the subscriber consumed the content upon signup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub subscriber: usize,
    pub content: usize,
    /// `1 - p_hat`: how plausibly this consumer joined for the content.
    pub affinity: f64,
    /// 1-based position of this content in the subscriber's consumption order.
    pub order: u32,
}

/// Input to the attribution step for one (day, group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionInstance {
    pub date: Option<NaiveDate>,
    pub group: Option<String>,
    /// Sorted ascending; indices into this list identify subscribers.
    pub subscribers: Vec<String>,
    /// Sorted ascending.
    pub contents: Vec<String>,
    /// Sorted by (subscriber, content), so index order is lexicographic pair order.
    pub candidates: Vec<Candidate>,
    /// Number of subscribers to attribute to each content.
    pub quotas: Vec<u32>,
}

/// Raw pair used to assemble an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub subscriber_id: String,
    pub content_id: String,
    pub affinity: f64,
    pub order: u32,
}

impl AttributionInstance {
    /// Builds an instance from pairs and per-content quotas. Contents that have
    /// a quota but no candidates are kept so infeasibility can be reported.
    pub fn new(pairs: Vec<CandidatePair>, quotas: &BTreeMap<String, u32>) -> Result<Self> {
        let mut subscribers: Vec<String> = pairs.iter().map(|p| p.subscriber_id.clone()).collect();
        subscribers.sort();
        subscribers.dedup();
        let mut contents: Vec<String> = pairs
            .iter()
            .map(|p| p.content_id.clone())
            .chain(quotas.keys().cloned())
            .collect();
        contents.sort();
        contents.dedup();

        let sub_idx: HashMap<&str, usize> = subscribers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let con_idx: HashMap<&str, usize> = contents
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();

        let mut candidates = Vec::with_capacity(pairs.len());
        for p in &pairs {
            if !(0.0..=1.0).contains(&p.affinity) {
                return Err(AimError::InvalidRecord(format!(
                    "affinity {} for ({}, {}) outside [0, 1]",
                    p.affinity, p.subscriber_id, p.content_id
                )));
            }
            candidates.push(Candidate {
                subscriber: sub_idx[p.subscriber_id.as_str()],
                content: con_idx[p.content_id.as_str()],
                affinity: p.affinity,
                order: p.order.max(1),
            });
        }
        candidates.sort_by_key(|c| (c.subscriber, c.content));
        if let Some(w) = candidates
            .windows(2)
            .find(|w| (w[0].subscriber, w[0].content) == (w[1].subscriber, w[1].content))
        {
            return Err(AimError::InvalidRecord(format!(
                "duplicate candidate ({}, {})",
                subscribers[w[0].subscriber], contents[w[0].content]
            )));
        }

        let quotas = contents
            .iter()
            .map(|c| quotas.get(c).copied().unwrap_or(0))
            .collect();
        Ok(Self {
            date: None,
            group: None,
            subscribers,
            contents,
            candidates,
            quotas,
        })
    }

    pub fn with_key(mut self, date: Option<NaiveDate>, group: Option<String>) -> Self {
        self.date = date;
        self.group = group;
        self
    }

    pub fn candidate_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.contents.len()];
        for c in &self.candidates {
            counts[c.content] += 1;
        }
        counts
    }

    /// Candidate indices per content, in (subscriber) order.
    pub fn by_content(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.contents.len()];
        for (k, c) in self.candidates.iter().enumerate() {
            out[c.content].push(k);
        }
        out
    }

    /// Candidate indices per subscriber (the subscriber's consumed set).
    pub fn by_subscriber(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.subscribers.len()];
        for (k, c) in self.candidates.iter().enumerate() {
            out[c.subscriber].push(k);
        }
        out
    }

    /// Every quota must be coverable by the content's candidates.
    pub fn check_feasible(&self) -> Result<()> {
        let counts = self.candidate_counts();
        for (j, (&q, &n)) in self.quotas.iter().zip(&counts).enumerate() {
            if q as usize > n {
                return Err(AimError::Infeasible {
                    content_id: self.contents[j].clone(),
                    quota: q,
                    candidates: n,
                });
            }
        }
        Ok(())
    }

    /// Multiplies each affinity by `gamma^(order - 1)`, rewarding content the
    /// subscriber consumed first.
    pub fn with_order_decay(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(AimError::Config(format!(
                "decay gamma {gamma} outside (0, 1]"
            )));
        }
        let mut out = self.clone();
        for c in &mut out.candidates {
            c.affinity *= gamma.powi(c.order as i32 - 1);
        }
        Ok(out)
    }
}

/// A solved attribution: which candidate pairs are attributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Indices into `instance.candidates`, ascending.
    pub assigned: Vec<usize>,
    /// Subscribers attributed to two or more contents, ascending.
    pub multi_assigned: Vec<usize>,
    pub lambda: f64,
    /// `|multi_assigned| - lambda * total_affinity`.
    pub objective: f64,
    pub total_affinity: f64,
    pub mean_affinity: f64,
    /// Distinct subscribers holding at least one attribution.
    pub attributed_subscribers: usize,
    /// Share of attributed subscribers that are multi-assigned.
    pub multi_rate: f64,
    /// `None` for heuristics; `Some(0.0)` when optimality is proven.
    pub optimality_gap: Option<f64>,
    pub nodes: usize,
}

impl Assignment {
    pub fn from_selection(
        instance: &AttributionInstance,
        mut assigned: Vec<usize>,
        lambda: f64,
    ) -> Self {
        assigned.sort_unstable();
        assigned.dedup();
        let mut per_sub = vec![0u32; instance.subscribers.len()];
        let mut total_affinity = 0.0;
        for &k in &assigned {
            let c = &instance.candidates[k];
            per_sub[c.subscriber] += 1;
            total_affinity += c.affinity;
        }
        let multi_assigned: Vec<usize> = (0..per_sub.len()).filter(|&i| per_sub[i] >= 2).collect();
        let attributed = per_sub.iter().filter(|&&n| n > 0).count();
        let mean_affinity = if assigned.is_empty() {
            0.0
        } else {
            total_affinity / assigned.len() as f64
        };
        let multi_rate = if attributed == 0 {
            0.0
        } else {
            multi_assigned.len() as f64 / attributed as f64
        };
        Self {
            objective: multi_assigned.len() as f64 - lambda * total_affinity,
            assigned,
            multi_assigned,
            lambda,
            total_affinity,
            mean_affinity,
            attributed_subscribers: attributed,
            multi_rate,
            optimality_gap: None,
            nodes: 0,
        }
    }

    /// Quota equality per content and `multi_assigned` matching the
    /// subscribers with two or more attributions.
    pub fn verify(&self, instance: &AttributionInstance) -> std::result::Result<(), String> {
        let mut per_content = vec![0u32; instance.contents.len()];
        let mut per_sub = vec![0u32; instance.subscribers.len()];
        for &k in &self.assigned {
            let c = instance
                .candidates
                .get(k)
                .ok_or_else(|| format!("assigned index {k} out of range"))?;
            per_content[c.content] += 1;
            per_sub[c.subscriber] += 1;
        }
        for (j, (&got, &want)) in per_content.iter().zip(&instance.quotas).enumerate() {
            if got != want {
                return Err(format!(
                    "content `{}` has {got} attributions, quota {want}",
                    instance.contents[j]
                ));
            }
        }
        let multi: Vec<usize> = (0..per_sub.len()).filter(|&i| per_sub[i] >= 2).collect();
        if multi != self.multi_assigned {
            return Err("multi_assigned does not match subscribers with >= 2 attributions".into());
        }
        Ok(())
    }
}

/// Rounds half up, caps at the candidate count.
pub fn integer_quota(n_incremental: f64, candidates: usize) -> u32 {
    let q = (n_incremental.max(0.0) + 0.5).floor() as u64;
    q.min(candidates as u64) as u32
}

/// Builds one instance per (day, group) from post-launch consumers and the
/// daily incremental estimates.
pub fn build_instance(
    dataset: &Dataset,
    launches: &[ContentLaunch],
    impact_series: &[LaunchImpactSeries],
    model: &BaselineModel,
) -> Result<Vec<AttributionInstance>> {
    let launch_by_id: HashMap<&str, &ContentLaunch> = launches
        .iter()
        .map(|l| (l.content_id.as_str(), l))
        .collect();

    type Key = (NaiveDate, Option<String>);
    // (subscriber, content, affinity, first qualifying event date)
    let mut pairs: BTreeMap<Key, Vec<(String, String, f64, NaiveDate)>> = BTreeMap::new();
    let mut quotas: BTreeMap<Key, BTreeMap<String, u32>> = BTreeMap::new();

    for series in impact_series {
        let launch = launch_by_id
            .get(series.content_id.as_str())
            .ok_or_else(|| {
                AimError::Config(format!(
                    "no launch config for content `{}`",
                    series.content_id
                ))
            })?;
        for day in &series.daily {
            let key = (day.date, series.group.clone());
            let consumers: Vec<_> = dataset
                .signups_between(day.date, day.date + chrono::Days::new(1))
                .flat_map(|(_, subs)| subs)
                .filter(|s| series.group.is_none() || s.group == series.group)
                .map(|s| labeled_row(dataset, s, launch, CohortKind::PostLaunch))
                .filter(|r| r.consumed)
                .collect();
            let quota = integer_quota(day.n_incremental, consumers.len());
            if quota == 0 && day.n_incremental > 0.0 {
                log::debug!(
                    "{} {}: estimate {:.3} rounds to zero attributions",
                    series.content_id,
                    day.date,
                    day.n_incremental
                );
            }
            quotas
                .entry(key.clone())
                .or_default()
                .insert(series.content_id.clone(), quota);
            let entry = pairs.entry(key).or_default();
            for r in consumers {
                let p = predict_p(model, f64::from(r.age_days), r.activity, r.promo_intensity);
                let first =
                    first_qualifying_event(dataset, &r.subscriber_id, launch).unwrap_or(day.date);
                entry.push((r.subscriber_id, r.content_id, 1.0 - p, first));
            }
        }
    }

    let mut out = Vec::with_capacity(pairs.len());
    for (key, raw) in pairs {
        // consumption order per subscriber: earliest qualifying event first, ties by content id
        let mut by_sub: BTreeMap<&str, Vec<(NaiveDate, &str)>> = BTreeMap::new();
        for (s, c, _, d) in &raw {
            by_sub.entry(s.as_str()).or_default().push((*d, c.as_str()));
        }
        let mut order: HashMap<(&str, &str), u32> = HashMap::new();
        for (s, mut items) in by_sub {
            items.sort();
            for (rank, (_, c)) in items.into_iter().enumerate() {
                order.insert((s, c), rank as u32 + 1);
            }
        }
        let cand: Vec<CandidatePair> = raw
            .iter()
            .map(|(s, c, a, _)| CandidatePair {
                subscriber_id: s.clone(),
                content_id: c.clone(),
                affinity: *a,
                order: order[&(s.as_str(), c.as_str())],
            })
            .collect();
        let q = quotas.remove(&key).unwrap_or_default();
        out.push(AttributionInstance::new(cand, &q)?.with_key(Some(key.0), key.1));
    }
    Ok(out)
}

fn first_qualifying_event(
    dataset: &Dataset,
    subscriber_id: &str,
    launch: &ContentLaunch,
) -> Option<NaiveDate> {
    let sub = dataset.subscriber(subscriber_id)?;
    let available = launch.availability_date(sub.signup_date);
    dataset
        .events_of(subscriber_id)
        .filter(|e| {
            e.content_id == launch.content_id
                && e.completion_fraction >= launch.completion_threshold
        })
        .map(|e| e.event_date)
        .filter(|d| (0..i64::from(launch.label_window_days)).contains(&(*d - available).num_days()))
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn pair(s: &str, c: &str, a: f64) -> CandidatePair {
        CandidatePair {
            subscriber_id: s.into(),
            content_id: c.into(),
            affinity: a,
            order: 1,
        }
    }

    #[test]
    fn rounding_half_up_and_cap() {
        assert_eq!(integer_quota(2.4, 3), 2);
        assert_eq!(integer_quota(2.5, 3), 3);
        assert_eq!(integer_quota(7.9, 3), 3);
        assert_eq!(integer_quota(0.49, 3), 0);
    }

    #[test]
    fn subscriber_with_two_launches_has_two_pairs() {
        let q = BTreeMap::from([("c1".to_string(), 1), ("c2".to_string(), 1)]);
        let inst =
            AttributionInstance::new(vec![pair("a", "c1", 0.5), pair("a", "c2", 0.4)], &q).unwrap();
        assert_eq!(inst.by_subscriber()[0].len(), 2);
    }

    #[test]
    fn infeasible_quota_names_content() {
        let q = BTreeMap::from([("c1".to_string(), 2)]);
        let inst = AttributionInstance::new(vec![pair("a", "c1", 0.5)], &q).unwrap();
        match inst.check_feasible() {
            Err(AimError::Infeasible { content_id, .. }) => assert_eq!(content_id, "c1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_pairs_rejected() {
        let q = BTreeMap::new();
        assert!(
            AttributionInstance::new(vec![pair("a", "c1", 0.5), pair("a", "c1", 0.4)], &q).is_err()
        );
    }

    #[test]
    fn order_decay() {
        let q = BTreeMap::new();
        let mut p2 = pair("a", "c2", 0.5);
        p2.order = 3;
        let inst = AttributionInstance::new(vec![pair("a", "c1", 0.5), p2], &q).unwrap();
        let d = inst.with_order_decay(0.8).unwrap();
        assert_eq!(d.candidates[0].affinity, 0.5);
        assert!((d.candidates[1].affinity - 0.5 * 0.64).abs() < 1e-15);
        assert!(inst.with_order_decay(0.0).is_err());
    }
}
