use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;

use super::types::{ConsumptionRecord, PromotionRecord, SignupRecord};
use crate::error::{AimError, Result};

/// In-memory event logs, indexed by subscriber. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    signups: Vec<SignupRecord>,
    consumption: Vec<ConsumptionRecord>,
    promotions: Vec<PromotionRecord>,
    subscriber_index: HashMap<String, usize>,
    events_by_subscriber: Vec<Vec<usize>>,
    promo_by_pair: HashMap<(usize, String), f64>,
    signups_by_date: BTreeMap<NaiveDate, Vec<usize>>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.signups == other.signups
            && self.consumption == other.consumption
            && self.promotions == other.promotions
    }
}

pub(crate) fn check_signup(rec: &SignupRecord) -> std::result::Result<(), String> {
    if rec.subscriber_id.is_empty() {
        return Err("empty subscriber_id".into());
    }
    if !(rec.activity >= 0.0 && rec.activity.is_finite()) {
        return Err(format!(
            "activity {} must be a finite value >= 0",
            rec.activity
        ));
    }
    if rec.group.as_deref() == Some("") {
        return Err("group must be absent or non-empty".into());
    }
    Ok(())
}

pub(crate) fn check_consumption(rec: &ConsumptionRecord) -> std::result::Result<(), String> {
    if !(0.0..=1.0).contains(&rec.completion_fraction) {
        return Err(format!(
            "completion_fraction {} outside [0, 1]",
            rec.completion_fraction
        ));
    }
    Ok(())
}

pub(crate) fn check_promotion(rec: &PromotionRecord) -> std::result::Result<(), String> {
    if !(0.0..=1.0).contains(&rec.promo_intensity) {
        return Err(format!(
            "promo_intensity {} outside [0, 1]",
            rec.promo_intensity
        ));
    }
    Ok(())
}

impl Dataset {
    pub fn new(
        signups: Vec<SignupRecord>,
        consumption: Vec<ConsumptionRecord>,
        promotions: Vec<PromotionRecord>,
    ) -> Result<Self> {
        let mut subscriber_index = HashMap::with_capacity(signups.len());
        let mut signups_by_date: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
        for (idx, rec) in signups.iter().enumerate() {
            check_signup(rec).map_err(|m| {
                AimError::InvalidRecord(format!("signup `{}`: {m}", rec.subscriber_id))
            })?;
            if subscriber_index
                .insert(rec.subscriber_id.clone(), idx)
                .is_some()
            {
                return Err(AimError::DuplicateSubscriber(rec.subscriber_id.clone()));
            }
            signups_by_date
                .entry(rec.signup_date)
                .or_default()
                .push(idx);
        }

        let mut events_by_subscriber = vec![Vec::new(); signups.len()];
        for (idx, ev) in consumption.iter().enumerate() {
            check_consumption(ev).map_err(AimError::InvalidRecord)?;
            let sub = *subscriber_index.get(&ev.subscriber_id).ok_or_else(|| {
                AimError::InvalidRecord(format!(
                    "consumption references unknown subscriber `{}`",
                    ev.subscriber_id
                ))
            })?;
            if ev.event_date < signups[sub].signup_date {
                return Err(AimError::InvalidRecord(format!(
                    "consumption by `{}` on {} precedes signup on {}",
                    ev.subscriber_id, ev.event_date, signups[sub].signup_date
                )));
            }
            events_by_subscriber[sub].push(idx);
        }

        let mut promo_by_pair = HashMap::with_capacity(promotions.len());
        for p in &promotions {
            check_promotion(p).map_err(AimError::InvalidRecord)?;
            let sub = *subscriber_index.get(&p.subscriber_id).ok_or_else(|| {
                AimError::InvalidRecord(format!(
                    "promotion references unknown subscriber `{}`",
                    p.subscriber_id
                ))
            })?;
            promo_by_pair.insert((sub, p.content_id.clone()), p.promo_intensity);
        }

        Ok(Self {
            signups,
            consumption,
            promotions,
            subscriber_index,
            events_by_subscriber,
            promo_by_pair,
            signups_by_date,
        })
    }

    pub fn signups(&self) -> &[SignupRecord] {
        &self.signups
    }

    pub fn consumption(&self) -> &[ConsumptionRecord] {
        &self.consumption
    }

    pub fn promotions(&self) -> &[PromotionRecord] {
        &self.promotions
    }

    pub fn subscriber(&self, subscriber_id: &str) -> Option<&SignupRecord> {
        self.subscriber_index
            .get(subscriber_id)
            .map(|&i| &self.signups[i])
    }

    /// Consumption events of one subscriber, in file order.
    pub fn events_of<'a>(
        &'a self,
        subscriber_id: &str,
    ) -> impl Iterator<Item = &'a ConsumptionRecord> + 'a {
        let idxs: &'a [usize] = self
            .subscriber_index
            .get(subscriber_id)
            .map(|&i| self.events_by_subscriber[i].as_slice())
            .unwrap_or(&[]);
        idxs.iter().map(move |&e| &self.consumption[e])
    }

    /// Promotion intensity of `content_id` for the subscriber; 0 when unrecorded.
    pub fn promo_intensity(&self, subscriber_id: &str, content_id: &str) -> f64 {
        self.subscriber_index
            .get(subscriber_id)
            .and_then(|&i| self.promo_by_pair.get(&(i, content_id.to_string())))
            .copied()
            .unwrap_or(0.0)
    }

    /// Signups with `start <= signup_date < end`, grouped by date in ascending order.
    pub fn signups_between(
        &self,
        start: NaiveDate,
        end: NaiveDate,
    ) -> impl Iterator<Item = (NaiveDate, Vec<&SignupRecord>)> + '_ {
        self.signups_by_date
            .range(start..end)
            .map(|(d, idxs)| (*d, idxs.iter().map(|&i| &self.signups[i]).collect()))
    }

    /// Signup counts per date, optionally restricted to one group.
    pub fn daily_signup_counts(&self, group: Option<&str>) -> BTreeMap<NaiveDate, usize> {
        self.signups_by_date
            .iter()
            .map(|(d, idxs)| {
                let n = idxs
                    .iter()
                    .filter(|&&i| group.is_none() || self.signups[i].group.as_deref() == group)
                    .count();
                (*d, n)
            })
            .collect()
    }

    /// Distinct group keys, sorted. Ungrouped signups yield `None`.
    pub fn groups(&self) -> Vec<Option<String>> {
        let mut g: Vec<Option<String>> = self.signups.iter().map(|s| s.group.clone()).collect();
        g.sort();
        g.dedup();
        g
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let first = *self.signups_by_date.keys().next()?;
        let last = *self.signups_by_date.keys().next_back()?;
        Some((first, last))
    }
}
