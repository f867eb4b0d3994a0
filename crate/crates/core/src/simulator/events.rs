use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, SignupNoise};
use crate::domain_io::{
    read_json, write_dataset, write_json, write_launches, ConsumptionRecord, ContentLaunch,
    Dataset, PromotionRecord, SignupRecord, LAUNCHES_FILE,
};
use crate::error::{AimError, Result};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// True incremental subscribers of one content on one signup day and group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalCell {
    pub content_id: String,
    pub date: NaiveDate,
    pub group: Option<String>,
    pub count: u32,
    pub subscriber_ids: Vec<String>,
}

/// Generating consumption probability for a (subscriber, content) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProbability {
    pub subscriber_id: String,
    pub content_id: String,
    /// Probability of consuming had the subscriber not joined for this content.
    pub baseline_p: f64,
    /// Joined because of this content; consumption is certain.
    pub incremental: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTotals {
    pub date: NaiveDate,
    pub signups: u32,
    pub organic: u32,
    pub incremental: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rng_seed: u64,
    /// Campaign lift per exposed person, for experiment scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment_lift: Option<f64>,
    pub days: Vec<DayTotals>,
    pub incremental: Vec<IncrementalCell>,
    pub pairs: Vec<PairProbability>,
}

impl GroundTruth {
    /// True incrementals of `content_id` by signup date, summed over groups
    /// unless `group` is given.
    pub fn incremental_series(
        &self,
        content_id: &str,
        group: Option<&str>,
    ) -> BTreeMap<NaiveDate, u32> {
        let mut out = BTreeMap::new();
        for c in &self.incremental {
            if c.content_id == content_id && (group.is_none() || c.group.as_deref() == group) {
                *out.entry(c.date).or_insert(0) += c.count;
            }
        }
        out
    }

    pub fn total_incremental(&self, content_id: &str, group: Option<&str>) -> u64 {
        self.incremental_series(content_id, group)
            .values()
            .map(|&v| u64::from(v))
            .sum()
    }

    /// Incrementals of every content combined, per day.
    pub fn impact_by_date(&self) -> BTreeMap<NaiveDate, f64> {
        let mut out = BTreeMap::new();
        for c in &self.incremental {
            *out.entry(c.date).or_insert(0.0) += f64::from(c.count);
        }
        out
    }

    /// Daily signups over the whole horizon.
    pub fn signup_series(&self) -> BTreeMap<NaiveDate, f64> {
        self.days
            .iter()
            .map(|d| (d.date, f64::from(d.signups)))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub launches: Vec<ContentLaunch>,
    pub truth: GroundTruth,
}

impl Simulation {
    /// Writes the dataset CSVs, `launches.json` and `ground_truth.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_dataset(&self.dataset, dir)?;
        write_launches(&self.launches, &dir.join(LAUNCHES_FILE))?;
        self.truth.save(&dir.join(GROUND_TRUTH_FILE))
    }
}

/// Who a pending signup is: organic, or incremental to launch `l`.
#[derive(Debug, Clone, Copy)]
struct Pending {
    incremental_to: Option<usize>,
    group: Option<usize>,
}

struct Sampler {
    rng: ChaCha8Rng,
    activity: LogNormal<f64>,
    shifted_activity: LogNormal<f64>,
    promo: Beta<f64>,
    groups: Option<WeightedIndex<f64>>,
}

impl Sampler {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| AimError::Config(e.to_string());
        let a = config.activity;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            activity: LogNormal::new(a.mu, a.sigma).map_err(|e| bad(&e))?,
            shifted_activity: LogNormal::new(a.mu + config.incremental_activity_shift, a.sigma)
                .map_err(|e| bad(&e))?,
            promo: Beta::new(config.promotion.alpha, config.promotion.beta).map_err(|e| bad(&e))?,
            groups: if config.groups.is_empty() {
                None
            } else {
                Some(
                    WeightedIndex::new(config.groups.iter().map(|g| g.share))
                        .map_err(|e| bad(&e))?,
                )
            },
        })
    }

    fn count(&mut self, mean: f64, noise: SignupNoise) -> u32 {
        if mean <= 0.0 {
            return 0;
        }
        match noise {
            SignupNoise::None => mean.round() as u32,
            SignupNoise::Poisson => {
                let d = Poisson::new(mean).expect("positive finite mean");
                d.sample(&mut self.rng) as u32
            }
        }
    }

    fn group(&mut self) -> Option<usize> {
        let g = self.groups.as_ref()?;
        Some(g.sample(&mut self.rng))
    }
}

/// Generates signups, promotion and consumption logs for a scenario,
/// recording which subscribers were incremental to which launch.
pub fn simulate(config: &ScenarioConfig) -> Result<Simulation> {
    config.validate()?;
    let mut s = Sampler::new(config)?;
    let group_index: BTreeMap<&str, usize> = config
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| (g.name.as_str(), i))
        .collect();

    let mut signups = Vec::new();
    let mut consumption = Vec::new();
    let mut promotions = Vec::new();
    let mut pairs = Vec::new();
    let mut days = Vec::with_capacity(config.days as usize);
    let mut cells: BTreeMap<(usize, NaiveDate, Option<usize>), Vec<String>> = BTreeMap::new();
    let mut next_id = 0u64;

    for day in 0..config.days {
        let date = config.start_date + chrono::Days::new(u64::from(day));
        let base = s.count(config.expected_signups(day), config.signup_noise);

        let mut pending = Vec::new();
        for (l, ls) in config.launches.iter().enumerate() {
            let offset = (date - ls.launch.launch_date).num_days();
            for _ in 0..ls.shared_on(offset) {
                let group = s.group();
                pending.push(Pending {
                    incremental_to: Some(l),
                    group,
                });
            }
            for (name, &g) in &group_index {
                for _ in 0..ls.group_on(name, offset) {
                    pending.push(Pending {
                        incremental_to: Some(l),
                        group: Some(g),
                    });
                }
            }
        }
        let n_incremental = pending.len() as u32;
        let organic = if config.incrementals_within_base {
            base.saturating_sub(n_incremental)
        } else {
            base
        };
        for _ in 0..organic {
            let group = s.group();
            pending.push(Pending {
                incremental_to: None,
                group,
            });
        }
        // Ids are handed out after shuffling so they carry no hint of the truth.
        pending.shuffle(&mut s.rng);
        days.push(DayTotals {
            date,
            signups: pending.len() as u32,
            organic,
            incremental: n_incremental,
        });

        for p in pending {
            next_id += 1;
            let id = format!("s{next_id:07}");
            let activity = if p.incremental_to.is_some() {
                s.shifted_activity.sample(&mut s.rng)
            } else {
                s.activity.sample(&mut s.rng)
            };
            signups.push(SignupRecord {
                subscriber_id: id.clone(),
                signup_date: date,
                group: p.group.map(|g| config.groups[g].name.clone()),
                activity,
            });
            if let Some(l) = p.incremental_to {
                cells
                    .entry((l, date, p.group))
                    .or_default()
                    .push(id.clone());
            }

            for (l, ls) in config.launches.iter().enumerate() {
                let launch = &ls.launch;
                if date < launch.pre_start() || date > launch.post_end() {
                    continue;
                }
                let promo = if s.rng.random::<f64>() < config.promotion.rate {
                    let v = s.promo.sample(&mut s.rng);
                    promotions.push(PromotionRecord {
                        subscriber_id: id.clone(),
                        content_id: launch.content_id.clone(),
                        promo_intensity: v,
                    });
                    v
                } else {
                    0.0
                };
                let available = launch.availability_date(date);
                let age = (available - date).num_days() as f64;
                let baseline_p = ls.baseline.probability(age, activity, promo);
                let incremental = p.incremental_to == Some(l);
                pairs.push(PairProbability {
                    subscriber_id: id.clone(),
                    content_id: launch.content_id.clone(),
                    baseline_p,
                    incremental,
                });

                let window = u64::from(launch.label_window_days);
                let threshold = launch.completion_threshold;
                let completion = if incremental || s.rng.random::<f64>() < baseline_p {
                    Some(s.rng.random_range(threshold..=1.0))
                } else if s.rng.random::<f64>() < config.partial_view_rate && threshold > 0.0 {
                    Some(s.rng.random_range(0.0..threshold))
                } else {
                    None
                };
                if let Some(completion_fraction) = completion {
                    let lag = s.rng.random_range(0..window);
                    consumption.push(ConsumptionRecord {
                        subscriber_id: id.clone(),
                        content_id: launch.content_id.clone(),
                        event_date: available + chrono::Days::new(lag),
                        completion_fraction,
                    });
                }
            }
        }
    }

    let incremental = cells
        .into_iter()
        .map(|((l, date, g), mut ids)| {
            ids.sort();
            IncrementalCell {
                content_id: config.launches[l].launch.content_id.clone(),
                date,
                group: g.map(|g| config.groups[g].name.clone()),
                count: ids.len() as u32,
                subscriber_ids: ids,
            }
        })
        .collect();

    consumption.sort_by(|a: &ConsumptionRecord, b| {
        (&a.subscriber_id, a.event_date, &a.content_id).cmp(&(
            &b.subscriber_id,
            b.event_date,
            &b.content_id,
        ))
    });
    let dataset = Dataset::new(signups, consumption, promotions)?;
    Ok(Simulation {
        dataset,
        launches: config.contents(),
        truth: GroundTruth {
            rng_seed: config.rng_seed,
            experiment_lift: config.experiment_lift(),
            days,
            incremental,
            pairs,
        },
    })
}
