use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use serde::{Deserialize, Serialize};

use super::config::AttributionScenario;
use crate::attribution::{AttributionInstance, CandidatePair};
use crate::error::{AimError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePair {
    pub date: NaiveDate,
    pub subscriber_id: String,
    pub content_id: String,
    pub baseline_p: f64,
    pub incremental: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionTruth {
    pub pairs: Vec<TruePair>,
    /// Share of subscribers consuming two or more contents.
    pub multi_consumer_fraction: f64,
}

/// One instance per signup day plus the generating truth.
#[derive(Debug, Clone)]
pub struct AttributionSimulation {
    pub instances: Vec<AttributionInstance>,
    pub truth: AttributionTruth,
}

/// Generates a multi-content attribution problem whose quotas come from a
/// known 1:1 incremental assignment, so every instance is feasible.
pub fn simulate_attribution(config: &AttributionScenario) -> Result<AttributionSimulation> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let zipf = Zipf::new(f64::from(config.contents), config.zipf_exponent)
        .map_err(|e| AimError::Config(e.to_string()))?;
    let width = config.contents.to_string().len();

    let mut per_day: BTreeMap<u32, (Vec<CandidatePair>, BTreeMap<String, u32>)> = BTreeMap::new();
    let mut truth = Vec::new();
    let mut multi = 0u32;

    for i in 0..config.subscribers {
        let subscriber_id = format!("u{:06}", i + 1);
        let day = rng.random_range(0..config.days);
        let date = config.start_date + chrono::Days::new(u64::from(day));

        let mut k = 1u32;
        while k < config.contents && rng.random::<f64>() < config.multi_consumption_prob {
            k += 1;
        }
        if k >= 2 {
            multi += 1;
        }
        // Consumption order is the draw order.
        let mut picked: Vec<u32> = Vec::with_capacity(k as usize);
        let mut seen = BTreeSet::new();
        while picked.len() < k as usize {
            let c = zipf.sample(&mut rng) as u32;
            if seen.insert(c) {
                picked.push(c);
            }
        }
        let ps: Vec<f64> = picked.iter().map(|_| rng.random::<f64>()).collect();
        let incremental_to = if rng.random::<f64>() < config.incremental_rate {
            let weights = ps.iter().map(|p| 1.0 - p);
            WeightedIndex::new(weights).ok().map(|w| w.sample(&mut rng))
        } else {
            None
        };

        let (pairs, quotas) = per_day.entry(day).or_default();
        for (order, (&c, &p)) in picked.iter().zip(&ps).enumerate() {
            let content_id = format!("c{c:0width$}");
            let incremental = incremental_to == Some(order);
            if incremental {
                *quotas.entry(content_id.clone()).or_insert(0) += 1;
            }
            pairs.push(CandidatePair {
                subscriber_id: subscriber_id.clone(),
                content_id: content_id.clone(),
                affinity: 1.0 - p,
                order: order as u32 + 1,
            });
            truth.push(TruePair {
                date,
                subscriber_id: subscriber_id.clone(),
                content_id,
                baseline_p: p,
                incremental,
            });
        }
    }

    let instances = per_day
        .into_iter()
        .map(|(day, (pairs, quotas))| {
            let date = config.start_date + chrono::Days::new(u64::from(day));
            Ok(AttributionInstance::new(pairs, &quotas)?.with_key(Some(date), None))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttributionSimulation {
        instances,
        truth: AttributionTruth {
            pairs: truth,
            multi_consumer_fraction: f64::from(multi) / f64::from(config.subscribers),
        },
    })
}
