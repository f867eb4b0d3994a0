//! Assigning incremental signups to the subscribers who produced them.
//!
//! Each (day, group) becomes an [`AttributionInstance`]: per-content quotas
//! derived from the incremental estimates, and candidate pairs for every
//! post-launch signup that consumed a launched content. Quotas are filled
//! either greedily by affinity or exactly, trading multiple assignment
//! against affinity through `lambda`.

mod brute;
mod greedy;
mod instance;
mod milp;
mod pareto;
pub mod simplex;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use brute::{brute_force, BRUTE_FORCE_LIMIT};
pub use greedy::rank_greedy;
pub use instance::{
    build_instance, integer_quota, Assignment, AttributionInstance, Candidate, CandidatePair,
    DEFAULT_DECAY_GAMMA,
};
pub use milp::{solve_exact, solve_exact_with, ExactOptions, SolveStats};
pub use pareto::{pareto_sweep, pareto_sweep_many, ParetoPoint};

use crate::error::{AimError, Result};

/// One attributed (subscriber, content) pair, as written to `attribution.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub subscriber_id: String,
    pub content_id: String,
    pub date: Option<NaiveDate>,
    pub group: Option<String>,
    pub affinity: f64,
    pub multi_assigned: bool,
}

/// Flattens a solved instance into output rows, ordered by (subscriber, content).
pub fn attribution_records(
    instance: &AttributionInstance,
    assignment: &Assignment,
) -> Vec<AttributionRecord> {
    assignment
        .assigned
        .iter()
        .map(|&k| {
            let c = &instance.candidates[k];
            AttributionRecord {
                subscriber_id: instance.subscribers[c.subscriber].clone(),
                content_id: instance.contents[c.content].clone(),
                date: instance.date,
                group: instance.group.clone(),
                affinity: c.affinity,
                multi_assigned: assignment
                    .multi_assigned
                    .binary_search(&c.subscriber)
                    .is_ok(),
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path, header: &[&str]) -> Result<()> {
    let file = File::create(path).map_err(|e| AimError::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    wtr.write_record(header)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| AimError::io(path, e))?;
    Ok(())
}

/// Writes `attribution.csv`.
pub fn write_attribution_csv(records: &[AttributionRecord], path: &Path) -> Result<()> {
    write_csv(
        records,
        path,
        &[
            "subscriber_id",
            "content_id",
            "date",
            "group",
            "affinity",
            "multi_assigned",
        ],
    )
}

/// Reads an `attribution.csv` written by [`write_attribution_csv`].
pub fn read_attribution_csv(path: &Path) -> Result<Vec<AttributionRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize()
        .map(|r| r.map_err(AimError::from))
        .collect()
}

#[derive(Serialize)]
struct ParetoRow {
    lambda: f64,
    multi_rate: f64,
    mean_affinity: f64,
}

/// Writes `pareto.csv`.
pub fn write_pareto_csv(points: &[ParetoPoint], path: &Path) -> Result<()> {
    let rows: Vec<ParetoRow> = points
        .iter()
        .map(|p| ParetoRow {
            lambda: p.lambda,
            multi_rate: p.multi_rate,
            mean_affinity: p.mean_affinity,
        })
        .collect();
    write_csv(&rows, path, &["lambda", "multi_rate", "mean_affinity"])
}
