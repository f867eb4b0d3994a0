use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::dataset::{check_consumption, check_promotion, check_signup, Dataset};
use super::types::{ConsumptionRecord, ContentLaunch, PromotionRecord, SignupRecord};
use crate::error::{AimError, Result};

pub const SIGNUPS_FILE: &str = "signups.csv";
pub const CONSUMPTION_FILE: &str = "consumption.csv";
pub const PROMOTION_FILE: &str = "promotion.csv";
pub const LAUNCHES_FILE: &str = "launches.json";

const SIGNUP_COLUMNS: &[&str] = &["subscriber_id", "signup_date", "group", "activity"];
const CONSUMPTION_COLUMNS: &[&str] = &[
    "subscriber_id",
    "content_id",
    "event_date",
    "completion_fraction",
];
const PROMOTION_COLUMNS: &[&str] = &["subscriber_id", "content_id", "promo_intensity"];

fn read_csv<T, F>(path: &Path, columns: &[&str], mut check: F) -> Result<Vec<T>>
where
    T: DeserializeOwned,
    F: FnMut(&T, u64) -> Result<()>,
{
    let file_name = path.display().to_string();
    let file = File::open(path).map_err(|e| AimError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != columns {
        return Err(AimError::Parse {
            file: file_name,
            line: 1,
            message: format!("expected header `{}`", columns.join(",")),
        });
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| AimError::Parse {
            file: file_name.clone(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: T = record
            .deserialize(Some(&headers))
            .map_err(|e| AimError::Parse {
                file: file_name.clone(),
                line,
                message: e.to_string(),
            })?;
        check(&row, line)?;
        out.push(row);
    }
    Ok(out)
}

fn bound_error(path: &Path, line: u64, message: String) -> AimError {
    AimError::Parse {
        file: path.display().to_string(),
        line,
        message,
    }
}

/// Loads the three event logs. A missing promotion file means no promotion.
pub fn load_dataset(
    signup_path: &Path,
    consumption_path: &Path,
    promotion_path: Option<&Path>,
) -> Result<Dataset> {
    let mut seen = HashSet::new();
    let signups: Vec<SignupRecord> =
        read_csv(signup_path, SIGNUP_COLUMNS, |r: &SignupRecord, line| {
            check_signup(r).map_err(|m| bound_error(signup_path, line, m))?;
            if !seen.insert(r.subscriber_id.clone()) {
                return Err(AimError::DuplicateSubscriber(r.subscriber_id.clone()));
            }
            Ok(())
        })?;

    let known = |id: &str, path: &Path, line: u64| -> Result<()> {
        if seen.contains(id) {
            Ok(())
        } else {
            Err(AimError::UnknownSubscriber {
                file: path.display().to_string(),
                line,
                subscriber_id: id.to_string(),
            })
        }
    };

    let consumption: Vec<ConsumptionRecord> = read_csv(
        consumption_path,
        CONSUMPTION_COLUMNS,
        |r: &ConsumptionRecord, line| {
            check_consumption(r).map_err(|m| bound_error(consumption_path, line, m))?;
            known(&r.subscriber_id, consumption_path, line)
        },
    )?;

    let promotions: Vec<PromotionRecord> = match promotion_path {
        Some(p) => read_csv(p, PROMOTION_COLUMNS, |r: &PromotionRecord, line| {
            check_promotion(r).map_err(|m| bound_error(p, line, m))?;
            known(&r.subscriber_id, p, line)
        })?,
        None => Vec::new(),
    };

    Dataset::new(signups, consumption, promotions)
}

/// Loads `signups.csv`, `consumption.csv` and (if present) `promotion.csv` from a directory.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    let promo = dir.join(PROMOTION_FILE);
    if !promo.exists() {
        log::warn!(
            "{} not found; promotion intensity defaults to 0",
            promo.display()
        );
    }
    load_dataset(
        &dir.join(SIGNUPS_FILE),
        &dir.join(CONSUMPTION_FILE),
        promo.exists().then_some(promo.as_path()),
    )
}

fn write_csv<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| AimError::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    wtr.write_record(columns)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| AimError::io(path, e))?;
    Ok(())
}

/// Writes the dataset as the three CSV files into `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AimError::io(dir, e))?;
    write_csv(&dir.join(SIGNUPS_FILE), SIGNUP_COLUMNS, dataset.signups())?;
    write_csv(
        &dir.join(CONSUMPTION_FILE),
        CONSUMPTION_COLUMNS,
        dataset.consumption(),
    )?;
    write_csv(
        &dir.join(PROMOTION_FILE),
        PROMOTION_COLUMNS,
        dataset.promotions(),
    )?;
    Ok(())
}

pub fn read_launches(path: &Path) -> Result<Vec<ContentLaunch>> {
    let file = File::open(path).map_err(|e| AimError::io(path, e))?;
    let launches: Vec<ContentLaunch> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| AimError::json(path, e))?;
    for l in &launches {
        l.validate()?;
    }
    Ok(launches)
}

pub fn write_launches(launches: &[ContentLaunch], path: &Path) -> Result<()> {
    write_json(launches, path)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AimError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| AimError::json(path, e))?;
    w.write_all(b"\n").map_err(|e| AimError::io(path, e))?;
    w.flush().map_err(|e| AimError::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| AimError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| AimError::json(path, e))
}
