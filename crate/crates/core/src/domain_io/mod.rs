//! Event-log types, CSV/JSON ingestion, cohort construction and the binary
//! consumption label.

mod cohort;
mod dataset;
mod io;
mod types;

pub(crate) use cohort::labeled_row;
pub use cohort::{build_cohorts, consumption_label, control_rows, labeled_rows};
pub use dataset::Dataset;
pub use io::{
    load_dataset, load_dataset_dir, read_launches, write_dataset, write_launches, CONSUMPTION_FILE,
    LAUNCHES_FILE, PROMOTION_FILE, SIGNUPS_FILE,
};
pub(crate) use io::{read_json, write_json};
pub use types::{
    CohortKind, CohortSlice, ConsumptionRecord, ContentLaunch, LabeledRow, PromotionRecord,
    SignupRecord,
};
