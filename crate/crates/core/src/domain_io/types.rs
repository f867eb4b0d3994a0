use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{AimError, Result};

/// One row of `signups.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignupRecord {
    pub subscriber_id: String,
    pub signup_date: NaiveDate,
    /// Free-form grouping key (e.g. region). Estimation runs per group.
    pub group: Option<String>,
    /// Distinct content units consumed in the subscriber's labeling window,
    /// not counting the launch content under analysis.
    pub activity: f64,
}

/// One row of `consumption.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionRecord {
    pub subscriber_id: String,
    pub content_id: String,
    pub event_date: NaiveDate,
    pub completion_fraction: f64,
}

/// One row of `promotion.csv`: how strongly `content_id` was promoted to the
/// subscriber on the first day the content was available to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionRecord {
    pub subscriber_id: String,
    pub content_id: String,
    pub promo_intensity: f64,
}

pub const DEFAULT_PRE_WINDOW_DAYS: u32 = 28;
pub const DEFAULT_PRE_GAP_DAYS: u32 = 3;
pub const DEFAULT_POST_WINDOW_DAYS: u32 = 28;
pub const DEFAULT_COMPLETION_THRESHOLD: f64 = 0.7;
pub const DEFAULT_LABEL_WINDOW_DAYS: u32 = 7;

/// A content launch and the windows used to analyse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentLaunch {
    pub content_id: String,
    pub launch_date: NaiveDate,
    /// Length of the pre-launch control window (T0).
    #[serde(default = "default_pre_window")]
    pub pre_window_days: u32,
    /// Days immediately before launch excluded from the control window.
    #[serde(default = "default_pre_gap")]
    pub pre_gap_days: u32,
    #[serde(default = "default_post_window")]
    pub post_window_days: u32,
    #[serde(default = "default_threshold")]
    pub completion_threshold: f64,
    #[serde(default = "default_label_window")]
    pub label_window_days: u32,
}

fn default_pre_window() -> u32 {
    DEFAULT_PRE_WINDOW_DAYS
}
fn default_pre_gap() -> u32 {
    DEFAULT_PRE_GAP_DAYS
}
fn default_post_window() -> u32 {
    DEFAULT_POST_WINDOW_DAYS
}
fn default_threshold() -> f64 {
    DEFAULT_COMPLETION_THRESHOLD
}
fn default_label_window() -> u32 {
    DEFAULT_LABEL_WINDOW_DAYS
}

impl ContentLaunch {
    /// A launch with default analysis windows.
    pub fn new(content_id: impl Into<String>, launch_date: NaiveDate) -> Self {
        Self {
            content_id: content_id.into(),
            launch_date,
            pre_window_days: DEFAULT_PRE_WINDOW_DAYS,
            pre_gap_days: DEFAULT_PRE_GAP_DAYS,
            post_window_days: DEFAULT_POST_WINDOW_DAYS,
            completion_threshold: DEFAULT_COMPLETION_THRESHOLD,
            label_window_days: DEFAULT_LABEL_WINDOW_DAYS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.content_id.is_empty() {
            return Err(AimError::Config("launch content_id is empty".into()));
        }
        if self.pre_window_days < 1 {
            return Err(AimError::Config(format!(
                "launch `{}`: pre_window_days must be >= 1",
                self.content_id
            )));
        }
        if self.post_window_days < 1 || self.label_window_days < 1 {
            return Err(AimError::Config(format!(
                "launch `{}`: post_window_days and label_window_days must be >= 1",
                self.content_id
            )));
        }
        if !(self.completion_threshold > 0.0 && self.completion_threshold <= 1.0) {
            return Err(AimError::Config(format!(
                "launch `{}`: completion_threshold {} outside (0, 1]",
                self.content_id, self.completion_threshold
            )));
        }
        Ok(())
    }

    /// First signup date of the control window (inclusive).
    pub fn pre_start(&self) -> NaiveDate {
        self.launch_date - chrono::Days::new(u64::from(self.pre_gap_days + self.pre_window_days))
    }

    /// End of the control window (exclusive): the first gap day.
    pub fn pre_end(&self) -> NaiveDate {
        self.launch_date - chrono::Days::new(u64::from(self.pre_gap_days))
    }

    /// Last post-launch signup date analysed (inclusive).
    pub fn post_end(&self) -> NaiveDate {
        self.launch_date + chrono::Days::new(u64::from(self.post_window_days))
    }

    /// First day the content could be consumed by someone who signed up on `signup_date`.
    pub fn availability_date(&self, signup_date: NaiveDate) -> NaiveDate {
        signup_date.max(self.launch_date)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortKind {
    PreLaunch,
    PostLaunch,
}

/// Subscribers of one signup date relative to one launch.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSlice {
    pub content_id: String,
    pub signup_date: NaiveDate,
    pub members: Vec<String>,
    pub kind: CohortKind,
}

/// A (subscriber, launch) outcome with the covariates the baseline model uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub subscriber_id: String,
    pub content_id: String,
    pub consumed: bool,
    /// Subscription age on the day the content became available.
    pub age_days: u32,
    pub activity: f64,
    pub promo_intensity: f64,
    pub kind: CohortKind,
}
