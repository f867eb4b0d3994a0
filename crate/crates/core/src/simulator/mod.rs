//! Synthetic subscription logs with known ground truth.
//!
//! Scenarios generate daily signups (seasonal level, shocks, Poisson noise),
//! scheduled incremental subscribers who always consume the content they
//! joined for, and baseline consumption drawn from a configured logistic
//! model. Everything is drawn from one seeded ChaCha stream, so a config and
//! seed fully determine the output.

mod attribution;
mod config;
mod events;

pub use attribution::{simulate_attribution, AttributionSimulation, AttributionTruth, TruePair};
pub use config::{
    AttributionScenario, ExperimentDesign, ExternalShock, GlmParams, GroupShare, LaunchScenario,
    LogNormalParams, PromotionParams, ScenarioConfig, SignupNoise,
};
pub use events::{
    simulate, DayTotals, GroundTruth, IncrementalCell, PairProbability, Simulation,
    GROUND_TRUTH_FILE,
};
