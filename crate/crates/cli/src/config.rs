use std::path::{Path, PathBuf};

use aim_core::baseline_model::{Hyperparams, ModelKind};
use aim_core::domain_io::{CONSUMPTION_FILE, LAUNCHES_FILE, PROMOTION_FILE, SIGNUPS_FILE};
use aim_core::{AimError, Result};
use serde::{Deserialize, Serialize};

use crate::cli::Args;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Greedy,
    #[default]
    Exact,
}

/// Arms of a randomized campaign, for the experiment consistency check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub control_group: String,
    pub treatment_group: String,
    pub treatment_size: u64,
    /// Lift per exposed person; read from `ground_truth.json` when absent.
    #[serde(default)]
    pub lift: Option<f64>,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0, 0.1, 0.5, 1.0, 2.0, 5.0]
}

/// Everything a run needs. Loaded from `--config`, then overridden by flags.
/// Relative paths in a config file are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding the CSV logs and `launches.json`.
    pub data_dir: Option<PathBuf>,
    pub signups: Option<PathBuf>,
    pub consumption: Option<PathBuf>,
    pub promotion: Option<PathBuf>,
    pub launches: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub model: ModelKind,
    pub hyperparams: Hyperparams,
    /// A saved model to use instead of fitting one.
    pub model_file: Option<PathBuf>,
    pub solver: Solver,
    pub lambda: f64,
    pub lambdas: Vec<f64>,
    pub decay_gamma: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub experiment: Option<ExperimentSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            signups: None,
            consumption: None,
            promotion: None,
            launches: None,
            scenario: None,
            model: ModelKind::Glm,
            hyperparams: Hyperparams::default(),
            model_file: None,
            solver: Solver::Exact,
            lambda: 0.0,
            lambdas: default_lambdas(),
            decay_gamma: None,
            seed: None,
            out_dir: None,
            experiment: None,
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AimError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| AimError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data_dir,
            &mut cfg.signups,
            &mut cfg.consumption,
            &mut cfg.promotion,
            &mut cfg.launches,
            &mut cfg.scenario,
            &mut cfg.model_file,
            &mut cfg.out_dir,
        ] {
            rebase(base, p);
        }
        Ok(cfg)
    }

    /// Reads `--config` if given and applies the command-line overrides.
    pub fn resolve(args: &Args) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    cfg.$field = v;
                }
            };
        }
        set!(data_dir, args.data.clone().map(Some));
        set!(launches, args.launches.clone().map(Some));
        set!(scenario, args.scenario.clone().map(Some));
        set!(model_file, args.model_file.clone().map(Some));
        set!(out_dir, args.out.clone().map(Some));
        set!(seed, args.seed.map(Some));
        set!(model, args.model);
        set!(solver, args.solver);
        set!(lambda, args.lambda);
        set!(lambdas, args.lambdas.clone());
        set!(decay_gamma, args.decay_gamma.map(Some));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(AimError::Config(format!(
                "lambda {} must be finite and >= 0",
                self.lambda
            )));
        }
        if let Some(g) = self.decay_gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(AimError::Config(format!("decay gamma {g} outside (0, 1]")));
            }
        }
        Ok(())
    }

    fn data_file(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        match &self.data_dir {
            Some(d) => Ok(d.join(name)),
            None => Err(AimError::Config(format!(
                "no data directory given (use --data) and no explicit path for {name}"
            ))),
        }
    }

    pub fn signups_path(&self) -> Result<PathBuf> {
        self.data_file(&self.signups, SIGNUPS_FILE)
    }

    pub fn consumption_path(&self) -> Result<PathBuf> {
        self.data_file(&self.consumption, CONSUMPTION_FILE)
    }

    /// `None` when the promotion log does not exist.
    pub fn promotion_path(&self) -> Result<Option<PathBuf>> {
        let p = self.data_file(&self.promotion, PROMOTION_FILE)?;
        if p.exists() {
            Ok(Some(p))
        } else {
            log::warn!(
                "{} not found; promotion intensity defaults to 0",
                p.display()
            );
            Ok(None)
        }
    }

    pub fn launches_path(&self) -> Result<PathBuf> {
        self.data_file(&self.launches, LAUNCHES_FILE)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = self
            .out_dir
            .clone()
            .ok_or_else(|| AimError::Config("no output directory given (use --out)".into()))?;
        std::fs::create_dir_all(&dir).map_err(|e| AimError::Io {
            path: dir.clone(),
            source: e,
        })?;
        Ok(dir)
    }
}
