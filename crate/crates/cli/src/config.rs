//! JSON run configuration.
//!
//! Relative paths are resolved against the directory holding the config file. The seed
//! and output directory can be overridden by `CROPCAST_SEED` and `CROPCAST_OUT` or by
//! the matching flags; flags win.
//!
//! ```json
//! {
//!   "yields": "yields.csv",
//!   "covariates": "covariates.csv",
//!   "regions": "regions.csv",
//!   "family": "gumbel",
//!   "families": ["gaussian", "clayton", "frank", "gumbel", "joe"],
//!   "bsts": { "n_iter": 10000, "burn_in": 2000, "ar_order": 1, "seasonal_period": 1 },
//!   "clustering": { "beta_grid": [0.0, 0.5, 1.0], "k_candidates": [2] },
//!   "horizon": 5,
//!   "n_paths": 1000,
//!   "holdout": 5,
//!   "seed": 42,
//!   "out": "out"
//! }
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use cropcast::copula::{CopulaEvolution, CopulaFamily};
use cropcast::data::{BstsConfig, ClusterSettings, GevTarget, OptimizerSettings, PseudoObsScale};
use cropcast::forecast::SyntheticSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub yields: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub family: String,
    /// Families for `compare`; all parametric families when empty.
    pub families: Vec<String>,
    /// The seed inside this block is replaced by the run seed.
    pub bsts: BstsConfig,
    pub optimizer: OptimizerSettings,
    pub clustering: ClusterSettings,
    /// Region ids to model jointly; clustering picks them when absent.
    pub medoids: Option<Vec<String>>,
    pub gev_target: GevTarget,
    pub pseudo_obs: PseudoObsScale,
    pub horizon: usize,
    pub n_paths: usize,
    /// Trailing years held out by `evaluate` and `compare`; defaults to the horizon.
    pub holdout: Option<usize>,
    /// Quantile level of the empirical tail-dependence screen of the covariates.
    pub screen_threshold: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Pipeline artifact read by `forecast`; defaults to `pipeline.json` in `out`.
    pub pipeline: Option<PathBuf>,
    pub simulate: SimulateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            yields: None,
            covariates: None,
            regions: None,
            family: "gumbel".into(),
            families: vec![],
            bsts: BstsConfig::default(),
            optimizer: OptimizerSettings::default(),
            clustering: ClusterSettings::default(),
            medoids: None,
            gev_target: GevTarget::default(),
            pseudo_obs: PseudoObsScale::default(),
            horizon: 5,
            n_paths: 1000,
            holdout: None,
            screen_threshold: 0.9,
            seed: 0,
            out: PathBuf::from("out"),
            pipeline: None,
            simulate: SimulateConfig::default(),
        }
    }
}

/// What `simulate` generates: the two-region default scenario driven by `copula`, or a
/// full `spec` when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_years: usize,
    pub copula: CopulaEvolution,
    pub spec: Option<SyntheticSpec>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_years: 60,
            copula: CopulaEvolution {
                family: CopulaFamily::Gumbel,
                omega: -0.3,
                alpha: 0.2,
                gamma: vec![0.1],
                theta_init: 2.0,
            },
            spec: None,
        }
    }
}

impl SimulateConfig {
    pub fn spec(&self) -> SyntheticSpec {
        self.spec
            .clone()
            .unwrap_or_else(|| SyntheticSpec::two_region(self.copula.clone(), self.n_years))
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub family: Option<String>,
    pub horizon: Option<usize>,
    pub paths: Option<usize>,
}

impl RunConfig {
    /// Reads the config file (defaults when `path` is `None`) and applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                let mut cfg: RunConfig =
                    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new(""));
                cfg.resolve_paths(base);
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        if let Some(f) = &overrides.family {
            if f.contains(',') {
                cfg.families = f.split(',').map(|s| s.trim().to_string()).collect();
            } else {
                cfg.family = f.clone();
            }
        }
        if let Some(h) = overrides.horizon {
            cfg.horizon = h;
        }
        if let Some(n) = overrides.paths {
            cfg.n_paths = n;
        }
        cfg.bsts.seed = cfg.seed;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.yields, &mut self.covariates, &mut self.regions, &mut self.pipeline]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.out.is_relative() {
            self.out = base.join(&self.out);
        }
    }

    pub fn family(&self) -> CliResult<CopulaFamily> {
        parse_family(&self.family)
    }

    /// The comparison list; at least two distinct families.
    pub fn families(&self) -> CliResult<Vec<CopulaFamily>> {
        let list = if self.families.is_empty() {
            CopulaFamily::PARAMETRIC.to_vec()
        } else {
            self.families.iter().map(|f| parse_family(f)).collect::<CliResult<Vec<_>>>()?
        };
        let mut distinct = list.clone();
        distinct.sort_by_key(|f| f.name());
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(CliError::config("comparison needs at least two distinct families"));
        }
        Ok(list)
    }

    pub fn holdout(&self) -> usize {
        self.holdout.unwrap_or(self.horizon)
    }

    pub fn pipeline_path(&self) -> PathBuf {
        self.pipeline.clone().unwrap_or_else(|| self.out.join("pipeline.json"))
    }

    pub fn require(&self, what: &str, p: &Option<PathBuf>) -> CliResult<PathBuf> {
        p.clone().ok_or_else(|| CliError::config(format!("no {what} file configured")))
    }
}

pub fn parse_family(name: &str) -> CliResult<CopulaFamily> {
    CopulaFamily::from_str(name).map_err(|e| CliError::config(e.to_string()))
}
