//! Panels, region metadata, configuration and validation.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::copula::CopulaFamily;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMeta {
    pub region_id: String,
    pub name: String,
    /// Degrees, [-90, 90].
    pub latitude: f64,
    /// Degrees, [-180, 180].
    pub longitude: f64,
}

impl RegionMeta {
    pub fn new(id: impl Into<String>, name: impl Into<String>, latitude: f64, longitude: f64) -> Self {
        Self {
            region_id: id.into(),
            name: name.into(),
            latitude,
            longitude,
        }
    }
}

/// Annual yields, one row per region and one column per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldPanel {
    pub regions: Vec<RegionMeta>,
    pub years: Vec<i32>,
    pub values: Matrix,
}

impl YieldPanel {
    pub fn new(regions: Vec<RegionMeta>, years: Vec<i32>, values: Matrix) -> Result<Self> {
        if values.rows() != regions.len() {
            return Err(Error::Shape {
                axis: "region",
                expected: regions.len(),
                found: values.rows(),
            });
        }
        if values.cols() != years.len() {
            return Err(Error::Shape {
                axis: "year",
                expected: years.len(),
                found: values.cols(),
            });
        }
        Ok(Self {
            regions,
            years,
            values,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn series(&self, d: usize) -> &[f64] {
        self.values.row(d)
    }

    /// Restricts to a subset of regions, in the given order.
    pub fn select_regions(&self, which: &[usize]) -> YieldPanel {
        YieldPanel {
            regions: which.iter().map(|&d| self.regions[d].clone()).collect(),
            years: self.years.clone(),
            values: Matrix::from_rows(&which.iter().map(|&d| self.series(d).to_vec()).collect::<Vec<_>>()),
        }
    }

    /// Splits into the first `train` years and the rest.
    pub fn split_at_year_count(&self, train: usize) -> (YieldPanel, YieldPanel) {
        let rows = |range: std::ops::Range<usize>| {
            Matrix::from_rows(
                &(0..self.n_regions())
                    .map(|d| self.series(d)[range.clone()].to_vec())
                    .collect::<Vec<_>>(),
            )
        };
        let t = self.n_years();
        (
            YieldPanel {
                regions: self.regions.clone(),
                years: self.years[..train].to_vec(),
                values: rows(0..train),
            },
            YieldPanel {
                regions: self.regions.clone(),
                years: self.years[train..].to_vec(),
                values: rows(train..t),
            },
        )
    }
}

/// Extreme-climate covariates `Z[d, m, t]` and their cross-region maxima `X[m, t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariatePanel {
    pub index_names: Vec<String>,
    /// One `M x T` matrix per region.
    pub values: Vec<Matrix>,
    pub cross_max: Matrix,
}

impl CovariatePanel {
    pub fn new(index_names: Vec<String>, values: Vec<Matrix>) -> Result<Self> {
        if let Some(first) = values.first() {
            if first.rows() != index_names.len() {
                return Err(Error::Shape {
                    axis: "index",
                    expected: index_names.len(),
                    found: first.rows(),
                });
            }
        }
        let cross_max = build_cross_max(&values)?;
        Ok(Self {
            index_names,
            values,
            cross_max,
        })
    }

    /// A panel with no covariates over `regions` regions and `years` years.
    pub fn empty(regions: usize, years: usize) -> Self {
        Self {
            index_names: vec![],
            values: vec![Matrix::zeros(0, years); regions],
            cross_max: Matrix::zeros(0, years),
        }
    }

    pub fn n_regions(&self) -> usize {
        self.values.len()
    }

    pub fn n_indices(&self) -> usize {
        self.index_names.len()
    }

    pub fn n_years(&self) -> usize {
        self.cross_max.cols()
    }

    #[inline]
    pub fn value(&self, d: usize, m: usize, t: usize) -> f64 {
        self.values[d][(m, t)]
    }

    pub fn select_regions(&self, which: &[usize]) -> Result<CovariatePanel> {
        CovariatePanel::new(
            self.index_names.clone(),
            which.iter().map(|&d| self.values[d].clone()).collect(),
        )
    }

    pub fn split_at_year_count(&self, train: usize) -> Result<(CovariatePanel, CovariatePanel)> {
        let t = self.n_years();
        let cut = |range: std::ops::Range<usize>| -> Vec<Matrix> {
            self.values
                .iter()
                .map(|z| Matrix::from_fn(z.rows(), range.len(), |m, j| z[(m, range.start + j)]))
                .collect()
        };
        Ok((
            CovariatePanel::new(self.index_names.clone(), cut(0..train))?,
            CovariatePanel::new(self.index_names.clone(), cut(train..t))?,
        ))
    }
}

/// `X[m, t] = max_d Z[d, m, t]`.
pub fn build_cross_max(covariates: &[Matrix]) -> Result<Matrix> {
    let first = covariates.first().ok_or(Error::Shape {
        axis: "region",
        expected: 1,
        found: 0,
    })?;
    let (m, t) = (first.rows(), first.cols());
    let mut out = first.clone();
    for z in &covariates[1..] {
        if z.rows() != m {
            return Err(Error::Shape {
                axis: "index",
                expected: m,
                found: z.rows(),
            });
        }
        if z.cols() != t {
            return Err(Error::Shape {
                axis: "year",
                expected: t,
                found: z.cols(),
            });
        }
        for i in 0..m {
            for j in 0..t {
                if z[(i, j)] > out[(i, j)] {
                    out[(i, j)] = z[(i, j)];
                }
            }
        }
    }
    Ok(out)
}

/// One problem found by [`validate_panels`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    Shape {
        what: String,
        expected: usize,
        found: usize,
    },
    TooFewYears {
        found: usize,
    },
    NonConsecutiveYears {
        position: usize,
        previous: i32,
        year: i32,
    },
    NonFiniteYield {
        region: String,
        year: i32,
    },
    NonFiniteCovariate {
        region: String,
        index: String,
        year: i32,
    },
    LatitudeOutOfRange {
        region: String,
        value: f64,
    },
    LongitudeOutOfRange {
        region: String,
        value: f64,
    },
    DuplicateRegion {
        region: String,
    },
    CrossMaxMismatch {
        index: String,
        year: i32,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected}, found {found}"),
            Violation::TooFewYears { found } => write!(f, "need at least 5 years, found {found}"),
            Violation::NonConsecutiveYears {
                position,
                previous,
                year,
            } => write!(f, "year {year} at position {position} does not follow {previous}"),
            Violation::NonFiniteYield { region, year } => {
                write!(f, "non-finite yield for region {region} in {year}")
            }
            Violation::NonFiniteCovariate {
                region,
                index,
                year,
            } => write!(f, "non-finite covariate {index} for region {region} in {year}"),
            Violation::LatitudeOutOfRange { region, value } => {
                write!(f, "latitude {value} of region {region} outside [-90, 90]")
            }
            Violation::LongitudeOutOfRange { region, value } => {
                write!(f, "longitude {value} of region {region} outside [-180, 180]")
            }
            Violation::DuplicateRegion { region } => write!(f, "duplicate region id {region}"),
            Violation::CrossMaxMismatch { index, year } => {
                write!(f, "cross-region maximum of {index} in {year} is inconsistent")
            }
        }
    }
}

pub const MIN_YEARS: usize = 5;

/// Collects every violation in the panels rather than stopping at the first.
pub fn validate_panels(yields: &YieldPanel, covariates: Option<&CovariatePanel>) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = yields.n_regions();
    let t = yields.n_years();
    if yields.values.rows() != d {
        out.push(Violation::Shape {
            what: "yield rows vs regions".into(),
            expected: d,
            found: yields.values.rows(),
        });
    }
    if yields.values.cols() != t {
        out.push(Violation::Shape {
            what: "yield columns vs years".into(),
            expected: t,
            found: yields.values.cols(),
        });
    }
    if t < MIN_YEARS {
        out.push(Violation::TooFewYears { found: t });
    }
    for (i, w) in yields.years.windows(2).enumerate() {
        if w[1] != w[0] + 1 {
            out.push(Violation::NonConsecutiveYears {
                position: i + 1,
                previous: w[0],
                year: w[1],
            });
        }
    }
    let mut seen = std::collections::HashSet::new();
    for r in &yields.regions {
        if !seen.insert(r.region_id.as_str()) {
            out.push(Violation::DuplicateRegion {
                region: r.region_id.clone(),
            });
        }
        if !(-90.0..=90.0).contains(&r.latitude) {
            out.push(Violation::LatitudeOutOfRange {
                region: r.region_id.clone(),
                value: r.latitude,
            });
        }
        if !(-180.0..=180.0).contains(&r.longitude) {
            out.push(Violation::LongitudeOutOfRange {
                region: r.region_id.clone(),
                value: r.longitude,
            });
        }
    }
    if yields.values.rows() == d && yields.values.cols() == t {
        for (di, r) in yields.regions.iter().enumerate() {
            for (ti, &year) in yields.years.iter().enumerate() {
                if !yields.values[(di, ti)].is_finite() {
                    out.push(Violation::NonFiniteYield {
                        region: r.region_id.clone(),
                        year,
                    });
                }
            }
        }
    }

    let Some(cov) = covariates else {
        return out;
    };
    if cov.n_regions() != d {
        out.push(Violation::Shape {
            what: "covariate regions vs yield regions".into(),
            expected: d,
            found: cov.n_regions(),
        });
    }
    let m = cov.n_indices();
    let mut shapes_ok = true;
    for (di, z) in cov.values.iter().enumerate() {
        if z.rows() != m || z.cols() != t {
            shapes_ok = false;
            out.push(Violation::Shape {
                what: format!("covariate block of region {}", region_label(yields, di)),
                expected: m * t,
                found: z.rows() * z.cols(),
            });
            continue;
        }
        for mi in 0..m {
            for ti in 0..t {
                if !z[(mi, ti)].is_finite() {
                    out.push(Violation::NonFiniteCovariate {
                        region: region_label(yields, di),
                        index: cov.index_names[mi].clone(),
                        year: yields.years[ti],
                    });
                }
            }
        }
    }
    if shapes_ok && cov.cross_max.rows() == m && cov.cross_max.cols() == t {
        for mi in 0..m {
            for ti in 0..t {
                let mx = cov
                    .values
                    .iter()
                    .map(|z| z[(mi, ti)])
                    .fold(f64::NEG_INFINITY, f64::max);
                if mx.is_finite() && mx != cov.cross_max[(mi, ti)] {
                    out.push(Violation::CrossMaxMismatch {
                        index: cov.index_names[mi].clone(),
                        year: yields.years[ti],
                    });
                }
            }
        }
    } else if shapes_ok {
        out.push(Violation::Shape {
            what: "cross-region maximum".into(),
            expected: m * t,
            found: cov.cross_max.rows() * cov.cross_max.cols(),
        });
    }
    out
}

fn region_label(yields: &YieldPanel, d: usize) -> String {
    yields
        .regions
        .get(d)
        .map_or_else(|| format!("#{d}"), |r| r.region_id.clone())
}

/// Inverse-gamma (shape, rate) prior for one variance parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for InvGammaPrior {
    fn default() -> Self {
        Self {
            shape: 0.01,
            rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VariancePriors {
    pub observation: InvGammaPrior,
    pub level: InvGammaPrior,
    pub slope: InvGammaPrior,
    pub seasonal: InvGammaPrior,
    pub autoregressive: InvGammaPrior,
    pub regression: InvGammaPrior,
}

impl VariancePriors {
    pub fn uniform(prior: InvGammaPrior) -> Self {
        Self {
            observation: prior,
            level: prior,
            slope: prior,
            seasonal: prior,
            autoregressive: prior,
            regression: prior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BstsConfig {
    pub ar_order: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub priors: VariancePriors,
    /// 1 disables the seasonal block.
    pub seasonal_period: usize,
    pub seed: u64,
}

impl Default for BstsConfig {
    fn default() -> Self {
        Self {
            ar_order: 1,
            n_iter: 10_000,
            burn_in: 2_000,
            priors: VariancePriors::default(),
            seasonal_period: 1,
            seed: 0,
        }
    }
}

impl BstsConfig {
    pub fn check(&self) -> Result<()> {
        if self.ar_order < 1 {
            return Err(Error::precondition("AR order must be at least 1"));
        }
        if self.seasonal_period < 1 {
            return Err(Error::precondition("seasonal period must be at least 1"));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::precondition(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.n_iter
            )));
        }
        let p = &self.priors;
        for g in [p.observation, p.level, p.slope, p.seasonal, p.autoregressive, p.regression] {
            if !(g.shape > 0.0 && g.rate > 0.0) {
                return Err(Error::precondition("inverse-gamma hyperparameters must be positive"));
            }
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.n_iter - self.burn_in
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub max_evals: usize,
    pub tolerance: f64,
    /// Extra jittered restarts after the first run.
    pub restarts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            tolerance: 1e-8,
            restarts: 3,
        }
    }
}

/// How the covariates driving the copula parameter are modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GevTarget {
    /// Fit every (region, index) series; `X` follows from the max identity.
    #[default]
    PerRegion,
    /// Additionally fit a dynamic GEV to each cross-region maximum series directly.
    CrossMax,
}

/// Scale of the pseudo-observations handed to the copula stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoObsScale {
    /// Draw-averaged normal CDF values, re-ranked to `rank / (T + 1)` so each margin is uniform.
    #[default]
    Ranked,
    /// Draw-averaged normal CDF values as they are.
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSettings {
    pub beta_grid: Vec<f64>,
    pub k_candidates: Vec<usize>,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        Self {
            beta_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            k_candidates: vec![2],
        }
    }
}

/// Everything needed to fit the pipeline and forecast from it.
#[derive(Debug, Clone)]
pub struct FitScenario {
    pub yields: YieldPanel,
    pub covariates: CovariatePanel,
    pub bsts: BstsConfig,
    pub family: CopulaFamily,
    pub optimizer: OptimizerSettings,
    pub clustering: ClusterSettings,
    /// Indices of the regions to model jointly; clustering chooses them when absent.
    pub medoids: Option<Vec<usize>>,
    pub gev_target: GevTarget,
    pub pseudo_obs: PseudoObsScale,
    pub horizon: usize,
    pub n_paths: usize,
}

impl FitScenario {
    pub fn new(yields: YieldPanel, covariates: CovariatePanel, family: CopulaFamily) -> Self {
        Self {
            yields,
            covariates,
            bsts: BstsConfig::default(),
            family,
            optimizer: OptimizerSettings::default(),
            clustering: ClusterSettings::default(),
            medoids: None,
            gev_target: GevTarget::default(),
            pseudo_obs: PseudoObsScale::default(),
            horizon: 1,
            n_paths: 1000,
        }
    }

    /// Validates panels and configuration together.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = validate_panels(&self.yields, Some(&self.covariates));
        if let Err(e) = self.bsts.check() {
            v.push(Violation::Shape {
                what: e.to_string(),
                expected: 0,
                found: 0,
            });
        }
        if let Some(meds) = &self.medoids {
            for &m in meds {
                if m >= self.yields.n_regions() {
                    v.push(Violation::Shape {
                        what: "medoid index".into(),
                        expected: self.yields.n_regions(),
                        found: m,
                    });
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }
}
