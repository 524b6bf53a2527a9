//! End-to-end fitting and Monte Carlo forecasting.

mod paths;
mod synthetic;

pub use paths::*;
pub use synthetic::*;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsts::{extract_pseudo_observations, fit_bsts, BstsPosterior, StateLayout, Variances};
use crate::clustering::{
    copula_dissimilarity, fit_all_pairs, select_beta_and_k, spatial_dissimilarity, DissimilarityMatrix,
};
use crate::copula::{fit_copula_evolution, CopulaFamily, CopulaFit};
use crate::data::{BstsConfig, CovariatePanel, FitScenario, GevTarget, OptimizerSettings, PseudoObsScale};
use crate::error::{Error, Result};
use crate::gev::GevDynamicFit;
use crate::matrix::Matrix;
use crate::stats::pseudo_ranks;

/// Format version of [`FittedPipeline`] artifacts.
pub const PIPELINE_VERSION: u32 = 1;

/// Parameters and final state of one posterior draw, enough to simulate forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalDraw {
    pub psi: Vec<f64>,
    pub variances: Variances,
    /// State vector at the last observed year.
    pub state: Vec<f64>,
}

/// Posterior summary of one region's structural model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFit {
    pub region_id: String,
    pub layout: StateLayout,
    pub draws: Vec<TerminalDraw>,
    /// Posterior mean of the level at every observed year.
    pub level_mean: Vec<f64>,
    pub observation_variance_mean: f64,
    pub psi_mean: Vec<f64>,
}

impl MarginalFit {
    pub fn from_posterior(region_id: &str, post: &BstsPosterior) -> Result<Self> {
        if post.draws.is_empty() {
            return Err(Error::EmptyPosterior);
        }
        let t = post.n_obs - 1;
        let k = post.n_draws() as f64;
        let p = post.layout.ar_order;
        let draws = (0..post.n_draws())
            .map(|i| TerminalDraw {
                psi: post.draws[i].psi.clone(),
                variances: post.draws[i].variances,
                state: post.state(i, t).to_vec(),
            })
            .collect();
        Ok(Self {
            region_id: region_id.to_string(),
            layout: post.layout,
            draws,
            level_mean: post.mean_component_path(StateLayout::LEVEL),
            observation_variance_mean: post.draws.iter().map(|d| d.variances.observation).sum::<f64>() / k,
            psi_mean: (0..p).map(|l| post.draws.iter().map(|d| d.psi[l]).sum::<f64>() / k).collect(),
        })
    }
}

/// What happened at the copula stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopulaStage {
    Fitted,
    /// Independence family: no dependence parameters.
    Independence,
    /// A single modelled region: nothing to couple.
    Skipped,
}

/// Clustering outcome in serialisable form (infinite Dunn values become `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub beta: f64,
    pub k: usize,
    pub medoids: Vec<usize>,
    pub medoid_ids: Vec<String>,
    pub assignment: Vec<usize>,
    pub total_cost: f64,
    pub dunn: Option<f64>,
    pub dunn_infinite: bool,
    pub mean_silhouette: Option<f64>,
    pub k_rule: String,
    pub k_scores: Vec<(usize, f64)>,
    pub beta_scores: Vec<(f64, Option<f64>)>,
    pub spatial: DissimilarityMatrix,
    pub copula: DissimilarityMatrix,
    pub combined: DissimilarityMatrix,
    pub excluded_pairs: Vec<((usize, usize), String)>,
}

/// Everything fitted from one scenario; serialises to the pipeline artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub version: u32,
    pub family: CopulaFamily,
    pub seed: u64,
    pub bsts_config: BstsConfig,
    pub optimizer: OptimizerSettings,
    pub pseudo_obs: PseudoObsScale,
    /// Indices of the modelled regions in the input panel.
    pub region_indices: Vec<usize>,
    pub region_ids: Vec<String>,
    pub years: Vec<i32>,
    pub index_names: Vec<String>,
    pub marginals: Vec<MarginalFit>,
    /// Pseudo-observations of the modelled regions.
    pub pseudo_observations: Matrix,
    pub clustering: Option<ClusteringReport>,
    /// `gev[d][m]` for each modelled region.
    pub gev: Vec<Vec<GevDynamicFit>>,
    pub cross_max_gev: Option<Vec<GevDynamicFit>>,
    pub copula_stage: CopulaStage,
    pub copula: Option<CopulaFit>,
    /// In-sample dependence parameter path.
    pub theta_path: Vec<f64>,
}

impl FittedPipeline {
    pub fn last_year(&self) -> i32 {
        *self.years.last().expect("non-empty year range")
    }

    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn theta_last(&self) -> f64 {
        self.theta_path.last().copied().unwrap_or(0.0)
    }

    /// Refuses artifacts written by another format version.
    pub fn check_version(&self) -> Result<()> {
        if self.version != PIPELINE_VERSION {
            return Err(Error::precondition(format!(
                "pipeline artifact has format version {} but this build reads version {PIPELINE_VERSION}",
                self.version
            )));
        }
        Ok(())
    }
}

/// Structural-model fits, pseudo-observations and clustering, shared by every copula family.
#[derive(Debug, Clone)]
pub struct MarginalStage {
    pub region_indices: Vec<usize>,
    pub marginals: Vec<MarginalFit>,
    pub pseudo_observations: Matrix,
    pub clustering: Option<ClusteringReport>,
    pub gev: Vec<Vec<GevDynamicFit>>,
    pub cross_max_gev: Option<Vec<GevDynamicFit>>,
    /// Cross-region maxima over the modelled regions.
    pub x_panel: Matrix,
}

fn fit_regions(scenario: &FitScenario, covariates: &CovariatePanel, which: &[usize]) -> Result<Vec<BstsPosterior>> {
    which
        .par_iter()
        .map(|&d| {
            let config = BstsConfig {
                seed: scenario.bsts.seed.wrapping_add(d as u64),
                ..scenario.bsts.clone()
            };
            fit_bsts(scenario.yields.series(d), &covariates.values[d], &config).map_err(|e| {
                Error::Region {
                    region: scenario.yields.regions[d].region_id.clone(),
                    source: Box::new(e),
                }
                .in_stage("bsts")
            })
        })
        .collect()
}

fn cluster_report(
    scenario: &FitScenario,
    u_all: &Matrix,
    x_panel: &Matrix,
    seed: u64,
) -> Result<ClusteringReport> {
    let d = scenario.yields.n_regions();
    let pairs = fit_all_pairs(u_all, x_panel, scenario.family, &scenario.optimizer, seed)?;
    let copula = copula_dissimilarity(&pairs, d)?;
    let spatial = spatial_dissimilarity(&scenario.yields.regions);
    let sel = select_beta_and_k(
        &spatial,
        &copula,
        &scenario.clustering.beta_grid,
        &scenario.clustering.k_candidates,
    )?;
    let r = &sel.result;
    Ok(ClusteringReport {
        beta: sel.beta,
        k: sel.k,
        medoids: r.medoids.clone(),
        medoid_ids: r.medoids.iter().map(|&m| scenario.yields.regions[m].region_id.clone()).collect(),
        assignment: r.assignment.clone(),
        total_cost: r.total_cost,
        dunn: r.dunn.filter(|v| v.is_finite()),
        dunn_infinite: r.dunn.is_some_and(|v| v.is_infinite()),
        mean_silhouette: r.mean_silhouette,
        k_rule: sel.k_rule.clone(),
        k_scores: sel.k_scores.clone(),
        beta_scores: sel.beta_scores.iter().map(|&(b, v)| (b, v.is_finite().then_some(v))).collect(),
        spatial,
        copula,
        combined: sel.combined,
        excluded_pairs: pairs.failed,
    })
}

fn checked_covariates(scenario: &FitScenario) -> Result<CovariatePanel> {
    scenario.validate().map_err(|v| {
        Error::precondition(v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "))
    })?;
    Ok(if scenario.covariates.n_regions() == 0 {
        CovariatePanel::empty(scenario.yields.n_regions(), scenario.yields.n_years())
    } else {
        scenario.covariates.clone()
    })
}

/// Structural fits and pseudo-observations (one row per entry of `which`).
fn marginal_fits(
    scenario: &FitScenario,
    all_cov: &CovariatePanel,
    which: &[usize],
) -> Result<(Vec<BstsPosterior>, Matrix)> {
    info!("fitting structural models for {} regions", which.len());
    let posteriors = fit_regions(scenario, all_cov, which)?;
    let refs: Vec<&BstsPosterior> = posteriors.iter().collect();
    let mut u = extract_pseudo_observations(&refs).map_err(|e| e.in_stage("pseudo-observations"))?;
    if scenario.pseudo_obs == PseudoObsScale::Ranked {
        for d in 0..u.rows() {
            let r = pseudo_ranks(u.row(d));
            u.row_mut(d).copy_from_slice(&r);
        }
    }
    Ok((posteriors, u))
}

/// Fits every region and clusters them, whatever the number of medoids requested.
pub fn cluster_regions(scenario: &FitScenario) -> Result<ClusteringReport> {
    let all_cov = checked_covariates(scenario)?;
    let n = scenario.yields.n_regions();
    if n < 2 {
        return Err(Error::precondition("clustering needs at least two regions"));
    }
    let all: Vec<usize> = (0..n).collect();
    let (_, u) = marginal_fits(scenario, &all_cov, &all)?;
    cluster_report(scenario, &u, &all_cov.cross_max, scenario.bsts.seed).map_err(|e| e.in_stage("clustering"))
}

/// Runs the structural-model, pseudo-observation, clustering and GEV stages.
pub fn fit_marginal_stage(scenario: &FitScenario) -> Result<MarginalStage> {
    let all_cov = checked_covariates(scenario)?;
    let n = scenario.yields.n_regions();
    let clustering_needed = scenario.medoids.is_none() && n > 2;
    let fitted: Vec<usize> = scenario.medoids.clone().unwrap_or_else(|| (0..n).collect());
    let (posteriors, u_fitted) = marginal_fits(scenario, &all_cov, &fitted)?;

    let (modelled, clustering) = if clustering_needed {
        info!("clustering {n} regions");
        let report = cluster_report(scenario, &u_fitted, &all_cov.cross_max, scenario.bsts.seed)
            .map_err(|e| e.in_stage("clustering"))?;
        (report.medoids.clone(), Some(report))
    } else {
        (fitted.clone(), None)
    };
    if modelled.len() > 2 {
        return Err(Error::precondition(format!(
            "the dependence model is bivariate but {} regions were selected",
            modelled.len()
        ))
        .in_stage("copula"));
    }
    let pos = |d: usize| fitted.iter().position(|&f| f == d).expect("modelled regions were fitted");
    let marginals = modelled
        .iter()
        .map(|&d| MarginalFit::from_posterior(&scenario.yields.regions[d].region_id, &posteriors[pos(d)]))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("bsts"))?;
    let pseudo = Matrix::from_rows(&modelled.iter().map(|&d| u_fitted.row(pos(d)).to_vec()).collect::<Vec<_>>());

    let cov = if all_cov.n_indices() == 0 {
        CovariatePanel::empty(modelled.len(), scenario.yields.n_years())
    } else {
        all_cov.select_regions(&modelled)?
    };
    let (gev, cross_max_gev) = if cov.n_indices() > 0 {
        let gev = crate::copula::fit_gev_panel(&cov, &scenario.optimizer).map_err(|e| e.in_stage("gev"))?;
        let cross = match scenario.gev_target {
            GevTarget::PerRegion => None,
            GevTarget::CrossMax => {
                let single = CovariatePanel {
                    index_names: cov.index_names.clone(),
                    values: vec![cov.cross_max.clone()],
                    cross_max: cov.cross_max.clone(),
                };
                Some(crate::copula::fit_gev_panel(&single, &scenario.optimizer).map_err(|e| e.in_stage("gev"))?.remove(0))
            }
        };
        (gev, cross)
    } else {
        (vec![vec![]; modelled.len()], None)
    };
    Ok(MarginalStage {
        region_indices: modelled,
        marginals,
        pseudo_observations: pseudo,
        clustering,
        gev,
        cross_max_gev,
        x_panel: cov.cross_max,
    })
}

/// Fits the dependence stage for one family on top of shared marginal fits.
pub fn fit_dependence(scenario: &FitScenario, stage: &MarginalStage, family: CopulaFamily) -> Result<FittedPipeline> {
    let k = stage.region_indices.len();
    let (copula_stage, copula) = if k < 2 {
        (CopulaStage::Skipped, None)
    } else {
        let fit = fit_copula_evolution(&stage.pseudo_observations, &stage.x_panel, family, &scenario.optimizer, scenario.bsts.seed)
            .map_err(|e| e.in_stage("copula"))?;
        let kind = if family.is_independence() {
            CopulaStage::Independence
        } else {
            CopulaStage::Fitted
        };
        (kind, Some(fit))
    };
    let theta_path = match &copula {
        Some(c) if !family.is_independence() => c.evolution.theta_path(&stage.x_panel),
        _ => vec![0.0; scenario.yields.n_years()],
    };
    Ok(FittedPipeline {
        version: PIPELINE_VERSION,
        family,
        seed: scenario.bsts.seed,
        bsts_config: scenario.bsts.clone(),
        optimizer: scenario.optimizer,
        pseudo_obs: scenario.pseudo_obs,
        region_indices: stage.region_indices.clone(),
        region_ids: stage.marginals.iter().map(|m| m.region_id.clone()).collect(),
        years: scenario.yields.years.clone(),
        index_names: scenario.covariates.index_names.clone(),
        marginals: stage.marginals.clone(),
        pseudo_observations: stage.pseudo_observations.clone(),
        clustering: stage.clustering.clone(),
        gev: stage.gev.clone(),
        cross_max_gev: stage.cross_max_gev.clone(),
        copula_stage,
        copula,
        theta_path,
    })
}

/// Runs every fitting stage for the scenario's family.
pub fn fit_pipeline(scenario: &FitScenario) -> Result<FittedPipeline> {
    let stage = fit_marginal_stage(scenario)?;
    fit_dependence(scenario, &stage, scenario.family)
}

/// One family's in-sample fit in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyScore {
    pub family: CopulaFamily,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Position after sorting by log-likelihood, starting at 1.
    pub rank: usize,
}

/// Fits the marginal stage once and the dependence stage for every family, ranking the
/// families by copula pseudo-log-likelihood (highest first).
pub fn compare_families(
    scenario: &FitScenario,
    families: &[CopulaFamily],
) -> Result<(Vec<FamilyScore>, Vec<FittedPipeline>)> {
    let stage = fit_marginal_stage(scenario)?;
    let fits = families
        .iter()
        .map(|&f| fit_dependence(scenario, &stage, f))
        .collect::<Result<Vec<_>>>()?;
    let mut scores: Vec<FamilyScore> = fits
        .iter()
        .map(|p| FamilyScore {
            family: p.family,
            log_likelihood: p.copula.as_ref().map_or(0.0, |c| c.log_likelihood),
            converged: p.copula.as_ref().is_none_or(|c| c.converged),
            rank: 0,
        })
        .collect();
    scores.sort_by(|a, b| b.log_likelihood.total_cmp(&a.log_likelihood));
    for (i, s) in scores.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    Ok((scores, fits))
}
