//! The six subcommands. Each reads a [`RunConfig`], writes its files under `out`, and
//! returns what it wrote so tests can look at results without re-parsing.

use std::path::{Path, PathBuf};

use cropcast::copula::{theta_to_tau, CopulaFamily};
use cropcast::data::{CovariatePanel, FitScenario, YieldPanel};
use cropcast::eval::{screen_covariates, MetricReport};
use cropcast::forecast::{
    cluster_regions, compare_families, fit_pipeline, forecast, generate_synthetic, ClusteringReport,
    CopulaStage, FittedPipeline, ForecastDistribution, PIPELINE_VERSION,
};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{self, MetricRow};

/// Panels read from the configured files.
pub struct Inputs {
    pub yields: YieldPanel,
    pub covariates: CovariatePanel,
}

pub fn load_inputs(cfg: &RunConfig) -> CliResult<Inputs> {
    let regions = io::read_regions(&cfg.require("region", &cfg.regions)?)?;
    let yields = io::read_yields(&cfg.require("yield", &cfg.yields)?, &regions)?;
    let covariates = match &cfg.covariates {
        Some(p) => io::read_covariates(p, &regions, &yields.years)?,
        None => CovariatePanel::empty(regions.len(), yields.n_years()),
    };
    Ok(Inputs { yields, covariates })
}

pub fn scenario(cfg: &RunConfig, inputs: Inputs, family: CopulaFamily) -> CliResult<FitScenario> {
    let medoids = match &cfg.medoids {
        None => None,
        Some(ids) => Some(
            ids.iter()
                .map(|id| {
                    inputs
                        .yields
                        .regions
                        .iter()
                        .position(|r| &r.region_id == id)
                        .ok_or_else(|| CliError::config(format!("medoid {id} is not a known region")))
                })
                .collect::<CliResult<Vec<_>>>()?,
        ),
    };
    let mut s = FitScenario::new(inputs.yields, inputs.covariates, family);
    s.bsts = cfg.bsts.clone();
    s.optimizer = cfg.optimizer;
    s.clustering = cfg.clustering.clone();
    s.medoids = medoids;
    s.gev_target = cfg.gev_target;
    s.pseudo_obs = cfg.pseudo_obs;
    s.horizon = cfg.horizon;
    s.n_paths = cfg.n_paths;
    Ok(s)
}

fn ensure_out(cfg: &RunConfig) -> CliResult<&Path> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    Ok(&cfg.out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionParameters {
    pub region_id: String,
    pub psi_mean: Vec<f64>,
    pub observation_variance_mean: f64,
    pub final_level_mean: f64,
    pub retained_draws: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GevParameters {
    pub region_id: String,
    pub index_name: String,
    pub phi: f64,
    pub sigma_mu: f64,
    pub sigma: f64,
    pub xi: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CopulaParameters {
    pub omega: f64,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub theta_init: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

/// Human-readable summary of a fitted pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct ParameterReport {
    pub family: CopulaFamily,
    pub seed: u64,
    pub copula_stage: CopulaStage,
    pub regions: Vec<RegionParameters>,
    pub gev: Vec<GevParameters>,
    pub copula: Option<CopulaParameters>,
    pub theta_path: Vec<f64>,
    pub tau_path: Vec<f64>,
}

impl ParameterReport {
    pub fn new(p: &FittedPipeline) -> CliResult<Self> {
        let regions = p
            .marginals
            .iter()
            .map(|m| RegionParameters {
                region_id: m.region_id.clone(),
                psi_mean: m.psi_mean.clone(),
                observation_variance_mean: m.observation_variance_mean,
                final_level_mean: *m.level_mean.last().unwrap_or(&f64::NAN),
                retained_draws: m.draws.len(),
            })
            .collect();
        let mut gev = Vec::new();
        for (d, fits) in p.gev.iter().enumerate() {
            for (k, g) in fits.iter().enumerate() {
                gev.push(GevParameters {
                    region_id: p.region_ids[d].clone(),
                    index_name: p.index_names[k].clone(),
                    phi: g.phi,
                    sigma_mu: g.sigma_mu,
                    sigma: g.sigma,
                    xi: g.xi,
                    converged: g.converged,
                });
            }
        }
        let copula = p.copula.as_ref().map(|c| CopulaParameters {
            omega: c.evolution.omega,
            alpha: c.evolution.alpha,
            gamma: c.evolution.gamma.clone(),
            theta_init: c.evolution.theta_init,
            log_likelihood: c.log_likelihood,
            converged: c.converged,
        });
        let tau_path = if p.copula_stage == CopulaStage::Fitted {
            p.theta_path
                .iter()
                .map(|&th| theta_to_tau(p.family, th))
                .collect::<cropcast::Result<Vec<_>>>()?
        } else {
            vec![0.0; p.theta_path.len()]
        };
        Ok(Self {
            family: p.family,
            seed: p.seed,
            copula_stage: p.copula_stage,
            regions,
            gev,
            copula,
            theta_path: p.theta_path.clone(),
            tau_path,
        })
    }
}

/// Writes the pipeline artifact and its reports into `out`.
fn write_fit_outputs(out: &Path, pipeline: &FittedPipeline, covariates: &CovariatePanel, threshold: f64) -> CliResult<Vec<PathBuf>> {
    let mut written = vec![out.join("pipeline.json"), out.join("parameters.json"), out.join("pseudo_observations.csv")];
    io::write_json(&written[0], pipeline)?;
    io::write_json(&written[1], &ParameterReport::new(pipeline)?)?;
    io::write_pseudo_observations(&written[2], &pipeline.region_ids, &pipeline.years, &pipeline.pseudo_observations)?;
    if let Some(c) = &pipeline.clustering {
        let p = out.join("clustering.json");
        io::write_json(&p, c)?;
        written.push(p);
    }
    if covariates.n_indices() > 0 {
        let p = out.join("covariate_screen.json");
        io::write_json(&p, &screen_covariates(covariates, threshold)?)?;
        written.push(p);
    }
    Ok(written)
}

pub fn run_fit(cfg: &RunConfig) -> CliResult<FittedPipeline> {
    let family = cfg.family()?;
    let inputs = load_inputs(cfg)?;
    let covariates = inputs.covariates.clone();
    let s = scenario(cfg, inputs, family)?;
    let pipeline = fit_pipeline(&s)?;
    let out = ensure_out(cfg)?;
    for p in write_fit_outputs(out, &pipeline, &covariates, cfg.screen_threshold)? {
        info!("wrote {}", p.display());
    }
    Ok(pipeline)
}

pub fn run_cluster(cfg: &RunConfig) -> CliResult<ClusteringReport> {
    let family = cfg.family()?;
    let s = scenario(cfg, load_inputs(cfg)?, family)?;
    let report = cluster_regions(&s)?;
    let out = ensure_out(cfg)?;
    io::write_json(&out.join("clustering.json"), &report)?;
    let header = ["region_id", "cluster", "medoid_id"].map(String::from);
    let rows: Vec<Vec<String>> = s
        .yields
        .regions
        .iter()
        .zip(&report.assignment)
        .map(|(r, &c)| vec![r.region_id.clone(), c.to_string(), report.medoid_ids[c].clone()])
        .collect();
    io::write_table(&out.join("assignment.csv"), &header, &rows)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
struct SummaryYear {
    year: i32,
    mean: f64,
    q025: f64,
    q975: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRegion {
    region_id: String,
    years: Vec<SummaryYear>,
}

#[derive(Debug, Clone, Serialize)]
struct ForecastSummaryFile {
    family: CopulaFamily,
    seed: u64,
    n_paths: usize,
    discarded: usize,
    regions: Vec<SummaryRegion>,
}

fn write_forecast_outputs(out: &Path, fc: &ForecastDistribution, family: CopulaFamily, seed: u64) -> CliResult<()> {
    io::write_forecast(&out.join("forecast.csv"), fc)?;
    io::write_fan(&out.join("forecast_fan.csv"), fc)?;
    let summary = ForecastSummaryFile {
        family,
        seed,
        n_paths: fc.n_paths(),
        discarded: fc.discarded,
        regions: fc
            .region_ids
            .iter()
            .enumerate()
            .map(|(d, id)| SummaryRegion {
                region_id: id.clone(),
                years: fc
                    .years
                    .iter()
                    .enumerate()
                    .map(|(h, &year)| {
                        let s = fc.summaries[d][h];
                        SummaryYear {
                            year,
                            mean: s.mean,
                            q025: s.q025,
                            q975: s.q975,
                        }
                    })
                    .collect(),
            })
            .collect(),
    };
    io::write_json(&out.join("forecast_summary.json"), &summary)
}

pub fn load_pipeline(path: &Path) -> CliResult<FittedPipeline> {
    // check the version before the full structure so old artifacts get a clear message
    let raw: serde_json::Value = io::read_json(path)?;
    let version = raw.get("version").and_then(|v| v.as_u64());
    if version != Some(PIPELINE_VERSION as u64) {
        return Err(CliError::config(format!(
            "{}: pipeline artifact has format version {} but this build reads version {PIPELINE_VERSION}; refit it",
            path.display(),
            version.map_or("unknown".to_string(), |v| v.to_string())
        )));
    }
    let pipeline: FittedPipeline =
        serde_json::from_value(raw).map_err(|e| CliError::format(path, e.to_string()))?;
    pipeline.check_version()?;
    Ok(pipeline)
}

pub fn run_forecast(cfg: &RunConfig) -> CliResult<ForecastDistribution> {
    let pipeline = load_pipeline(&cfg.pipeline_path())?;
    let fc = forecast(&pipeline, cfg.horizon, cfg.n_paths, cfg.seed)?;
    write_forecast_outputs(ensure_out(cfg)?, &fc, pipeline.family, cfg.seed)?;
    Ok(fc)
}

/// Training and held-out parts of the configured panels.
fn split(cfg: &RunConfig, inputs: Inputs) -> CliResult<(Inputs, YieldPanel)> {
    let h = cfg.holdout();
    let t = inputs.yields.n_years();
    if h == 0 || h >= t {
        return Err(CliError::config(format!("holdout of {h} years must lie between 1 and {}", t - 1)));
    }
    let (train_y, test_y) = inputs.yields.split_at_year_count(t - h);
    let train_c = if inputs.covariates.n_indices() == 0 {
        CovariatePanel::empty(train_y.n_regions(), t - h)
    } else {
        inputs.covariates.split_at_year_count(t - h)?.0
    };
    Ok((
        Inputs {
            yields: train_y,
            covariates: train_c,
        },
        test_y,
    ))
}

/// Held-out yields of the modelled regions, in pipeline order.
fn held_out_for(pipeline: &FittedPipeline, test: &YieldPanel) -> YieldPanel {
    test.select_regions(&pipeline.region_indices)
}

fn metric_rows(report: &MetricReport) -> Vec<MetricRow> {
    report
        .rows()
        .into_iter()
        .map(|(model, region, metric, value)| MetricRow {
            model,
            region,
            metric,
            value,
        })
        .collect()
}

/// Fits on all but the last `holdout` years and scores the forecast of those years.
pub fn run_evaluate(cfg: &RunConfig) -> CliResult<MetricReport> {
    let family = cfg.family()?;
    let (train, test) = split(cfg, load_inputs(cfg)?)?;
    let s = scenario(cfg, train, family)?;
    let pipeline = fit_pipeline(&s)?;
    let fc = forecast(&pipeline, test.n_years(), cfg.n_paths, cfg.seed)?;
    let report = MetricReport::new(family.name(), &fc, &held_out_for(&pipeline, &test))?;
    let out = ensure_out(cfg)?;
    write_forecast_outputs(out, &fc, family, cfg.seed)?;
    io::write_metrics(&out.join("metrics.csv"), &metric_rows(&report))?;
    Ok(report)
}

/// One line of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub family: CopulaFamily,
    /// Rank by in-sample copula pseudo-log-likelihood.
    pub rank: usize,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Rank by held-out pooled AMSE (only with two modelled regions).
    pub amse_rank: Option<usize>,
    pub metrics: MetricReport,
}

/// Fits the marginals once on the training years, every family's dependence stage on top,
/// and scores held-out forecasts. Rows come out in rank order.
pub fn run_compare(cfg: &RunConfig) -> CliResult<Vec<ComparisonRow>> {
    let families = cfg.families()?;
    let (train, test) = split(cfg, load_inputs(cfg)?)?;
    let s = scenario(cfg, train, families[0])?;
    let (scores, fits) = compare_families(&s, &families)?;
    let mut rows = Vec::with_capacity(scores.len());
    for score in &scores {
        let pipeline = fits.iter().find(|p| p.family == score.family).expect("one fit per family");
        let fc = forecast(pipeline, test.n_years(), cfg.n_paths, cfg.seed)?;
        rows.push(ComparisonRow {
            family: score.family,
            rank: score.rank,
            log_likelihood: score.log_likelihood,
            converged: score.converged,
            amse_rank: None,
            metrics: MetricReport::new(score.family.name(), &fc, &held_out_for(pipeline, &test))?,
        });
    }
    if rows.iter().all(|r| r.metrics.amse_pooled.is_some()) {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[a].metrics.amse_pooled.unwrap().total_cmp(&rows[b].metrics.amse_pooled.unwrap()));
        for (r, &i) in order.iter().enumerate() {
            rows[i].amse_rank = Some(r + 1);
        }
    }

    let out = ensure_out(cfg)?;
    let region_ids: Vec<String> = rows[0].metrics.regions.iter().map(|r| r.region_id.clone()).collect();
    let mut header: Vec<String> = ["family", "rank", "log_likelihood", "converged", "amse_pooled", "amse_rank"]
        .map(String::from)
        .to_vec();
    for id in &region_ids {
        header.push(format!("amse_{id}"));
        header.push(format!("amae_{id}"));
    }
    let opt = |v: Option<String>| v.unwrap_or_default();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![
                r.family.name().to_string(),
                r.rank.to_string(),
                r.log_likelihood.to_string(),
                r.converged.to_string(),
                opt(r.metrics.amse_pooled.map(|v| v.to_string())),
                opt(r.amse_rank.map(|v| v.to_string())),
            ];
            for m in &r.metrics.regions {
                line.push(m.amse.to_string());
                line.push(m.amae.to_string());
            }
            line
        })
        .collect();
    io::write_table(&out.join("comparison.csv"), &header, &table)?;
    let metrics: Vec<MetricRow> = rows.iter().flat_map(|r| metric_rows(&r.metrics)).collect();
    io::write_metrics(&out.join("metrics.csv"), &metrics)?;
    Ok(rows)
}

/// Generates a synthetic panel with the input file layout plus the generating truth.
pub fn run_simulate(cfg: &RunConfig) -> CliResult<()> {
    let spec = cfg.simulate.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let panel = generate_synthetic(&spec, &mut rng)?;
    let out = ensure_out(cfg)?;
    io::write_regions(&out.join("regions.csv"), &panel.yields.regions)?;
    io::write_yields(&out.join("yields.csv"), &panel.yields)?;
    if panel.covariates.n_indices() > 0 {
        io::write_covariates(&out.join("covariates.csv"), &panel.covariates, &panel.yields.regions, &panel.yields.years)?;
    }
    io::write_json(&out.join("truth.json"), &(&spec, &panel.truth))?;
    Ok(())
}
