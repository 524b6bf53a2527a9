//! Forecast accuracy metrics and covariate screening.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{CovariatePanel, YieldPanel};
use crate::error::{Error, Result};
use crate::forecast::ForecastDistribution;
use crate::stats::{pearson, pseudo_ranks};

fn check_alignment(fc: &ForecastDistribution, actuals: &YieldPanel) -> Result<()> {
    if actuals.n_regions() != fc.n_regions() {
        return Err(Error::Shape {
            axis: "region",
            expected: fc.n_regions(),
            found: actuals.n_regions(),
        });
    }
    for (r, id) in actuals.regions.iter().zip(&fc.region_ids) {
        if &r.region_id != id {
            return Err(Error::precondition(format!(
                "actuals list region {} where the forecast has {id}",
                r.region_id
            )));
        }
    }
    if actuals.years != fc.years {
        return Err(Error::precondition(format!(
            "actual years {:?} do not match forecast years {:?}",
            actuals.years, fc.years
        )));
    }
    Ok(())
}

/// Pooled squared error over both regions: `(1/2n) sum_i sum_d (yhat - y)^2`, where `i`
/// runs over the `n` path-year pairs.
pub fn amse_pooled(fc: &ForecastDistribution, actuals: &YieldPanel) -> Result<f64> {
    check_alignment(fc, actuals)?;
    if fc.n_regions() != 2 {
        return Err(Error::Shape {
            axis: "region",
            expected: 2,
            found: fc.n_regions(),
        });
    }
    let n = (fc.n_paths() * fc.horizon()) as f64;
    let mut total = 0.0;
    for d in 0..2 {
        for h in 0..fc.horizon() {
            let y = actuals.values[(d, h)];
            total += fc.samples(d, h).iter().map(|v| (v - y) * (v - y)).sum::<f64>();
        }
    }
    Ok(total / (2.0 * n))
}

/// Per-region average errors over paths and years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub region_id: String,
    pub amse: f64,
    pub amae: f64,
}

/// `AMSE_d = (1/N) sum_n (1/T) sum_t (y - yhat)^2`, and `AMAE_d` with absolute errors.
pub fn per_region_metrics(fc: &ForecastDistribution, actuals: &YieldPanel) -> Result<Vec<RegionMetrics>> {
    check_alignment(fc, actuals)?;
    let (h_len, n) = (fc.horizon(), fc.n_paths());
    Ok((0..fc.n_regions())
        .map(|d| {
            let (mut se, mut ae) = (0.0, 0.0);
            for h in 0..h_len {
                let y = actuals.values[(d, h)];
                for v in fc.samples(d, h) {
                    se += (y - v) * (y - v);
                    ae += (y - v).abs();
                }
            }
            let denom = (n * h_len) as f64;
            RegionMetrics {
                region_id: fc.region_ids[d].clone(),
                amse: se / denom,
                amae: ae / denom,
            }
        })
        .collect())
}

/// Accuracy of one model's forecast against held-out yields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub n_paths: usize,
    pub horizon: usize,
    /// Pooled two-region AMSE; absent unless exactly two regions are forecast.
    pub amse_pooled: Option<f64>,
    pub regions: Vec<RegionMetrics>,
}

impl MetricReport {
    pub fn new(model: impl Into<String>, fc: &ForecastDistribution, actuals: &YieldPanel) -> Result<Self> {
        let regions = per_region_metrics(fc, actuals)?;
        let amse_pooled = if fc.n_regions() == 2 {
            Some(amse_pooled(fc, actuals)?)
        } else {
            None
        };
        Ok(Self {
            model: model.into(),
            n_paths: fc.n_paths(),
            horizon: fc.horizon(),
            amse_pooled,
            regions,
        })
    }

    /// Long-format rows `(model, region, metric, value)`; the pooled value uses region `all`.
    pub fn rows(&self) -> Vec<(String, String, String, f64)> {
        let mut out = Vec::new();
        if let Some(v) = self.amse_pooled {
            out.push((self.model.clone(), "all".into(), "amse_pooled".into(), v));
        }
        for r in &self.regions {
            out.push((self.model.clone(), r.region_id.clone(), "amse".into(), r.amse));
            out.push((self.model.clone(), r.region_id.clone(), "amae".into(), r.amae));
        }
        out
    }
}

/// Pairwise dependence summaries of the covariate indices, pooled over regions.
///
/// Entries are `None` where a column is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateScreen {
    pub index_names: Vec<String>,
    pub threshold: f64,
    pub correlation: Vec<Vec<Option<f64>>>,
    pub upper_tail: Vec<Vec<Option<f64>>>,
    pub lower_tail: Vec<Vec<Option<f64>>>,
}

/// Minimum series length below which screening results are flagged as unreliable.
pub const SCREEN_MIN_YEARS: usize = 30;

/// Pearson correlations and empirical tail-dependence coefficients at `threshold`
/// (upper) and `1 - threshold` (lower) on rank-transformed columns.
pub fn screen_covariates(cov: &CovariatePanel, threshold: f64) -> Result<CovariateScreen> {
    if !(threshold > 0.5 && threshold < 1.0) {
        return Err(Error::precondition(format!("tail threshold {threshold} must lie in (0.5, 1)")));
    }
    if cov.n_years() < SCREEN_MIN_YEARS {
        warn!("screening covariates over only {} years", cov.n_years());
    }
    let m = cov.n_indices();
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|k| cov.values.iter().flat_map(|z| z.row(k).iter().copied()).collect())
        .collect();
    let constant: Vec<bool> = columns
        .iter()
        .map(|c| c.iter().all(|v| *v == c[0]))
        .collect();
    let ranks: Vec<Vec<f64>> = columns.iter().map(|c| pseudo_ranks(c)).collect();
    let n = columns.first().map_or(0, |c| c.len()) as f64;
    let lower = 1.0 - threshold;
    let mut correlation = vec![vec![None; m]; m];
    let mut upper_tail = vec![vec![None; m]; m];
    let mut lower_tail = vec![vec![None; m]; m];
    for i in 0..m {
        for j in 0..m {
            if constant[i] || constant[j] {
                continue;
            }
            correlation[i][j] = if i == j { Some(1.0) } else { pearson(&columns[i], &columns[j]) };
            let (a, b) = (&ranks[i], &ranks[j]);
            let up = a.iter().zip(b).filter(|(u, v)| **u > threshold && **v > threshold).count() as f64;
            let lo = a.iter().zip(b).filter(|(u, v)| **u <= lower && **v <= lower).count() as f64;
            upper_tail[i][j] = Some(up / n / (1.0 - threshold));
            lower_tail[i][j] = Some(lo / n / lower);
        }
    }
    Ok(CovariateScreen {
        index_names: cov.index_names.clone(),
        threshold,
        correlation,
        upper_tail,
        lower_tail,
    })
}
