//! Monte Carlo yield paths from a fitted pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::advance_state;
use super::{CopulaStage, FittedPipeline, MarginalFit};
use crate::copula::{evolve_theta, open_uniform, sample_conditional};
use crate::error::{Error, Result};
use crate::gev::{simulate_gev_step, GevDynamicFit};
use crate::special::norm_ppf;
use crate::stats::quantile_sorted;

/// Largest share of non-finite paths tolerated before the run fails.
pub const DISCARD_BUDGET: f64 = 0.01;

/// Mean and central 95% band of one region-year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

/// Simulated yields for every region and forecast year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDistribution {
    pub region_ids: Vec<String>,
    pub years: Vec<i32>,
    /// Identifiers of the retained paths, ascending.
    pub path_ids: Vec<usize>,
    /// `values[(d * H + h) * N + n]` for region `d`, year `h`, retained path `n`.
    pub values: Vec<f64>,
    pub summaries: Vec<Vec<ForecastSummary>>,
    pub discarded: usize,
}

impl ForecastDistribution {
    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn horizon(&self) -> usize {
        self.years.len()
    }

    pub fn n_paths(&self) -> usize {
        self.path_ids.len()
    }

    /// All retained draws for region `d` at forecast step `h`.
    pub fn samples(&self, d: usize, h: usize) -> &[f64] {
        let n = self.n_paths();
        let start = (d * self.horizon() + h) * n;
        &self.values[start..start + n]
    }

    pub fn value(&self, d: usize, h: usize, path: usize) -> f64 {
        self.samples(d, h)[path]
    }

    fn from_paths(region_ids: Vec<String>, years: Vec<i32>, paths: Vec<Option<Vec<f64>>>) -> Result<Self> {
        let total = paths.len();
        let (n_reg, horizon) = (region_ids.len(), years.len());
        let path_ids: Vec<usize> = (0..total).filter(|&i| paths[i].is_some()).collect();
        let discarded = total - path_ids.len();
        if discarded as f64 > DISCARD_BUDGET * total as f64 || path_ids.is_empty() {
            return Err(Error::TooManyDiscards { discarded, total });
        }
        let kept: Vec<Vec<f64>> = paths.into_iter().flatten().collect();
        let n = kept.len();
        let mut values = vec![0.0; n_reg * horizon * n];
        for (p, path) in kept.iter().enumerate() {
            for (dh, v) in path.iter().enumerate() {
                values[dh * n + p] = *v;
            }
        }
        let summaries = (0..n_reg)
            .map(|d| {
                (0..horizon)
                    .map(|h| {
                        let start = (d * horizon + h) * n;
                        summarize(&values[start..start + n])
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            region_ids,
            years,
            path_ids,
            values,
            summaries,
            discarded,
        })
    }
}

/// Summary statistics computed on sorted values, so the result does not depend on path order.
pub fn summarize(values: &[f64]) -> ForecastSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    ForecastSummary {
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        q025: quantile_sorted(&sorted, 0.025),
        q975: quantile_sorted(&sorted, 0.975),
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

struct RegionSim<'a> {
    marginal: &'a MarginalFit,
    gev: &'a [GevDynamicFit],
}

impl RegionSim<'_> {
    /// Picks a posterior draw; returns transition, noise variances, state and observation sd.
    fn start<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let i = rng.random_range(0..self.marginal.draws.len());
        let draw = &self.marginal.draws[i];
        let layout = &self.marginal.layout;
        (
            i,
            layout.transition(&draw.psi),
            layout.state_variances(&draw.variances),
            draw.state.clone(),
            draw.variances.observation.max(0.0).sqrt(),
        )
    }
}

fn residual(sd: f64, u: f64) -> f64 {
    if sd > 0.0 {
        sd * norm_ppf(u)
    } else {
        0.0
    }
}

/// Simulates `n_paths` yield trajectories `horizon` years past the end of the fit.
///
/// Path `n` uses its own random stream derived from `seed`, so results do not depend on
/// scheduling. Non-finite paths are dropped; more than 1% dropped is an error.
pub fn forecast(pipeline: &FittedPipeline, horizon: usize, n_paths: usize, seed: u64) -> Result<ForecastDistribution> {
    pipeline.check_version()?;
    if horizon == 0 || n_paths == 0 {
        return Err(Error::precondition("forecast horizon and path count must be at least 1"));
    }
    if pipeline.marginals.iter().any(|m| m.draws.is_empty()) {
        return Err(Error::EmptyPosterior);
    }
    let n_reg = pipeline.n_regions();
    let m_idx = pipeline.index_names.len();
    if pipeline.gev.len() != n_reg || pipeline.gev.iter().any(|g| g.len() != m_idx) {
        return Err(Error::Shape {
            axis: "index",
            expected: m_idx,
            found: pipeline.gev.first().map_or(0, |g| g.len()),
        });
    }
    let sims: Vec<RegionSim> = (0..n_reg)
        .map(|d| RegionSim {
            marginal: &pipeline.marginals[d],
            gev: &pipeline.gev[d],
        })
        .collect();
    let coupled = pipeline.copula_stage == CopulaStage::Fitted && n_reg == 2;
    let evolution = pipeline.copula.as_ref().map(|c| &c.evolution);
    let theta_last = pipeline.theta_last();

    let paths: Vec<Option<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let mut regions: Vec<_> = sims.iter().map(|s| s.start(&mut rng)).collect();
            let mut mu: Vec<Vec<f64>> = sims.iter().map(|s| s.gev.iter().map(|g| g.last_location()).collect()).collect();
            let mut mu_cross: Vec<f64> = pipeline
                .cross_max_gev
                .as_ref()
                .map(|g| g.iter().map(|f| f.last_location()).collect())
                .unwrap_or_default();
            let mut theta = theta_last;
            let mut out = vec![0.0; n_reg * horizon];
            let mut z = vec![vec![0.0; m_idx]; n_reg];
            let mut x = vec![0.0; m_idx];
            for h in 0..horizon {
                for d in 0..n_reg {
                    for m in 0..m_idx {
                        let (mu_new, zz) = simulate_gev_step(&sims[d].gev[m], mu[d][m], &mut rng);
                        mu[d][m] = mu_new;
                        z[d][m] = zz;
                    }
                }
                match &pipeline.cross_max_gev {
                    Some(cross) => {
                        for m in 0..m_idx {
                            let (mu_new, xx) = simulate_gev_step(&cross[m], mu_cross[m], &mut rng);
                            mu_cross[m] = mu_new;
                            x[m] = xx;
                        }
                    }
                    None => {
                        for m in 0..m_idx {
                            x[m] = z.iter().map(|zd| zd[m]).fold(f64::NEG_INFINITY, f64::max);
                        }
                    }
                }
                let mut u = vec![0.0; n_reg];
                if coupled {
                    let evo = evolution.expect("fitted copula stage");
                    theta = evolve_theta(evo, theta, &x);
                    u[0] = open_uniform(&mut rng);
                    u[1] = sample_conditional(evo.family, theta, u[0], &mut rng).ok()?;
                } else {
                    for v in u.iter_mut() {
                        *v = open_uniform(&mut rng);
                    }
                }
                for d in 0..n_reg {
                    let (i, g, q, state, sd) = &mut regions[d];
                    advance_state(g, q, state, &mut rng);
                    let psi = &sims[d].marginal.draws[*i].psi;
                    let y = sims[d].marginal.layout.signal(psi, z[d].iter().copied(), state) + residual(*sd, u[d]);
                    if !y.is_finite() {
                        return None;
                    }
                    out[d * horizon + h] = y;
                }
            }
            Some(out)
        })
        .collect();

    let last = pipeline.last_year();
    ForecastDistribution::from_paths(
        pipeline.region_ids.clone(),
        (1..=horizon as i32).map(|h| last + h).collect(),
        paths,
    )
}

/// Forecasts region `d` of the pipeline on its own, ignoring the copula and other regions.
pub fn forecast_region_alone(
    pipeline: &FittedPipeline,
    d: usize,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ForecastDistribution> {
    if d >= pipeline.n_regions() {
        return Err(Error::precondition(format!("region index {d} is out of range")));
    }
    let mut single = pipeline.clone();
    single.region_indices = vec![pipeline.region_indices[d]];
    single.region_ids = vec![pipeline.region_ids[d].clone()];
    single.marginals = vec![pipeline.marginals[d].clone()];
    single.gev = vec![pipeline.gev[d].clone()];
    single.cross_max_gev = None;
    single.copula_stage = CopulaStage::Skipped;
    single.copula = None;
    forecast(&single, horizon, n_paths, seed)
}
