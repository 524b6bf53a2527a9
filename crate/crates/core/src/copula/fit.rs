use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evolution::{copula_pseudo_loglik, CopulaEvolution};
use super::family::{link, link_inverse, tau_to_theta, CopulaFamily};
use crate::data::{CovariatePanel, GevTarget, OptimizerSettings};
use crate::error::{Error, Result};
use crate::gev::{fit_dynamic_gev, GevDynamicFit};
use crate::matrix::Matrix;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::stats::{kendall_tau, variance};

/// Result of maximising the copula pseudo-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaFit {
    pub evolution: CopulaEvolution,
    pub log_likelihood: f64,
    /// Pseudo log-likelihood at the moment-matched start.
    pub start_log_likelihood: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Static start matched to the empirical Kendall tau of the pseudo-observations.
pub fn moment_start(u_panel: &Matrix, n_covariates: usize, family: CopulaFamily) -> CopulaEvolution {
    if family.is_independence() {
        return CopulaEvolution::independence(n_covariates);
    }
    let tau = kendall_tau(u_panel.row(0), u_panel.row(1));
    let omega = link_inverse(family, tau_to_theta(family, tau));
    CopulaEvolution {
        family,
        omega,
        alpha: 0.0,
        gamma: vec![0.0; n_covariates],
        theta_init: link(family, omega),
    }
}

/// Fits `(omega, alpha, gamma)` by simplex search with jittered restarts.
pub fn fit_copula_evolution(
    u_panel: &Matrix,
    x_panel: &Matrix,
    family: CopulaFamily,
    settings: &OptimizerSettings,
    seed: u64,
) -> Result<CopulaFit> {
    let start = moment_start(u_panel, x_panel.rows(), family);
    let start_ll = copula_pseudo_loglik(u_panel, x_panel, &start)?;
    if family.is_independence() {
        return Ok(CopulaFit {
            evolution: start,
            log_likelihood: start_ll,
            start_log_likelihood: start_ll,
            converged: true,
            evaluations: 0,
        });
    }
    let objective = |x: &[f64]| match copula_pseudo_loglik(u_panel, x_panel, &start.with_params(x)) {
        Ok(v) => -v,
        Err(_) => f64::INFINITY,
    };
    let mut steps = vec![0.5, 0.2];
    for m in 0..x_panel.rows() {
        let sd = variance(x_panel.row(m)).sqrt();
        steps.push(if sd > 0.0 { 0.1 / sd } else { 0.1 });
    }
    let opts = NelderMeadOptions {
        max_evals: settings.max_evals,
        f_tol: settings.tolerance,
        ..NelderMeadOptions::default()
    };
    let x0 = start.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = nelder_mead(&objective, &x0, &steps, &opts);
    let mut evaluations = best.evaluations;
    for _ in 0..settings.restarts {
        let jittered: Vec<f64> = best
            .x
            .iter()
            .zip(&steps)
            .map(|(x, s)| x + s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let run = nelder_mead(&objective, &jittered, &steps, &opts);
        evaluations += run.evaluations;
        if run.value < best.value {
            best = run;
        }
    }
    if !(best.value <= -start_ll) {
        // the simplex never leaves its first vertex for a worse point; this only
        // triggers if the start itself was infeasible
        return Err(Error::NonConvergence {
            evaluations,
            best_value: -best.value,
            best_params: best.x,
        });
    }
    Ok(CopulaFit {
        evolution: start.with_params(&best.x),
        log_likelihood: -best.value,
        start_log_likelihood: start_ll,
        converged: best.converged,
        evaluations,
    })
}

/// Copula block plus per-(region, index) dynamic GEV fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullModelFit {
    pub copula: CopulaFit,
    /// `gev[d][m]` for every region and covariate index.
    pub gev: Vec<Vec<GevDynamicFit>>,
    /// Fits to the cross-region maxima, when requested.
    pub cross_max_gev: Option<Vec<GevDynamicFit>>,
    pub gev_log_likelihood: f64,
    pub objective: f64,
}

/// Fits every covariate series of `covariates` with a dynamic GEV.
pub fn fit_gev_panel(covariates: &CovariatePanel, settings: &OptimizerSettings) -> Result<Vec<Vec<GevDynamicFit>>> {
    let opts = NelderMeadOptions {
        max_evals: settings.max_evals,
        f_tol: settings.tolerance,
        ..NelderMeadOptions::default()
    };
    let jobs: Vec<(usize, usize)> = (0..covariates.n_regions())
        .flat_map(|d| (0..covariates.n_indices()).map(move |m| (d, m)))
        .collect();
    let fits: Vec<GevDynamicFit> = jobs
        .par_iter()
        .map(|&(d, m)| fit_dynamic_gev(covariates.values[d].row(m), &opts))
        .collect::<Result<_>>()?;
    let mut it = fits.into_iter();
    Ok((0..covariates.n_regions())
        .map(|_| it.by_ref().take(covariates.n_indices()).collect())
        .collect())
}

/// Maximises the combined objective. The GEV terms share no parameters with the copula
/// recursion, so each block is maximised separately.
pub fn fit_full_model(
    u_panel: &Matrix,
    covariates: &CovariatePanel,
    family: CopulaFamily,
    settings: &OptimizerSettings,
    gev_target: GevTarget,
    seed: u64,
) -> Result<FullModelFit> {
    if covariates.n_regions() != u_panel.rows() {
        return Err(Error::Shape {
            axis: "region",
            expected: u_panel.rows(),
            found: covariates.n_regions(),
        });
    }
    let x_panel = &covariates.cross_max;
    let (copula, gev) = rayon::join(
        || fit_copula_evolution(u_panel, x_panel, family, settings, seed),
        || fit_gev_panel(covariates, settings),
    );
    let copula = copula.map_err(|e| e.in_stage("copula"))?;
    let gev = gev.map_err(|e| e.in_stage("gev"))?;
    let cross_max_gev = match gev_target {
        GevTarget::PerRegion => None,
        GevTarget::CrossMax => {
            let single = CovariatePanel {
                index_names: covariates.index_names.clone(),
                values: vec![x_panel.clone()],
                cross_max: x_panel.clone(),
            };
            Some(fit_gev_panel(&single, settings)?.remove(0))
        }
    };
    let gev_log_likelihood: f64 = gev.iter().flatten().map(|f| f.log_likelihood).sum();
    Ok(FullModelFit {
        objective: copula.log_likelihood + gev_log_likelihood,
        copula,
        gev,
        cross_max_gev,
        gev_log_likelihood,
    })
}
