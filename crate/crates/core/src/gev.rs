//! Generalized extreme value marginals with an autoregressive location.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::scalar::Scalar;
use crate::special::LN_SQRT_2PI;

fn support_error<F: Scalar>(z: F, mu: F, sigma: F, xi: F) -> Error {
    Error::OutOfSupport {
        value: z.to_f64().unwrap_or(f64::NAN),
        context: format!("GEV(mu = {mu}, sigma = {sigma}, xi = {xi})"),
    }
}

fn check_scale<F: Scalar>(sigma: F) -> Result<()> {
    if sigma > F::zero() && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::precondition(format!("GEV scale must be positive, got {sigma}")))
    }
}

/// GEV log-density at `z`.
pub fn gev_logpdf<F: Scalar>(z: F, mu: F, sigma: F, xi: F) -> Result<F> {
    check_scale(sigma)?;
    let w = (z - mu) / sigma;
    if xi.abs() < F::gumbel_eps() {
        return Ok(-sigma.ln() - w - (-w).exp());
    }
    let a = F::one() + xi * w;
    if !(a > F::zero()) {
        return Err(support_error(z, mu, sigma, xi));
    }
    let la = a.ln();
    Ok(-sigma.ln() - (F::one() + F::one() / xi) * la - (-la / xi).exp())
}

/// GEV distribution function. Returns 0 or 1 outside the support.
pub fn gev_cdf<F: Scalar>(z: F, mu: F, sigma: F, xi: F) -> Result<F> {
    check_scale(sigma)?;
    let w = (z - mu) / sigma;
    if xi.abs() < F::gumbel_eps() {
        return Ok((-(-w).exp()).exp());
    }
    let a = F::one() + xi * w;
    if !(a > F::zero()) {
        return Ok(if xi > F::zero() { F::zero() } else { F::one() });
    }
    Ok((-(-a.ln() / xi).exp()).exp())
}

/// GEV quantile function `F^{-1}(u)`.
pub fn gev_quantile<F: Scalar>(u: F, mu: F, sigma: F, xi: F) -> Result<F> {
    check_scale(sigma)?;
    if !(u > F::zero() && u < F::one()) {
        return Err(Error::precondition(format!("quantile level must lie in (0, 1), got {u}")));
    }
    let y = -u.ln();
    if xi.abs() < F::gumbel_eps() {
        return Ok(mu - sigma * y.ln());
    }
    // ((-ln u)^{-xi} - 1) / xi computed as expm1(-xi ln y) / xi
    Ok(mu + sigma * (-xi * y.ln()).exp_m1() / xi)
}

/// Gaussian log-density of the location innovation `mu_t - phi mu_prev`.
pub fn ar1_location_logpdf<F: Scalar>(mu_t: F, mu_prev: F, phi: F, sigma_mu: F) -> Result<F> {
    if !(sigma_mu > F::zero()) {
        return Err(Error::precondition("innovation sd must be positive"));
    }
    let r = (mu_t - phi * mu_prev) / sigma_mu;
    Ok(-F::c(LN_SQRT_2PI) - sigma_mu.ln() - F::c(0.5) * r * r)
}

/// Fitted GEV with AR(1) location for one covariate series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevDynamicFit {
    pub phi: f64,
    pub sigma_mu: f64,
    pub sigma: f64,
    pub xi: f64,
    pub mu_path: Vec<f64>,
    /// Joint log-density of the observations and the fitted location path.
    pub log_likelihood: f64,
    /// Laplace-approximated marginal log-likelihood used to select the hyperparameters.
    pub marginal_log_likelihood: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl GevDynamicFit {
    pub fn last_location(&self) -> f64 {
        *self.mu_path.last().expect("non-empty location path")
    }
}

/// Minimum series length accepted by [`fit_dynamic_gev`].
pub const MIN_GEV_LENGTH: usize = 20;

/// Per-observation log-density and its first two derivatives with respect to `mu`.
/// Returns `None` outside the support.
fn obs_terms(z: f64, mu: f64, sigma: f64, xi: f64) -> Option<(f64, f64, f64)> {
    let w = (z - mu) / sigma;
    if xi.abs() < 1e-8 {
        let e = (-w).exp();
        let lp = -sigma.ln() - w - e;
        return Some((lp, (1.0 - e) / sigma, -e / (sigma * sigma)));
    }
    let a = 1.0 + xi * w;
    if !(a > 0.0) {
        return None;
    }
    let la = a.ln();
    let p = (-la / xi).exp(); // a^{-1/xi}
    let lp = -sigma.ln() - (1.0 + 1.0 / xi) * la - p;
    let g = ((1.0 + xi) - p) / (sigma * a);
    let h = (1.0 + xi) * (xi - p) / (sigma * sigma * a * a);
    Some((lp, g, h))
}

/// Hyperparameters of the dynamic GEV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevParams {
    pub phi: f64,
    pub sigma_mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

/// Joint log-density of `z` and a location path `mu`; the first location is left
/// unpenalised. Returns `None` when any observation is outside the support.
pub fn joint_log_density(z: &[f64], mu: &[f64], p: &GevParams) -> Option<f64> {
    let mut total = 0.0;
    for (t, (&zt, &mt)) in z.iter().zip(mu).enumerate() {
        total += obs_terms(zt, mt, p.sigma, p.xi)?.0;
        if t > 0 {
            let r = (mt - p.phi * mu[t - 1]) / p.sigma_mu;
            total += -LN_SQRT_2PI - p.sigma_mu.ln() - 0.5 * r * r;
        }
    }
    Some(total)
}

/// Gradient of [`joint_log_density`] with respect to the location path.
pub fn joint_gradient(z: &[f64], mu: &[f64], p: &GevParams) -> Option<Vec<f64>> {
    let mut g = vec![0.0; z.len()];
    let prec = 1.0 / (p.sigma_mu * p.sigma_mu);
    for t in 0..z.len() {
        g[t] += obs_terms(z[t], mu[t], p.sigma, p.xi)?.1;
        if t > 0 {
            let r = mu[t] - p.phi * mu[t - 1];
            g[t] -= r * prec;
            g[t - 1] += p.phi * r * prec;
        }
    }
    Some(g)
}

/// Negative Hessian of the joint log-density in `mu`: (diagonal, sub-diagonal).
fn neg_hessian(z: &[f64], mu: &[f64], p: &GevParams, floor: Option<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = z.len();
    let prec = 1.0 / (p.sigma_mu * p.sigma_mu);
    let mut d = vec![0.0; n];
    let off = vec![-p.phi * prec; n.saturating_sub(1)];
    for t in 0..n {
        let h = -obs_terms(z[t], mu[t], p.sigma, p.xi)?.2;
        d[t] = match floor {
            Some(f) => h.max(f),
            None => h,
        };
        if t > 0 {
            d[t] += prec;
            d[t - 1] += p.phi * p.phi * prec;
        }
    }
    Some((d, off))
}

/// Solves a symmetric tridiagonal system by LDL'. Returns the solution and `ln det`,
/// or `None` if the matrix is not positive definite.
fn tridiag_solve(d: &[f64], off: &[f64], rhs: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = d.len();
    let mut piv = vec![0.0; n];
    let mut l = vec![0.0; n.saturating_sub(1)];
    let mut y = vec![0.0; n];
    let mut logdet = 0.0;
    for i in 0..n {
        piv[i] = d[i] - if i > 0 { l[i - 1] * l[i - 1] * piv[i - 1] } else { 0.0 };
        if !(piv[i] > 0.0) || !piv[i].is_finite() {
            return None;
        }
        logdet += piv[i].ln();
        if i + 1 < n {
            l[i] = off[i] / piv[i];
        }
        y[i] = rhs[i] - if i > 0 { l[i - 1] * y[i - 1] } else { 0.0 };
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = y[i] / piv[i] - if i + 1 < n { l[i] * x[i + 1] } else { 0.0 };
    }
    Some((x, logdet))
}

/// A constant location path at which every observation is inside the support.
fn feasible_start(z: &[f64], level: f64, sigma: f64, xi: f64) -> Vec<f64> {
    let mut m = level;
    if xi > 1e-8 {
        let zmin = z.iter().copied().fold(f64::INFINITY, f64::min);
        m = m.min(zmin + 0.5 * sigma / xi);
    } else if xi < -1e-8 {
        let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m = m.max(zmax + 0.5 * sigma / xi);
    }
    vec![m; z.len()]
}

/// Maximises the joint log-density over the location path by damped Newton steps.
fn optimise_path(z: &[f64], p: &GevParams, start: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mut mu = start.to_vec();
    let mut value = joint_log_density(z, &mu, p)?;
    let curv_floor = 1e-6 / (p.sigma * p.sigma);
    for _ in 0..200 {
        let g = joint_gradient(z, &mu, p)?;
        let (d, off) = neg_hessian(z, &mu, p, Some(curv_floor))?;
        let (step, _) = tridiag_solve(&d, &off, &g)?;
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = mu.iter().zip(&step).map(|(m, s)| m + lambda * s).collect();
            if let Some(v) = joint_log_density(z, &trial, p) {
                if v >= value + 1e-4 * lambda * slope {
                    mu = trial;
                    let moved = step.iter().map(|s| (lambda * s).abs()).fold(0.0, f64::max);
                    value = v;
                    improved = moved > 1e-10 * p.sigma;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Some((mu, value))
}

/// Laplace approximation to the marginal log-likelihood of the hyperparameters,
/// together with the optimal path and its joint log-density.
fn laplace(z: &[f64], p: &GevParams, start: &[f64]) -> Option<(f64, Vec<f64>, f64)> {
    let (mu, joint) = optimise_path(z, p, start)?;
    let (d, off) = neg_hessian(z, &mu, p, None)?;
    let (_, logdet) = tridiag_solve(&d, &off, &vec![0.0; z.len()])?;
    let marginal = joint + 0.5 * z.len() as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet;
    Some((marginal, mu, joint))
}

const ATANH_PHI_BOUND: f64 = 4.0;

fn unpack(x: &[f64], scale: f64) -> Option<GevParams> {
    if x[0].abs() > ATANH_PHI_BOUND || x[1] < (1e-4 * scale).ln() || x[1] > (100.0 * scale).ln() {
        return None;
    }
    if x[2] < (1e-6 * scale).ln() || x[2] > (100.0 * scale).ln() || x[3].abs() > 2.0 {
        return None;
    }
    Some(GevParams {
        phi: x[0].tanh(),
        sigma_mu: x[1].exp(),
        sigma: x[2].exp(),
        xi: x[3],
    })
}

/// Fits a GEV with time-constant scale and shape and an AR(1) location path.
///
/// The hyperparameters `(phi, sigma_mu, sigma, xi)` maximise the Laplace-approximated
/// marginal likelihood; the location path is the joint maximiser given them.
pub fn fit_dynamic_gev(z: &[f64], opts: &NelderMeadOptions) -> Result<GevDynamicFit> {
    // the marginal is flat along the persistence ridge and the inner solve carries
    // round-off of order 1e-9, so the tolerances are floored accordingly
    let opts = &NelderMeadOptions {
        x_tol: opts.x_tol.max(1e-3),
        f_tol: opts.f_tol.max(1e-6),
        ..*opts
    };
    let t_len = z.len();
    if t_len < MIN_GEV_LENGTH {
        return Err(Error::precondition(format!(
            "dynamic GEV fit needs at least {MIN_GEV_LENGTH} observations, got {t_len}"
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::precondition("GEV series must be finite"));
    }
    let mean = z.iter().sum::<f64>() / t_len as f64;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t_len as f64 - 1.0)).sqrt();
    if !(sd > 1e-10 * mean.abs().max(1.0)) {
        return Err(Error::Degenerate(
            "constant covariate series: the GEV scale collapses to zero".into(),
        ));
    }
    // Gumbel moment start
    let sigma0 = sd * 6f64.sqrt() / std::f64::consts::PI;
    let level0 = mean - 0.577_215_664_901_532_9 * sigma0;

    let warm = std::cell::RefCell::new(feasible_start(z, level0, sigma0, 0.1));
    let objective = |x: &[f64]| -> f64 {
        let Some(p) = unpack(x, sd) else {
            return f64::INFINITY;
        };
        let start = {
            let w = warm.borrow();
            if joint_log_density(z, &w, &p).is_some() {
                w.clone()
            } else {
                feasible_start(z, level0, p.sigma, p.xi)
            }
        };
        match laplace(z, &p, &start) {
            Some((m, mu, _)) => {
                *warm.borrow_mut() = mu;
                -m
            }
            None => f64::INFINITY,
        }
    };

    let mut best: Option<crate::optim::Minimum> = None;
    let mut evaluations = 0;
    for &phi0 in &[0.0, 0.5, 0.95] {
        let x0 = [f64::atanh(phi0), (0.5 * sigma0).ln(), sigma0.ln(), 0.1];
        *warm.borrow_mut() = feasible_start(z, level0, sigma0, 0.1);
        let mut run = nelder_mead(&objective, &x0, &[0.5, 0.5, 0.3, 0.1], opts);
        evaluations += run.evaluations;
        // polish from the end point
        if run.value.is_finite() {
            let again = nelder_mead(&objective, &run.x, &[0.1, 0.1, 0.05, 0.02], opts);
            evaluations += again.evaluations;
            if again.value <= run.value {
                run = crate::optim::Minimum {
                    converged: again.converged,
                    ..again
                };
            }
        }
        if best.as_ref().is_none_or(|b| run.value < b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let Some(params) = unpack(&best.x, sd).filter(|_| best.value.is_finite()) else {
        return Err(Error::NonConvergence {
            evaluations,
            best_value: f64::NAN,
            best_params: best.x,
        });
    };
    if !best.converged {
        return Err(Error::NonConvergence {
            evaluations,
            best_value: -best.value,
            best_params: vec![params.phi, params.sigma_mu, params.sigma, params.xi],
        });
    }
    let start = feasible_start(z, level0, params.sigma, params.xi);
    let (marginal, mu_path, joint) = laplace(z, &params, &start).ok_or_else(|| Error::OutOfSupport {
        value: f64::NAN,
        context: "no feasible location path at the fitted GEV parameters".into(),
    })?;
    Ok(GevDynamicFit {
        phi: params.phi,
        sigma_mu: params.sigma_mu,
        sigma: params.sigma,
        xi: params.xi,
        mu_path,
        log_likelihood: joint,
        marginal_log_likelihood: marginal,
        converged: true,
        evaluations,
    })
}

/// Advances the location one step and draws a new observation.
pub fn simulate_gev_step<R: Rng + ?Sized>(fit: &GevDynamicFit, mu_prev: f64, rng: &mut R) -> (f64, f64) {
    let eps: f64 = rng.sample(StandardNormal);
    let mu = fit.phi * mu_prev + fit.sigma_mu * eps;
    // u in (0, 1): rejects the zero endpoint of the generator
    let u: f64 = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let z = gev_quantile(u, mu, fit.sigma, fit.xi).expect("fitted scale is positive");
    (mu, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_at_location_with_unit_shape() {
        assert!((gev_logpdf(0.0f64, 0.0, 1.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn shape_limit_is_continuous() {
        let g = gev_logpdf(0.0f64, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(g, -1.0);
        assert!((gev_logpdf(0.0, 0.0, 1.0, 1e-3).unwrap() - g).abs() < 1e-3);
        assert!((gev_logpdf(0.0, 0.0, 1.0, 1e-6).unwrap() - g).abs() < 1e-6);
    }

    #[test]
    fn beyond_upper_endpoint_is_an_error() {
        // upper endpoint is mu + sigma / |xi| = 2
        assert!(matches!(gev_logpdf(2.5, 0.0, 1.0, -0.5), Err(Error::OutOfSupport { .. })));
        assert!(gev_logpdf(1.9, 0.0, 1.0, -0.5).is_ok());
    }

    #[test]
    fn ar_density_examples() {
        let mode = ar1_location_logpdf(1.6f64, 2.0, 0.8, 0.7).unwrap();
        assert!((mode + (2.0 * std::f64::consts::PI).sqrt().ln() + 0.7f64.ln()).abs() < 1e-14);
        let std = ar1_location_logpdf(1.0f64, 123.0, 0.0, 1.0).unwrap();
        assert!((std + 1.418_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        let q = gev_quantile((-1.0f64).exp(), 0.0, 1.0, 1.0f64).unwrap();
        assert!(q.abs() < 1e-15);
    }

    #[test]
    fn degenerate_ar_step() {
        use rand::SeedableRng;
        let fit = GevDynamicFit {
            phi: 0.0,
            sigma_mu: 0.0,
            sigma: 1.0,
            xi: 0.1,
            mu_path: vec![3.0],
            log_likelihood: 0.0,
            marginal_log_likelihood: 0.0,
            converged: true,
            evaluations: 0,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(simulate_gev_step(&fit, 5.0, &mut rng).0, 0.0);
        }
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        let d = [4.0, 5.0, 6.0];
        let off = [1.0, -2.0];
        let (x, logdet) = tridiag_solve(&d, &off, &[1.0, 2.0, 3.0]).unwrap();
        // dense check
        let a = [[4.0, 1.0, 0.0], [1.0, 5.0, -2.0], [0.0, -2.0, 6.0]];
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        let det = 4.0 * (5.0 * 6.0 - 4.0) - 1.0 * (1.0 * 6.0);
        assert!((logdet - f64::ln(det)).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let z = vec![3.0; 40];
        assert!(matches!(
            fit_dynamic_gev(&z, &NelderMeadOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(fit_dynamic_gev(&[1.0, 2.0, 3.0], &NelderMeadOptions::default()).is_err());
    }
}
