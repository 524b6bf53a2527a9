//! Bayesian structural time series for one region's yields, fitted by Gibbs sampling.
//!
//! Observation equation:
//!
//! ```text
//! y_t = l_t + s_t + sum_l psi_l e_{t-l} + sum_m beta_{m,t} Z_{m,t} + eps_t
//! ```
//!
//! with a local linear trend (`l`, slope `tau`), an optional dummy seasonal block of
//! period `S`, a latent AR(p) process `e`, and random-walk regression coefficients.
//! Each sweep draws the full state path by FFBS, then every variance from its conjugate
//! inverse-gamma conditional, then `psi` from its truncated-normal conditional under a
//! uniform(-1, 1) prior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{BstsConfig, InvGammaPrior};
use crate::error::{Error, Result};
use crate::kalman::{FilterStore, StateSpace};
use crate::matrix::Matrix;
use crate::special::{norm_cdf, truncated_normal};

/// Prior variance on the level, slope, seasonal and regression states at `t = 1`.
pub const DIFFUSE_VARIANCE: f64 = 1e6;

/// Position of each component inside the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub ar_order: usize,
    pub seasonal_period: usize,
    pub n_covariates: usize,
}

impl StateLayout {
    pub fn new(ar_order: usize, seasonal_period: usize, n_covariates: usize) -> Self {
        Self {
            ar_order,
            seasonal_period,
            n_covariates,
        }
    }

    pub const LEVEL: usize = 0;
    pub const SLOPE: usize = 1;

    pub fn n_seasonal(&self) -> usize {
        self.seasonal_period.saturating_sub(1)
    }

    pub fn seasonal_start(&self) -> usize {
        2
    }

    pub fn ar_start(&self) -> usize {
        2 + self.n_seasonal()
    }

    pub fn beta_start(&self) -> usize {
        self.ar_start() + self.ar_order
    }

    pub fn dim(&self) -> usize {
        self.beta_start() + self.n_covariates
    }

    /// Transition matrix for the given AR coefficients (row-major).
    pub fn transition(&self, psi: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut g = vec![0.0; n * n];
        g[Self::LEVEL * n + Self::LEVEL] = 1.0;
        g[Self::LEVEL * n + Self::SLOPE] = 1.0;
        g[Self::SLOPE * n + Self::SLOPE] = 1.0;
        let s0 = self.seasonal_start();
        let ns = self.n_seasonal();
        for i in 0..ns {
            g[s0 * n + s0 + i] = -1.0;
            if i > 0 {
                g[(s0 + i) * n + s0 + i - 1] = 1.0;
            }
        }
        let a0 = self.ar_start();
        for (l, &c) in psi.iter().enumerate() {
            g[a0 * n + a0 + l] = c;
            if l > 0 {
                g[(a0 + l) * n + a0 + l - 1] = 1.0;
            }
        }
        let b0 = self.beta_start();
        for m in 0..self.n_covariates {
            g[(b0 + m) * n + b0 + m] = 1.0;
        }
        g
    }

    /// Diagonal state-noise variances.
    pub fn state_variances(&self, v: &Variances) -> Vec<f64> {
        let mut q = vec![0.0; self.dim()];
        q[Self::LEVEL] = v.level;
        q[Self::SLOPE] = v.slope;
        if self.n_seasonal() > 0 {
            q[self.seasonal_start()] = v.seasonal.unwrap_or(0.0);
        }
        q[self.ar_start()] = v.autoregressive;
        for m in 0..self.n_covariates {
            q[self.beta_start() + m] = v.regression.unwrap_or(0.0);
        }
        q
    }

    /// Observation loading at one time point.
    pub fn loading(&self, psi: &[f64], z_t: impl Iterator<Item = f64>, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[Self::LEVEL] = 1.0;
        if self.n_seasonal() > 0 {
            out[self.seasonal_start()] = 1.0;
        }
        out[self.ar_start()..self.ar_start() + self.ar_order].copy_from_slice(psi);
        for (m, z) in z_t.enumerate() {
            out[self.beta_start() + m] = z;
        }
    }

    /// Fitted mean `z_t' x_t` excluding the observation noise.
    pub fn signal(&self, psi: &[f64], z_t: impl Iterator<Item = f64>, state: &[f64]) -> f64 {
        let mut s = state[Self::LEVEL];
        if self.n_seasonal() > 0 {
            s += state[self.seasonal_start()];
        }
        let a0 = self.ar_start();
        s += psi.iter().enumerate().map(|(l, c)| c * state[a0 + l]).sum::<f64>();
        let b0 = self.beta_start();
        s += z_t.enumerate().map(|(m, z)| z * state[b0 + m]).sum::<f64>();
        s
    }
}

/// Variance parameters of one draw. Absent components are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variances {
    pub observation: f64,
    pub level: f64,
    pub slope: f64,
    pub seasonal: Option<f64>,
    pub autoregressive: f64,
    pub regression: Option<f64>,
}

/// One retained MCMC draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BstsDraw {
    pub psi: Vec<f64>,
    pub variances: Variances,
    /// `T x dim` state path, row-major.
    pub states: Vec<f64>,
    /// `eps_t = y_t - l_t - s_t - sum psi e - sum beta Z`.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BstsPosterior {
    pub layout: StateLayout,
    pub n_obs: usize,
    pub draws: Vec<BstsDraw>,
}

impl BstsPosterior {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn state(&self, draw: usize, t: usize) -> &[f64] {
        let n = self.layout.dim();
        &self.draws[draw].states[t * n..(t + 1) * n]
    }

    /// Path of one state component for one draw.
    pub fn component_path(&self, draw: usize, component: usize) -> Vec<f64> {
        (0..self.n_obs).map(|t| self.state(draw, t)[component]).collect()
    }

    pub fn level_path(&self, draw: usize) -> Vec<f64> {
        self.component_path(draw, StateLayout::LEVEL)
    }

    /// Posterior mean of a state component at every time point.
    pub fn mean_component_path(&self, component: usize) -> Vec<f64> {
        let k = self.draws.len() as f64;
        let mut out = vec![0.0; self.n_obs];
        for d in 0..self.draws.len() {
            for (t, o) in out.iter_mut().enumerate() {
                *o += self.state(d, t)[component] / k;
            }
        }
        out
    }

    /// Draws of a scalar summary, in retention order.
    pub fn trace(&self, f: impl Fn(&BstsDraw) -> f64) -> Vec<f64> {
        self.draws.iter().map(f).collect()
    }

    /// Effective sample size of a scalar trace (initial positive sequence estimator).
    pub fn effective_sample_size(trace: &[f64]) -> f64 {
        let n = trace.len();
        if n < 4 {
            return n as f64;
        }
        let m = trace.iter().sum::<f64>() / n as f64;
        let c0 = trace.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        if c0 <= 0.0 {
            return n as f64;
        }
        let acf = |lag: usize| {
            (0..n - lag)
                .map(|i| (trace[i] - m) * (trace[i + lag] - m))
                .sum::<f64>()
                / (n as f64 * c0)
        };
        let mut sum = 0.0;
        let mut lag = 1;
        while lag + 1 < n {
            let pair = acf(lag) + acf(lag + 1);
            if pair <= 0.0 {
                break;
            }
            sum += pair;
            lag += 2;
        }
        n as f64 / (1.0 + 2.0 * sum)
    }
}

fn draw_inv_gamma<R: Rng + ?Sized>(rng: &mut R, prior: InvGammaPrior, count: usize, ss: f64) -> f64 {
    let shape = prior.shape + 0.5 * count as f64;
    let rate = prior.rate + 0.5 * ss;
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    let x: f64 = g.sample(rng);
    // guard the reciprocal against a zero gamma variate
    1.0 / x.max(1e-300)
}

/// One univariate slice-sampling update (stepping out, then shrinkage) from `x0`, with
/// the support restricted to `lower < x < upper`.
fn slice_sample<R: Rng + ?Sized>(
    rng: &mut R,
    log_f: impl Fn(f64) -> f64,
    x0: f64,
    (lower, upper): (f64, f64),
    width: f64,
) -> f64 {
    let f = |x: f64| if x > lower && x < upper { log_f(x) } else { f64::NEG_INFINITY };
    let f0 = f(x0);
    if !f0.is_finite() {
        return x0;
    }
    let level = f0 + rng.random::<f64>().max(1e-300).ln();
    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    for _ in 0..60 {
        if f(lo) <= level {
            break;
        }
        lo -= width;
    }
    for _ in 0..60 {
        if f(hi) <= level {
            break;
        }
        hi += width;
    }
    lo = lo.max(lower);
    hi = hi.min(upper);
    for _ in 0..200 {
        let x = rng.random_range(lo..hi);
        if f(x) > level {
            return x;
        }
        if x < x0 {
            lo = x;
        } else {
            hi = x;
        }
    }
    x0
}

/// Fits the structural model to one series.
///
/// `covariates` is `M x T` (use a `0 x T` matrix for none).
pub fn fit_bsts(series: &[f64], covariates: &Matrix, config: &BstsConfig) -> Result<BstsPosterior> {
    config.check()?;
    let t_len = series.len();
    let p = config.ar_order;
    if t_len <= p + 2 {
        return Err(Error::precondition(format!(
            "series of length {t_len} is too short for AR order {p} (need T > p + 2)"
        )));
    }
    if covariates.cols() != t_len {
        return Err(Error::Shape {
            axis: "year",
            expected: t_len,
            found: covariates.cols(),
        });
    }
    if series.iter().chain(covariates.as_slice()).any(|v| !v.is_finite()) {
        return Err(Error::precondition("series and covariates must be finite"));
    }
    let m_cov = covariates.rows();
    let layout = StateLayout::new(p, config.seasonal_period, m_cov);
    let n = layout.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mean_y = series.iter().sum::<f64>() / t_len as f64;
    // floored relative to the data scale so a flat series does not collapse the filter
    let var_floor = 1e-6 * mean_y.abs().max(1.0).powi(2);
    let var_y = (series.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / (t_len as f64 - 1.0)).max(var_floor);

    let mut psi = vec![0.0; p];
    let mut var = Variances {
        observation: 0.5 * var_y,
        level: 0.01 * var_y,
        slope: 1e-4 * var_y,
        seasonal: (layout.n_seasonal() > 0).then_some(0.01 * var_y),
        autoregressive: 0.1 * var_y,
        regression: (m_cov > 0).then_some(1e-4),
    };

    let mut init_mean = vec![0.0; n];
    init_mean[StateLayout::LEVEL] = series[0];
    let mut init_cov = vec![0.0; n * n];
    for i in 0..n {
        init_cov[i * n + i] = DIFFUSE_VARIANCE;
    }
    // AR lags start from a fixed data-scaled prior so that psi and the AR variance keep
    // exact conjugate conditionals.
    for l in 0..p {
        let i = layout.ar_start() + l;
        init_cov[i * n + i] = var_y;
    }

    let mut ss = StateSpace {
        dim: n,
        transition: layout.transition(&psi),
        state_var: layout.state_variances(&var),
        obs_var: var.observation,
        loadings: vec![0.0; t_len * n],
        init_mean,
        init_cov,
    };
    let mut store = FilterStore::default();
    let mut states = vec![0.0; t_len * n];
    let mut draws = Vec::with_capacity(config.retained());
    let pri = &config.priors;
    let a0 = layout.ar_start();
    let b0 = layout.beta_start();
    let s0 = layout.seasonal_start();
    let ns = layout.n_seasonal();

    for iter in 0..config.n_iter {
        // (a) states
        ss.transition = layout.transition(&psi);
        ss.state_var = layout.state_variances(&var);
        ss.obs_var = var.observation;
        for t in 0..t_len {
            let row = &mut ss.loadings[t * n..(t + 1) * n];
            layout.loading(&psi, (0..m_cov).map(|m| covariates[(m, t)]), row);
        }
        ss.sample_states(series, &mut rng, &mut store, &mut states)
            .map_err(|_| Error::NonFiniteLikelihood { iteration: iter })?;
        let st = |t: usize| &states[t * n..(t + 1) * n];

        // (b) variances
        let mut ss_obs = 0.0;
        for t in 0..t_len {
            let e = series[t] - layout.signal(&psi, (0..m_cov).map(|m| covariates[(m, t)]), st(t));
            ss_obs += e * e;
        }
        var.observation = draw_inv_gamma(&mut rng, pri.observation, t_len, ss_obs);

        let (mut ss_level, mut ss_slope, mut ss_seas, mut ss_ar, mut ss_beta) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for t in 0..t_len - 1 {
            let (x, xn) = (st(t), st(t + 1));
            let nu = xn[StateLayout::LEVEL] - x[StateLayout::LEVEL] - x[StateLayout::SLOPE];
            ss_level += nu * nu;
            let zeta = xn[StateLayout::SLOPE] - x[StateLayout::SLOPE];
            ss_slope += zeta * zeta;
            if ns > 0 {
                let w = xn[s0] + (0..ns).map(|i| x[s0 + i]).sum::<f64>();
                ss_seas += w * w;
            }
            let eta = xn[a0] - (0..p).map(|l| psi[l] * x[a0 + l]).sum::<f64>();
            ss_ar += eta * eta;
            for m in 0..m_cov {
                let lam = xn[b0 + m] - x[b0 + m];
                ss_beta += lam * lam;
            }
        }
        var.level = draw_inv_gamma(&mut rng, pri.level, t_len - 1, ss_level);
        var.slope = draw_inv_gamma(&mut rng, pri.slope, t_len - 1, ss_slope);
        if ns > 0 {
            var.seasonal = Some(draw_inv_gamma(&mut rng, pri.seasonal, t_len - 1, ss_seas));
        }
        var.autoregressive = draw_inv_gamma(&mut rng, pri.autoregressive, t_len - 1, ss_ar);
        if m_cov > 0 {
            var.regression = Some(draw_inv_gamma(&mut rng, pri.regression, m_cov * (t_len - 1), ss_beta));
        }

        // (c) psi: Gaussian likelihood from the observation and AR transition equations,
        // truncated to (-1, 1) componentwise
        let mut prec = vec![0.0; p * p];
        let mut lin = vec![0.0; p];
        for t in 0..t_len {
            let x = st(t);
            let zpart: f64 = (0..m_cov).map(|m| covariates[(m, t)] * x[b0 + m]).sum();
            let seas = if ns > 0 { x[s0] } else { 0.0 };
            let r = series[t] - x[StateLayout::LEVEL] - seas - zpart;
            for i in 0..p {
                lin[i] += r * x[a0 + i] / var.observation;
                for j in 0..p {
                    prec[i * p + j] += x[a0 + i] * x[a0 + j] / var.observation;
                }
            }
            if t + 1 < t_len {
                let target = st(t + 1)[a0];
                for i in 0..p {
                    lin[i] += target * x[a0 + i] / var.autoregressive;
                    for j in 0..p {
                        prec[i * p + j] += x[a0 + i] * x[a0 + j] / var.autoregressive;
                    }
                }
            }
        }
        for j in 0..p {
            let pjj = prec[j * p + j];
            if pjj <= 0.0 {
                psi[j] = rng.random_range(-1.0..1.0);
                continue;
            }
            let others: f64 = (0..p).filter(|&k| k != j).map(|k| prec[j * p + k] * psi[k]).sum();
            let mean = (lin[j] - others) / pjj;
            psi[j] = truncated_normal(&mut rng, mean, pjj.sqrt().recip(), -1.0, 1.0);
            // keep strictly inside the open interval
            psi[j] = psi[j].clamp(-1.0 + 1e-12, 1.0 - 1e-12);
        }

        // (c') psi again with the AR innovations held fixed instead of the AR states
        {
            let mut target = vec![0.0; t_len];
            let mut innov = vec![0.0; t_len];
            for t in 0..t_len {
                let x = st(t);
                let zpart: f64 = (0..m_cov).map(|m| covariates[(m, t)] * x[b0 + m]).sum();
                let seas = if ns > 0 { x[s0] } else { 0.0 };
                target[t] = series[t] - x[StateLayout::LEVEL] - seas - zpart;
                if t + 1 < t_len {
                    innov[t + 1] = st(t + 1)[a0] - (0..p).map(|l| psi[l] * x[a0 + l]).sum::<f64>();
                }
            }
            let init: Vec<f64> = st(0)[a0..a0 + p].to_vec();
            let rebuild = |coef: &[f64], out: &mut [f64]| {
                out[..p].copy_from_slice(&init);
                for t in 1..t_len {
                    let e = (0..p).map(|l| coef[l] * out[(t - 1) * p + l]).sum::<f64>() + innov[t];
                    out.copy_within((t - 1) * p..t * p - 1, t * p + 1);
                    out[t * p] = e;
                }
            };
            let mut lags = vec![0.0; t_len * p];
            let mut trial = psi.clone();
            for j in 0..p {
                let obs_var = var.observation;
                let log_f = |v: f64| {
                    let mut coef = trial.clone();
                    coef[j] = v;
                    let mut buf = vec![0.0; t_len * p];
                    rebuild(&coef, &mut buf);
                    -(0..t_len)
                        .map(|t| {
                            let r = target[t] - (0..p).map(|l| coef[l] * buf[t * p + l]).sum::<f64>();
                            r * r
                        })
                        .sum::<f64>()
                        / (2.0 * obs_var)
                };
                trial[j] = slice_sample(&mut rng, log_f, trial[j], (-1.0 + 1e-12, 1.0 - 1e-12), 0.5);
            }
            rebuild(&trial, &mut lags);
            psi = trial;
            for t in 0..t_len {
                states[t * n + a0..t * n + a0 + p].copy_from_slice(&lags[t * p..(t + 1) * p]);
            }
        }
        let st = |t: usize| &states[t * n..(t + 1) * n];

        // (d) joint rescaling e -> c e, psi -> psi / c, var_ar -> c^2 var_ar, which leaves the
        // observation signal unchanged and moves along the psi / AR-variance ridge
        let (mut e2, mut em, mut m2) = (0.0, 0.0, 0.0);
        let s_init: f64 = (0..p).map(|l| st(0)[a0 + l].powi(2)).sum();
        for t in 0..t_len - 1 {
            let m: f64 = (0..p).map(|l| psi[l] * st(t)[a0 + l]).sum();
            let e = st(t + 1)[a0];
            e2 += e * e;
            em += e * m;
            m2 += m * m;
        }
        let psi_max = psi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let (a_ar, b_ar, v_ar) = (pri.autoregressive.shape, pri.autoregressive.rate, var.autoregressive);
        let log_target = |u: f64| {
            let (c, ic2) = (u.exp(), (-2.0 * u).exp());
            -2.0 * a_ar * u - b_ar * ic2 / v_ar - c * c * s_init / (2.0 * var_y)
                - (e2 - 2.0 * em / c + m2 * ic2) / (2.0 * v_ar)
        };
        let lower = if psi_max > 0.0 { (psi_max / (1.0 - 1e-12)).ln() } else { f64::NEG_INFINITY };
        let c = slice_sample(&mut rng, log_target, 0.0, (lower, f64::INFINITY), 1.0).exp();
        if c.is_finite() && c > 0.0 && c != 1.0 {
            psi.iter_mut().for_each(|v| *v /= c);
            var.autoregressive *= c * c;
            for t in 0..t_len {
                for l in 0..p {
                    states[t * n + a0 + l] *= c;
                }
            }
        }
        let st = |t: usize| &states[t * n..(t + 1) * n];

        if iter >= config.burn_in {
            let residuals: Vec<f64> = (0..t_len)
                .map(|t| series[t] - layout.signal(&psi, (0..m_cov).map(|m| covariates[(m, t)]), st(t)))
                .collect();
            draws.push(BstsDraw {
                psi: psi.clone(),
                variances: var,
                states: states.clone(),
                residuals,
            });
        }
    }

    Ok(BstsPosterior {
        layout,
        n_obs: t_len,
        draws,
    })
}

/// Floor/ceiling applied to pseudo-observations.
pub const PSEUDO_OBS_EPS: f64 = 1e-12;

/// Maps each draw's residuals through its own N(0, sigma_eps^2) CDF and averages over draws.
///
/// Returns a `D x T` matrix with entries strictly inside (0, 1).
pub fn extract_pseudo_observations(posteriors: &[&BstsPosterior]) -> Result<Matrix> {
    let first = posteriors
        .first()
        .ok_or_else(|| Error::precondition("at least one posterior is required"))?;
    let t_len = first.n_obs;
    let n_draws = first.n_draws();
    if n_draws == 0 {
        return Err(Error::EmptyPosterior);
    }
    let mut out = Matrix::<f64>::zeros(posteriors.len(), t_len);
    for (d, post) in posteriors.iter().enumerate() {
        if post.n_obs != t_len {
            return Err(Error::Shape {
                axis: "year",
                expected: t_len,
                found: post.n_obs,
            });
        }
        if post.n_draws() != n_draws {
            return Err(Error::Shape {
                axis: "draw",
                expected: n_draws,
                found: post.n_draws(),
            });
        }
        let row = out.row_mut(d);
        for (i, draw) in post.draws.iter().enumerate() {
            let v = draw.variances.observation;
            if !(v > 0.0) {
                return Err(Error::ZeroVariance { draw: i });
            }
            let sd = v.sqrt();
            for (t, e) in draw.residuals.iter().enumerate() {
                row[t] += norm_cdf(e / sd);
            }
        }
        for u in row.iter_mut() {
            *u = (*u / n_draws as f64).clamp(PSEUDO_OBS_EPS, 1.0 - PSEUDO_OBS_EPS);
        }
    }
    Ok(out)
}
