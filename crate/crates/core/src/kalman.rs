//! Linear-Gaussian state space with a scalar observation: Kalman filtering, exact log
//! likelihood, and forward-filtering backward-sampling (FFBS) of the state path.
//!
//! ```text
//! y_t     = z_t' x_t + eps_t,      eps_t ~ N(0, h)
//! x_{t+1} = G x_t + w_t,           w_t   ~ N(0, diag(q))
//! x_1     ~ N(a_1, P_1)
//! ```

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct StateSpace {
    pub dim: usize,
    /// `dim x dim`, row-major.
    pub transition: Vec<f64>,
    /// Diagonal of the state noise covariance; zeros are allowed.
    pub state_var: Vec<f64>,
    pub obs_var: f64,
    /// `T x dim`, row-major; row `t` is the observation loading at time `t`.
    pub loadings: Vec<f64>,
    pub init_mean: Vec<f64>,
    /// `dim x dim`, row-major.
    pub init_cov: Vec<f64>,
}

/// Filter output kept for the backward pass.
#[derive(Debug, Default, Clone)]
pub struct FilterStore {
    n: usize,
    t: usize,
    /// filtered means, `T x n`
    mean: Vec<f64>,
    /// filtered covariances, `T x n x n`
    cov: Vec<f64>,
    /// one-step predicted covariances `P_{t+1|t}`, `T x n x n`
    pred_cov: Vec<f64>,
    scratch: Vec<f64>,
}

impl FilterStore {
    fn resize(&mut self, n: usize, t: usize) {
        self.n = n;
        self.t = t;
        self.mean.resize(t * n, 0.0);
        self.cov.resize(t * n * n, 0.0);
        self.pred_cov.resize(t * n * n, 0.0);
        self.scratch.resize(6 * n * n + 4 * n, 0.0);
    }

    pub fn filtered_mean(&self, t: usize) -> &[f64] {
        &self.mean[t * self.n..(t + 1) * self.n]
    }

    pub fn filtered_cov(&self, t: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.cov[t * nn..(t + 1) * nn]
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;

impl StateSpace {
    pub fn n_obs(&self) -> usize {
        self.loadings.len() / self.dim
    }

    /// Runs the Kalman filter and returns the exact log marginal likelihood of `y`.
    pub fn filter(&self, y: &[f64], store: &mut FilterStore) -> f64 {
        let n = self.dim;
        let nn = n * n;
        let t_len = y.len();
        debug_assert_eq!(self.loadings.len(), t_len * n);
        store.resize(n, t_len);
        let (a, rest) = store.scratch.split_at_mut(n);
        let (p, rest) = rest.split_at_mut(nn);
        let (pz, rest) = rest.split_at_mut(n);
        let (tmp, rest) = rest.split_at_mut(nn);
        let (an, _) = rest.split_at_mut(n);
        a.copy_from_slice(&self.init_mean);
        p.copy_from_slice(&self.init_cov);
        let g = &self.transition;
        let mut loglik = 0.0;

        for t in 0..t_len {
            let z = &self.loadings[t * n..(t + 1) * n];
            // pz = P z, f = z' P z + h
            for i in 0..n {
                pz[i] = (0..n).map(|j| p[i * n + j] * z[j]).sum();
            }
            let f = z.iter().zip(pz.iter()).map(|(zi, pi)| zi * pi).sum::<f64>() + self.obs_var;
            let v = y[t] - z.iter().zip(a.iter()).map(|(zi, ai)| zi * ai).sum::<f64>();
            loglik += -0.5 * (LN_2PI + f.ln() + v * v / f);
            // update
            for i in 0..n {
                a[i] += pz[i] * v / f;
            }
            for i in 0..n {
                for j in 0..n {
                    p[i * n + j] -= pz[i] * pz[j] / f;
                }
            }
            symmetrize(p, n);
            store.mean[t * n..(t + 1) * n].copy_from_slice(a);
            store.cov[t * nn..(t + 1) * nn].copy_from_slice(p);
            // predict: a = G a, P = G P G' + Q
            for i in 0..n {
                an[i] = (0..n).map(|j| g[i * n + j] * a[j]).sum();
            }
            a.copy_from_slice(an);
            for i in 0..n {
                for j in 0..n {
                    tmp[i * n + j] = (0..n).map(|k| g[i * n + k] * p[k * n + j]).sum();
                }
            }
            for i in 0..n {
                for j in 0..n {
                    p[i * n + j] = (0..n).map(|k| tmp[i * n + k] * g[j * n + k]).sum();
                }
                p[i * n + i] += self.state_var[i];
            }
            symmetrize(p, n);
            store.pred_cov[t * nn..(t + 1) * nn].copy_from_slice(p);
        }
        loglik
    }

    pub fn log_likelihood(&self, y: &[f64]) -> f64 {
        self.filter(y, &mut FilterStore::default())
    }

    /// Draws one state path from `p(x_{1:T} | y_{1:T})` into `out` (`T x dim`, row-major)
    /// and returns the log marginal likelihood computed on the way.
    pub fn sample_states<R: Rng + ?Sized>(
        &self,
        y: &[f64],
        rng: &mut R,
        store: &mut FilterStore,
        out: &mut [f64],
    ) -> Result<f64> {
        let loglik = self.filter(y, store);
        if !loglik.is_finite() {
            return Err(Error::Degenerate("non-finite Kalman log-likelihood".into()));
        }
        let n = self.dim;
        let nn = n * n;
        let t_len = y.len();
        debug_assert_eq!(out.len(), t_len * n);
        let g = &self.transition;
        let mut chol = vec![0.0; nn];
        let mut cov = vec![0.0; nn];
        let mut mean = vec![0.0; n];
        let mut jmat = vec![0.0; nn];
        let mut gp = vec![0.0; nn];
        let mut resid = vec![0.0; n];
        let mut noise = vec![0.0; n];

        // x_T ~ N(m_T, P_T)
        cov.copy_from_slice(store.filtered_cov(t_len - 1));
        psd_cholesky(&cov, n, &mut chol);
        draw_mvn(rng, store.filtered_mean(t_len - 1), &chol, n, &mut noise, &mut out[(t_len - 1) * n..]);

        for t in (0..t_len - 1).rev() {
            let m = store.filtered_mean(t);
            let pt = store.filtered_cov(t);
            let pred = &store.pred_cov[t * nn..(t + 1) * nn];
            // gp = G P_t  (n x n); J' = pred^{-1} G P_t  => J = P_t G' pred^{-1}
            for i in 0..n {
                for j in 0..n {
                    gp[i * n + j] = (0..n).map(|k| g[i * n + k] * pt[k * n + j]).sum();
                }
            }
            psd_cholesky(pred, n, &mut chol);
            // jmat holds J' column by column: solve pred * X = gp
            jmat.copy_from_slice(&gp);
            if !cholesky_solve_columns(&chol, n, &mut jmat) {
                return Err(Error::Degenerate("singular predicted state covariance".into()));
            }
            // residual x_{t+1} - G m_t
            let next = &out[(t + 1) * n..(t + 2) * n];
            for i in 0..n {
                resid[i] = next[i] - (0..n).map(|k| g[i * n + k] * m[k]).sum::<f64>();
            }
            for i in 0..n {
                mean[i] = m[i] + (0..n).map(|k| jmat[k * n + i] * resid[k]).sum::<f64>();
            }
            // cov = P_t - J G P_t = P_t - J'^T gp
            for i in 0..n {
                for j in 0..n {
                    cov[i * n + j] = pt[i * n + j] - (0..n).map(|k| jmat[k * n + i] * gp[k * n + j]).sum::<f64>();
                }
            }
            symmetrize(&mut cov, n);
            psd_cholesky(&cov, n, &mut chol);
            let (head, tail) = out.split_at_mut((t + 1) * n);
            let _ = tail;
            draw_mvn(rng, &mean, &chol, n, &mut noise, &mut head[t * n..]);
        }
        Ok(loglik)
    }
}

fn symmetrize(p: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (p[i * n + j] + p[j * n + i]);
            p[i * n + j] = v;
            p[j * n + i] = v;
        }
    }
}

/// Lower Cholesky factor of a positive semi-definite matrix; pivots that fall below a
/// relative tolerance are treated as exact zeros and their column is dropped.
pub fn psd_cholesky(a: &[f64], n: usize, l: &mut [f64]) {
    l.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..n {
        // round-off in the pivot scales with its own diagonal, not the largest one
        let tol = 1e-13 * a[j * n + j].abs();
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= tol {
            continue;
        }
        let s = d.sqrt();
        l[j * n + j] = s;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / s;
        }
    }
}

/// Solves `L L' X = B` in place for every column of `b` (`n x n`, row-major).
fn cholesky_solve_columns(l: &[f64], n: usize, b: &mut [f64]) -> bool {
    for i in 0..n {
        if l[i * n + i] <= 0.0 {
            return false;
        }
    }
    for c in 0..n {
        for i in 0..n {
            let mut v = b[i * n + c];
            for k in 0..i {
                v -= l[i * n + k] * b[k * n + c];
            }
            b[i * n + c] = v / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = b[i * n + c];
            for k in i + 1..n {
                v -= l[k * n + i] * b[k * n + c];
            }
            b[i * n + c] = v / l[i * n + i];
        }
    }
    true
}

fn draw_mvn<R: Rng + ?Sized>(rng: &mut R, mean: &[f64], chol: &[f64], n: usize, noise: &mut [f64], out: &mut [f64]) {
    for v in noise.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for i in 0..n {
        out[i] = mean[i] + (0..=i).map(|k| chol[i * n + k] * noise[k]).sum::<f64>();
    }
}
