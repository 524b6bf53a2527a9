use serde::{Deserialize, Serialize};

use super::family::{link, log_density, CopulaFamily};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Parameter recursion `theta_t = g(omega + alpha theta_{t-1} + sum_m gamma_m x_{m,t})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaEvolution {
    pub family: CopulaFamily,
    pub omega: f64,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub theta_init: f64,
}

impl CopulaEvolution {
    /// The independence family; every coefficient is zero.
    pub fn independence(n_covariates: usize) -> Self {
        Self {
            family: CopulaFamily::Independence,
            omega: 0.0,
            alpha: 0.0,
            gamma: vec![0.0; n_covariates],
            theta_init: 0.0,
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.gamma.len()
    }

    /// Parameters as a flat vector `(omega, alpha, gamma...)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.omega, self.alpha];
        v.extend_from_slice(&self.gamma);
        v
    }

    pub fn with_params(&self, x: &[f64]) -> Self {
        Self {
            family: self.family,
            omega: x[0],
            alpha: x[1],
            gamma: x[2..].to_vec(),
            theta_init: self.theta_init,
        }
    }

    /// `theta_1..theta_T` for covariates `x_panel` (`M x T`).
    pub fn theta_path(&self, x_panel: &Matrix) -> Vec<f64> {
        let mut theta = self.theta_init;
        let mut x = vec![0.0; x_panel.rows()];
        (0..x_panel.cols())
            .map(|t| {
                for (m, xm) in x.iter_mut().enumerate() {
                    *xm = x_panel[(m, t)];
                }
                theta = evolve_theta(self, theta, &x);
                theta
            })
            .collect()
    }
}

/// One step of the parameter recursion.
pub fn evolve_theta(evo: &CopulaEvolution, theta_prev: f64, x_t: &[f64]) -> f64 {
    if evo.family.is_independence() {
        return 0.0;
    }
    debug_assert_eq!(x_t.len(), evo.gamma.len());
    let raw = evo.omega + evo.alpha * theta_prev + evo.gamma.iter().zip(x_t).map(|(g, x)| g * x).sum::<f64>();
    link(evo.family, raw)
}

fn check_panels(u_panel: &Matrix, x_panel: &Matrix, evo: &CopulaEvolution) -> Result<()> {
    if u_panel.rows() != 2 {
        return Err(Error::Shape {
            axis: "region",
            expected: 2,
            found: u_panel.rows(),
        });
    }
    if x_panel.cols() != u_panel.cols() {
        return Err(Error::Shape {
            axis: "year",
            expected: u_panel.cols(),
            found: x_panel.cols(),
        });
    }
    if x_panel.rows() != evo.n_covariates() {
        return Err(Error::Shape {
            axis: "index",
            expected: evo.n_covariates(),
            found: x_panel.rows(),
        });
    }
    Ok(())
}

/// Pseudo log-likelihood `sum_t ln c(u_{1,t}, u_{2,t} | theta_t)`.
pub fn copula_pseudo_loglik(u_panel: &Matrix, x_panel: &Matrix, evo: &CopulaEvolution) -> Result<f64> {
    check_panels(u_panel, x_panel, evo)?;
    if evo.family.is_independence() {
        return Ok(0.0);
    }
    let thetas = evo.theta_path(x_panel);
    let mut total = 0.0;
    for (t, &theta) in thetas.iter().enumerate() {
        let v = log_density(evo.family, u_panel[(0, t)], u_panel[(1, t)], theta)
            .map_err(|_| Error::NonFiniteTerm { t })?;
        if !v.is_finite() {
            return Err(Error::NonFiniteTerm { t });
        }
        total += v;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clayton(omega: f64, alpha: f64, gamma: Vec<f64>) -> CopulaEvolution {
        CopulaEvolution {
            family: CopulaFamily::Clayton,
            omega,
            alpha,
            gamma,
            theta_init: 1.0,
        }
    }

    #[test]
    fn constant_evolution() {
        let evo = clayton(0.3, 0.0, vec![0.0]);
        let x = Matrix::from_fn(1, 10, |_, t| t as f64);
        for th in evo.theta_path(&x) {
            assert_eq!(th, 0.3f64.exp());
        }
        assert_eq!(evolve_theta(&clayton(0.0, 1.0, vec![]), 0.0, &[]), 1.0);
    }

    #[test]
    fn independence_loglik_is_zero() {
        let u = Matrix::from_fn(2, 5, |d, t| 0.1 + 0.15 * t as f64 + 0.01 * d as f64);
        let evo = CopulaEvolution::independence(0);
        assert_eq!(copula_pseudo_loglik(&u, &Matrix::zeros(0, 5), &evo).unwrap(), 0.0);
    }

    #[test]
    fn three_regions_are_rejected() {
        let u = Matrix::filled(3, 5, 0.5);
        let evo = clayton(0.0, 0.0, vec![]);
        assert!(matches!(
            copula_pseudo_loglik(&u, &Matrix::zeros(0, 5), &evo),
            Err(Error::Shape { axis: "region", .. })
        ));
    }
}
