//! Forward simulation of the full generative model from known parameters.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bsts::{StateLayout, Variances};
use crate::copula::{evolve_theta, open_uniform, sample_conditional, theta_to_tau, CopulaEvolution};
use crate::data::{CovariatePanel, RegionMeta, YieldPanel};
use crate::error::{Error, Result};
use crate::gev::GevDynamicFit;
use crate::matrix::Matrix;
use crate::special::norm_ppf;

/// True structural-model parameters of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTruth {
    pub level: f64,
    pub slope: f64,
    pub psi: Vec<f64>,
    /// Starting regression coefficients, one per index.
    pub beta: Vec<f64>,
    pub variances: Variances,
}

/// True dynamic GEV parameters of one covariate series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevTruth {
    pub mu0: f64,
    pub phi: f64,
    pub sigma_mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GevTruth {
    fn as_fit(&self) -> GevDynamicFit {
        GevDynamicFit {
            phi: self.phi,
            sigma_mu: self.sigma_mu,
            sigma: self.sigma,
            xi: self.xi,
            mu_path: vec![],
            log_likelihood: f64::NAN,
            marginal_log_likelihood: f64::NAN,
            converged: true,
            evaluations: 0,
        }
    }
}

/// Everything needed to generate a synthetic panel.
///
/// With more than two regions, every region is coupled to the first one through the
/// same copula (a star-shaped vine).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub regions: Vec<RegionMeta>,
    pub start_year: i32,
    pub n_years: usize,
    pub seasonal_period: usize,
    pub index_names: Vec<String>,
    pub region_truth: Vec<RegionTruth>,
    /// `gev[d][m]`.
    pub gev: Vec<Vec<GevTruth>>,
    pub copula: CopulaEvolution,
}

impl SyntheticSpec {
    /// Two neighbouring regions with one index, AR(1) marginals and the given copula.
    pub fn two_region(copula: CopulaEvolution, n_years: usize) -> Self {
        let region = RegionTruth {
            level: 100.0,
            slope: 0.5,
            psi: vec![0.5],
            beta: vec![0.2],
            variances: Variances {
                observation: 4.0,
                level: 0.1,
                slope: 0.001,
                seasonal: None,
                autoregressive: 1.0,
                regression: Some(1e-4),
            },
        };
        let gev = GevTruth {
            mu0: 0.0,
            phi: 0.5,
            sigma_mu: 1.0,
            sigma: 1.5,
            xi: -0.2,
        };
        Self {
            regions: vec![
                RegionMeta::new("R1", "Region one", 43.65, -79.38),
                RegionMeta::new("R2", "Region two", 45.42, -75.70),
            ],
            start_year: 1900,
            n_years,
            seasonal_period: 1,
            index_names: vec!["TXx".into()],
            region_truth: vec![region.clone(), region],
            gev: vec![vec![gev]; 2],
            copula,
        }
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_indices(&self) -> usize {
        self.index_names.len()
    }

    pub fn layout(&self, d: usize) -> StateLayout {
        StateLayout::new(self.region_truth[d].psi.len(), self.seasonal_period, self.n_indices())
    }

    pub fn check(&self) -> Result<()> {
        let d = self.n_regions();
        let m = self.n_indices();
        if d == 0 || self.n_years == 0 {
            return Err(Error::precondition("synthetic panel needs at least one region and one year"));
        }
        if self.region_truth.len() != d || self.gev.len() != d {
            return Err(Error::Shape {
                axis: "region",
                expected: d,
                found: self.region_truth.len().min(self.gev.len()),
            });
        }
        if self.copula.n_covariates() != m && !self.copula.family.is_independence() {
            return Err(Error::Shape {
                axis: "index",
                expected: m,
                found: self.copula.n_covariates(),
            });
        }
        for (r, g) in self.region_truth.iter().zip(&self.gev) {
            if r.beta.len() != m || g.len() != m {
                return Err(Error::Shape {
                    axis: "index",
                    expected: m,
                    found: r.beta.len().min(g.len()),
                });
            }
            if r.psi.iter().any(|p| p.abs() >= 1.0) {
                return Err(Error::precondition("AR coefficients must lie in (-1, 1)"));
            }
            let v = &r.variances;
            let vars = [v.observation, v.level, v.slope, v.autoregressive, v.seasonal.unwrap_or(0.0), v.regression.unwrap_or(0.0)];
            if vars.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::precondition("true variances must be finite and non-negative"));
            }
            if g.iter().any(|t| !(t.sigma > 0.0) || !(t.sigma_mu >= 0.0) || t.phi.abs() >= 1.0) {
                return Err(Error::precondition("GEV truth needs sigma > 0, sigma_mu >= 0 and |phi| < 1"));
            }
        }
        Ok(())
    }
}

/// Latent state of the generator after the last emitted year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticState {
    /// Structural state vector per region.
    pub states: Vec<Vec<f64>>,
    /// GEV location per region and index.
    pub mu: Vec<Vec<f64>>,
    pub theta: f64,
}

impl SyntheticState {
    pub fn initial(spec: &SyntheticSpec) -> Self {
        let states = (0..spec.n_regions())
            .map(|d| {
                let layout = spec.layout(d);
                let truth = &spec.region_truth[d];
                let mut x = vec![0.0; layout.dim()];
                x[StateLayout::LEVEL] = truth.level;
                x[StateLayout::SLOPE] = truth.slope;
                x[layout.beta_start()..].copy_from_slice(&truth.beta);
                x
            })
            .collect();
        Self {
            states,
            mu: spec.gev.iter().map(|g| g.iter().map(|t| t.mu0).collect()).collect(),
            theta: spec.copula.theta_init,
        }
    }
}

/// One simulated year.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStep {
    /// `z[d][m]`.
    pub z: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub theta: f64,
    pub u: Vec<f64>,
    pub residuals: Vec<f64>,
    pub yields: Vec<f64>,
}

/// Advances the generator by one year.
pub fn synthetic_step<R: Rng + ?Sized>(spec: &SyntheticSpec, state: &mut SyntheticState, rng: &mut R) -> Result<SyntheticStep> {
    let n_reg = spec.n_regions();
    let m_idx = spec.n_indices();
    let mut z = vec![vec![0.0; m_idx]; n_reg];
    for d in 0..n_reg {
        for m in 0..m_idx {
            let (mu, zz) = crate::gev::simulate_gev_step(&spec.gev[d][m].as_fit(), state.mu[d][m], rng);
            state.mu[d][m] = mu;
            z[d][m] = zz;
        }
    }
    let x: Vec<f64> = (0..m_idx)
        .map(|m| z.iter().map(|zd| zd[m]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let family = spec.copula.family;
    let theta = evolve_theta(&spec.copula, state.theta, &x);
    state.theta = theta;
    let mut u = vec![0.0; n_reg];
    u[0] = open_uniform(rng);
    for d in 1..n_reg {
        u[d] = if family.is_independence() {
            open_uniform(rng)
        } else {
            sample_conditional(family, theta, u[0], rng)?
        };
    }
    let mut residuals = vec![0.0; n_reg];
    let mut yields = vec![0.0; n_reg];
    for d in 0..n_reg {
        let layout = spec.layout(d);
        let truth = &spec.region_truth[d];
        let g = layout.transition(&truth.psi);
        let q = layout.state_variances(&truth.variances);
        advance_state(&g, &q, &mut state.states[d], rng);
        let sd = truth.variances.observation.sqrt();
        residuals[d] = if sd > 0.0 {
            sd * norm_ppf(u[d].clamp(1e-15, 1.0 - 1e-15))
        } else {
            0.0
        };
        yields[d] = layout.signal(&truth.psi, z[d].iter().copied(), &state.states[d]) + residuals[d];
    }
    Ok(SyntheticStep {
        z,
        x,
        theta,
        u,
        residuals,
        yields,
    })
}

/// `x <- G x + w`, `w ~ N(0, diag(q))`.
pub(crate) fn advance_state<R: Rng + ?Sized>(g: &[f64], q: &[f64], x: &mut [f64], rng: &mut R) {
    let n = x.len();
    let prev = x.to_vec();
    for i in 0..n {
        let mut v: f64 = (0..n).map(|j| g[i * n + j] * prev[j]).sum();
        if q[i] > 0.0 {
            let e: f64 = rng.sample(StandardNormal);
            v += q[i].sqrt() * e;
        }
        x[i] = v;
    }
}

/// Generator output with the latent quantities kept for oracle comparisons.
#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub yields: YieldPanel,
    pub covariates: CovariatePanel,
    pub truth: TruthRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub theta_path: Vec<f64>,
    pub tau_path: Vec<f64>,
    /// `D x T` copula draws behind the residuals.
    pub u: Matrix,
    /// `D x T` observation noise.
    pub residuals: Matrix,
    /// GEV locations, one `M x T` matrix per region.
    pub mu: Vec<Matrix>,
    /// Generator state after the last year, for continuing the series.
    pub final_state: SyntheticState,
}

/// Simulates covariates, the dependence path, residuals and yields from `spec`.
pub fn generate_synthetic<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<SyntheticPanel> {
    spec.check()?;
    let (n_reg, m_idx, t_len) = (spec.n_regions(), spec.n_indices(), spec.n_years);
    let mut state = SyntheticState::initial(spec);
    let mut y = Matrix::zeros(n_reg, t_len);
    let mut u = Matrix::zeros(n_reg, t_len);
    let mut eps = Matrix::zeros(n_reg, t_len);
    let mut z = vec![Matrix::zeros(m_idx, t_len); n_reg];
    let mut mu = vec![Matrix::zeros(m_idx, t_len); n_reg];
    let mut theta_path = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let step = synthetic_step(spec, &mut state, rng)?;
        for d in 0..n_reg {
            y[(d, t)] = step.yields[d];
            u[(d, t)] = step.u[d];
            eps[(d, t)] = step.residuals[d];
            for m in 0..m_idx {
                z[d][(m, t)] = step.z[d][m];
                mu[d][(m, t)] = state.mu[d][m];
            }
        }
        theta_path.push(step.theta);
    }
    let family = spec.copula.family;
    let tau_path = theta_path
        .iter()
        .map(|&th| if family.is_independence() { Ok(0.0) } else { theta_to_tau(family, th) })
        .collect::<Result<Vec<_>>>()?;
    let years = (0..t_len as i32).map(|k| spec.start_year + k).collect();
    Ok(SyntheticPanel {
        yields: YieldPanel::new(spec.regions.clone(), years, y)?,
        covariates: if m_idx == 0 {
            CovariatePanel::empty(n_reg, t_len)
        } else {
            CovariatePanel::new(spec.index_names.clone(), z)?
        },
        truth: TruthRecord {
            theta_path,
            tau_path,
            u,
            residuals: eps,
            mu,
            final_state: state,
        },
    })
}

/// Continues the generator `horizon` years past `state`; returns `D x horizon` yields.
pub fn continue_synthetic<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    state: &SyntheticState,
    horizon: usize,
    rng: &mut R,
) -> Result<Matrix> {
    let mut st = state.clone();
    let mut out = Matrix::zeros(spec.n_regions(), horizon);
    for h in 0..horizon {
        let step = synthetic_step(spec, &mut st, rng)?;
        for (d, v) in step.yields.iter().enumerate() {
            out[(d, h)] = *v;
        }
    }
    Ok(out)
}
