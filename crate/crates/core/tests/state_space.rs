use cropcast::bsts::{extract_pseudo_observations, fit_bsts, BstsDraw, BstsPosterior, StateLayout, Variances};
use cropcast::copula::CopulaEvolution;
use cropcast::data::BstsConfig;
use cropcast::forecast::{generate_synthetic, SyntheticSpec};
use cropcast::kalman::{FilterStore, StateSpace};
use cropcast::matrix::Matrix;
use cropcast::special::norm_cdf;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Level, slope and AR(1) lag with fixed parameters over five time points.
fn small_model() -> (StateSpace, Vec<f64>) {
    let layout = StateLayout::new(1, 1, 1);
    let psi = [0.6];
    let v = Variances {
        observation: 0.7,
        level: 0.3,
        slope: 0.05,
        seasonal: None,
        autoregressive: 0.4,
        regression: Some(0.02),
    };
    let n = layout.dim();
    let z = [0.5, -1.0, 2.0, 0.3, 1.1];
    let mut loadings = vec![0.0; 5 * n];
    for t in 0..5 {
        layout.loading(&psi, std::iter::once(z[t]), &mut loadings[t * n..(t + 1) * n]);
    }
    let mut init_cov = vec![0.0; n * n];
    for (i, v) in [2.0, 0.5, 1.0, 0.8].iter().enumerate() {
        init_cov[i * n + i] = *v;
    }
    init_cov[1] = 0.2;
    init_cov[n] = 0.2;
    let ss = StateSpace {
        dim: n,
        transition: layout.transition(&psi),
        state_var: layout.state_variances(&v),
        obs_var: v.observation,
        loadings,
        init_mean: vec![10.0, 0.5, 0.0, 1.0],
        init_cov,
    };
    (ss, vec![10.2, 11.9, 11.1, 13.4, 14.0])
}

/// Mean and covariance of the stacked states `(x_1..x_T)` and of `y`.
struct Dense {
    mx: DVector<f64>,
    sxx: DMatrix<f64>,
    my: DVector<f64>,
    syy: DMatrix<f64>,
    sxy: DMatrix<f64>,
}

fn dense(ss: &StateSpace, t_len: usize) -> Dense {
    let n = ss.dim;
    let g = DMatrix::from_row_slice(n, n, &ss.transition);
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&ss.state_var));
    let mut means = vec![DVector::from_column_slice(&ss.init_mean)];
    let mut marg = vec![DMatrix::from_row_slice(n, n, &ss.init_cov)];
    for t in 1..t_len {
        means.push(&g * &means[t - 1]);
        marg.push(&g * &marg[t - 1] * g.transpose() + &q);
    }
    let big = n * t_len;
    let mut sxx = DMatrix::zeros(big, big);
    for t in 0..t_len {
        let mut block = marg[t].clone();
        for s in t..t_len {
            // cov(x_s, x_t) = G^{s-t} P_t
            sxx.view_mut((s * n, t * n), (n, n)).copy_from(&block);
            sxx.view_mut((t * n, s * n), (n, n)).copy_from(&block.transpose());
            block = &g * block;
        }
    }
    let mut zmat = DMatrix::zeros(t_len, big);
    for t in 0..t_len {
        for i in 0..n {
            zmat[(t, t * n + i)] = ss.loadings[t * n + i];
        }
    }
    let mx = DVector::from_iterator(big, means.iter().flat_map(|m| m.iter().copied()));
    let my = &zmat * &mx;
    let syy = &zmat * &sxx * zmat.transpose() + DMatrix::identity(t_len, t_len) * ss.obs_var;
    let sxy = &sxx * zmat.transpose();
    Dense { mx, sxx, my, syy, sxy }
}

#[test]
fn kalman_likelihood_matches_dense_gaussian() {
    let (ss, y) = small_model();
    let d = dense(&ss, 5);
    let chol = d.syy.clone().cholesky().unwrap();
    let r = DVector::from_column_slice(&y) - &d.my;
    let quad = r.dot(&chol.solve(&r));
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let exact = -0.5 * (5.0 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
    assert!((ss.log_likelihood(&y) - exact).abs() < 1e-8, "{} vs {exact}", ss.log_likelihood(&y));
}

#[test]
fn ffbs_draws_match_dense_conditioning() {
    let (ss, y) = small_model();
    let d = dense(&ss, 5);
    let inv = d.syy.clone().cholesky().unwrap().inverse();
    let r = DVector::from_column_slice(&y) - &d.my;
    let mean = &d.mx + &d.sxy * &inv * r;
    let cov = &d.sxx - &d.sxy * &inv * d.sxy.transpose();

    let big = ss.dim * 5;
    let n_draws = 50_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = FilterStore::default();
    let mut out = vec![0.0; big];
    let mut sum = DVector::<f64>::zeros(big);
    let mut sum2 = DMatrix::<f64>::zeros(big, big);
    for _ in 0..n_draws {
        ss.sample_states(&y, &mut rng, &mut store, &mut out).unwrap();
        let x = DVector::from_column_slice(&out);
        sum += &x;
        sum2 += &x * x.transpose();
    }
    let nf = n_draws as f64;
    let m = &sum / nf;
    let c = &sum2 / nf - &m * m.transpose();
    for i in 0..big {
        let se = (cov[(i, i)] / nf).sqrt();
        assert!((m[i] - mean[i]).abs() < 3.0 * se + 1e-12, "mean {i}: {} vs {}", m[i], mean[i]);
        for j in 0..big {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / nf).sqrt();
            assert!((c[(i, j)] - cov[(i, j)]).abs() < 3.0 * se + 1e-12, "cov {i},{j}: {} vs {}", c[(i, j)], cov[(i, j)]);
        }
    }
}

#[test]
fn pseudo_observations_match_direct_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t_len = 12;
    let draws: Vec<BstsDraw> = (0..100)
        .map(|_| BstsDraw {
            psi: vec![0.1],
            variances: Variances {
                observation: rng.random_range(0.2..3.0),
                level: 0.1,
                slope: 0.1,
                seasonal: None,
                autoregressive: 0.1,
                regression: None,
            },
            states: vec![0.0; t_len * 3],
            residuals: (0..t_len).map(|_| rng.random_range(-4.0..4.0)).collect(),
        })
        .collect();
    let post = BstsPosterior {
        layout: StateLayout::new(1, 1, 0),
        n_obs: t_len,
        draws,
    };
    let u = extract_pseudo_observations(&[&post]).unwrap();
    for t in 0..t_len {
        let mut acc = 0.0;
        for d in &post.draws {
            acc += norm_cdf(d.residuals[t] / d.variances.observation.sqrt());
        }
        assert!((u[(0, t)] - acc / 100.0).abs() < 1e-12);
    }
}

fn one_region_spec(t_len: usize, seasonal_period: usize) -> SyntheticSpec {
    let mut spec = SyntheticSpec::two_region(CopulaEvolution::independence(0), t_len);
    spec.regions.truncate(1);
    spec.region_truth.truncate(1);
    spec.gev = vec![vec![]];
    spec.index_names.clear();
    spec.seasonal_period = seasonal_period;
    let r = &mut spec.region_truth[0];
    r.beta.clear();
    r.level = 10.0;
    r.slope = 0.1;
    r.variances = Variances {
        observation: 1.0,
        level: 0.1,
        slope: 0.01,
        seasonal: (seasonal_period > 1).then_some(0.01),
        autoregressive: 1.0,
        regression: None,
    };
    spec
}

#[test]
fn posterior_intervals_cover_the_generating_parameters() {
    let truth = [1.0, 0.1, 0.01, 1.0, 0.5];
    let mut hits = [0; 5];
    for seed in 0..6 {
        let spec = one_region_spec(200, 1);
        let panel = generate_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let cfg = BstsConfig {
            n_iter: 4000,
            burn_in: 1000,
            seed,
            ..BstsConfig::default()
        };
        let post = fit_bsts(panel.yields.series(0), &Matrix::zeros(0, 200), &cfg).unwrap();
        let traces = [
            post.trace(|d| d.variances.observation),
            post.trace(|d| d.variances.level),
            post.trace(|d| d.variances.slope),
            post.trace(|d| d.variances.autoregressive),
            post.trace(|d| d.psi[0]),
        ];
        for (k, mut tr) in traces.into_iter().enumerate() {
            tr.sort_by(f64::total_cmp);
            let lo = tr[tr.len() / 40];
            let hi = tr[tr.len() - 1 - tr.len() / 40];
            if lo <= truth[k] && truth[k] <= hi {
                hits[k] += 1;
            }
        }
    }
    assert!(hits.iter().all(|&h| h >= 5), "{hits:?}");
}

#[test]
fn seasonal_pattern_is_tracked() {
    let mut spec = one_region_spec(120, 4);
    spec.region_truth[0].variances.slope = 1e-4;
    // a strong fixed pattern through the seasonal states at the start
    let panel = {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = generate_synthetic(&spec, &mut rng).unwrap();
        for t in 0..120 {
            p.yields.values[(0, t)] += [3.0, -1.0, -4.0, 2.0][t % 4];
        }
        p
    };
    let cfg = BstsConfig {
        n_iter: 1500,
        burn_in: 500,
        seasonal_period: 4,
        seed: 1,
        ..BstsConfig::default()
    };
    let post = fit_bsts(panel.yields.series(0), &Matrix::zeros(0, 120), &cfg).unwrap();
    let s = post.mean_component_path(post.layout.seasonal_start());
    let pattern: Vec<f64> = (0..120).map(|t| [3.0, -1.0, -4.0, 2.0][t % 4]).collect();
    let r = cropcast::stats::pearson(&s[20..], &pattern[20..]).unwrap();
    assert!(r > 0.9, "correlation {r}");
}
