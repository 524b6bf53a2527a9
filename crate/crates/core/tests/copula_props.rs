use cropcast::copula::*;
use cropcast::data::OptimizerSettings;
use cropcast::matrix::Matrix;
use cropcast::stats::{kendall_tau, pearson};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use CopulaFamily::*;

fn thetas(family: CopulaFamily) -> [f64; 3] {
    match family {
        Gaussian => [-0.5, 0.2, 0.7],
        Clayton => [0.3, 2.0, 5.0],
        Frank => [-5.0, 1.5, 8.0],
        Gumbel => [1.1, 2.0, 3.5],
        Joe => [1.1, 2.0, 3.5],
        Independence => [0.0; 3],
    }
}

/// Gauss-Legendre nodes and weights on (0, 1) by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            (0.5 * (1.0 - x), 0.5 * w)
        })
        .collect()
}

#[test]
fn densities_integrate_to_one() {
    // 400 x 400 tensor grid; the grid is laid out in the Gaussian-quantile scale so the
    // corner mass of the tail-dependent families is resolved
    let nodes = gauss_legendre(400);
    let grid: Vec<(f64, f64)> = nodes
        .iter()
        .map(|&(s, w)| {
            // u = Phi(x) with x = 8 (2s - 1): du = phi(x) * 16 ds
            let x = 8.0 * (2.0 * s - 1.0);
            let dens = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            (cropcast::special::norm_cdf(x), w * 16.0 * dens)
        })
        .filter(|&(u, _)| u > 0.0 && u < 1.0)
        .collect();
    for fam in CopulaFamily::ALL {
        for th in thetas(fam) {
            let mut mass = 0.0;
            for &(u, wu) in &grid {
                for &(v, wv) in &grid {
                    mass += wu * wv * log_density(fam, u, v, th).unwrap().exp();
                }
            }
            assert!((mass - 1.0).abs() < 1e-3, "{fam} theta {th}: {mass}");
        }
    }
}

#[test]
fn density_matches_mixed_partial_of_cdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for fam in CopulaFamily::ALL {
        for _ in 0..20 {
            let u: f64 = rng.random_range(0.05..0.95);
            let v: f64 = rng.random_range(0.05..0.95);
            let [lo, _, hi] = thetas(fam);
            let th = if fam == Independence { 0.0 } else { rng.random_range(lo..hi) };
            let h = 1e-4;
            let c = |a: f64, b: f64| cdf(fam, a, b, th).unwrap();
            let fd = (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h)) / (4.0 * h * h);
            let exact = log_density(fam, u, v, th).unwrap().exp();
            assert!((fd - exact).abs() / exact < 1e-4, "{fam} {th} ({u}, {v}): {fd} vs {exact}");
        }
    }
}

#[test]
fn clayton_hand_value_agrees_with_cdf() {
    let h = 1e-4;
    let c = |a: f64, b: f64| cdf(Clayton, a, b, 2.0).unwrap();
    let fd = (c(0.5 + h, 0.5 + h) - c(0.5 + h, 0.5 - h) - c(0.5 - h, 0.5 + h) + c(0.5 - h, 0.5 - h)) / (4.0 * h * h);
    assert!((fd.ln() - (192.0 / 7f64.powf(2.5)).ln()).abs() < 1e-6);
}

#[test]
fn kendall_tau_matches_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for fam in CopulaFamily::PARAMETRIC {
        let th = thetas(fam)[1];
        let pairs = simulate_pair(fam, th, 200_000, &mut rng).unwrap();
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let emp = kendall_tau(&a, &b);
        let exact = theta_to_tau(fam, th).unwrap();
        assert!((emp - exact).abs() < 0.01, "{fam}: {emp} vs {exact}");
    }
}

#[test]
fn clayton_two_has_tau_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (a, b): (Vec<f64>, Vec<f64>) = simulate_pair(Clayton, 2.0, 200_000, &mut rng).unwrap().into_iter().unzip();
    assert!((kendall_tau(&a, &b) - 0.5).abs() < 0.01);
}

#[test]
fn independence_pairs_are_uncorrelated() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (a, b): (Vec<f64>, Vec<f64>) = simulate_pair(Independence, 0.0, 100_000, &mut rng).unwrap().into_iter().unzip();
    assert!(pearson(&a, &b).unwrap().abs() < 0.01);
}

#[test]
fn gumbel_upper_tail_dependence() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pairs = simulate_pair(Gumbel, 2.0, 200_000, &mut rng).unwrap();
    let above = pairs.iter().filter(|p| p.0 > 0.99).count();
    let both = pairs.iter().filter(|p| p.0 > 0.99 && p.1 > 0.99).count();
    let lambda = both as f64 / above as f64;
    let exact = 2.0 - 2f64.sqrt();
    assert!((upper_tail_dependence(Gumbel, 2.0) - exact).abs() < 1e-15);
    assert!((lambda - exact).abs() < 0.05, "{lambda}");
}

#[test]
fn tau_is_increasing() {
    for fam in [Clayton, Gumbel, Frank] {
        let grid: Vec<f64> = match fam {
            Clayton => (1..200).map(|k| k as f64 * 0.1).collect(),
            Gumbel => (0..200).map(|k| 1.0 + k as f64 * 0.1).collect(),
            _ => (-100..100).filter(|&k| k != 0).map(|k| k as f64 * 0.2).collect(),
        };
        let taus: Vec<f64> = grid.iter().map(|&t| theta_to_tau(fam, t).unwrap()).collect();
        assert!(taus.windows(2).all(|w| w[1] > w[0]), "{fam}");
    }
}

#[test]
fn theta_path_matches_stepwise_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for fam in CopulaFamily::PARAMETRIC {
        let evo = CopulaEvolution {
            family: fam,
            omega: rng.random_range(-1.0..1.0),
            alpha: rng.random_range(-0.5..0.5),
            gamma: vec![rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
            theta_init: link(fam, 0.2),
        };
        let x = Matrix::from_fn(2, 50, |_, _| rng.sample::<f64, _>(StandardNormal));
        let path = evo.theta_path(&x);
        let mut prev = evo.theta_init;
        for t in 0..50 {
            let raw = evo.omega + evo.alpha * prev + evo.gamma[0] * x[(0, t)] + evo.gamma[1] * x[(1, t)];
            let expect = link(fam, raw);
            assert!((path[t] - expect).abs() < 1e-12);
            prev = expect;
        }
    }
}

fn sample_panel(fam: CopulaFamily, thetas: &[f64], rng: &mut ChaCha8Rng) -> Matrix {
    let mut u = Matrix::zeros(2, thetas.len());
    for (t, &th) in thetas.iter().enumerate() {
        let p = simulate_pair(fam, th, 1, rng).unwrap()[0];
        u[(0, t)] = p.0;
        u[(1, t)] = p.1;
    }
    u
}

#[test]
fn static_loglik_is_sum_of_densities_and_telescopes() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for fam in CopulaFamily::PARAMETRIC {
        let th = thetas(fam)[1];
        let u = sample_panel(fam, &vec![th; 40], &mut rng);
        let evo = CopulaEvolution {
            family: fam,
            omega: link_inverse(fam, th),
            alpha: 0.0,
            gamma: vec![],
            theta_init: th,
        };
        let tt = link(fam, evo.omega);
        let direct: Vec<f64> = (0..40).map(|t| log_density(fam, u[(0, t)], u[(1, t)], tt).unwrap()).collect();
        let mean = direct.iter().sum::<f64>() / 40.0;
        let ll = copula_pseudo_loglik(&u, &Matrix::zeros(0, 40), &evo).unwrap();
        assert!((ll - 40.0 * mean).abs() < 1e-10);

        // appending one observation adds exactly its log-density
        let shorter = Matrix::from_fn(2, 39, |d, t| u[(d, t)]);
        let ll39 = copula_pseudo_loglik(&shorter, &Matrix::zeros(0, 39), &evo).unwrap();
        assert!((ll - ll39 - direct[39]).abs() < 1e-10);
    }
}

#[test]
fn clayton_evolution_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let t_len = 300;
    let truth = CopulaEvolution {
        family: Clayton,
        omega: -0.5,
        alpha: 0.4,
        gamma: vec![0.1],
        theta_init: 1.0,
    };
    let x = Matrix::from_fn(1, t_len, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
    let path = truth.theta_path(&x);
    let u = sample_panel(Clayton, &path, &mut rng);
    let fit = fit_copula_evolution(&u, &x, Clayton, &OptimizerSettings::default(), 5).unwrap();
    assert!(fit.log_likelihood >= fit.start_log_likelihood);
    let fitted = fit.evolution.theta_path(&x);
    let mad: f64 = path
        .iter()
        .zip(&fitted)
        .map(|(a, b)| (theta_to_tau(Clayton, *a).unwrap() - theta_to_tau(Clayton, *b).unwrap()).abs())
        .sum::<f64>()
        / t_len as f64;
    assert!(mad < 0.15, "mean |tau error| {mad}: {:?}", fit.evolution);
}

#[test]
fn independence_fit_skips_optimisation() {
    let u = Matrix::from_fn(2, 30, |d, t| ((t * 7 + d * 3) % 29 + 1) as f64 / 31.0);
    let fit = fit_copula_evolution(&u, &Matrix::zeros(1, 30), Independence, &OptimizerSettings::default(), 0).unwrap();
    assert_eq!(fit.log_likelihood, 0.0);
    assert_eq!(fit.evaluations, 0);
}

proptest! {
    #[test]
    fn evolve_stays_in_range(omega in -1e6f64..1e6, alpha in -1e3f64..1e3, prev in -1e3f64..1e3,
                             g in -1e3f64..1e3, x in -1e3f64..1e3, which in 0usize..5) {
        let fam = CopulaFamily::PARAMETRIC[which];
        let evo = CopulaEvolution { family: fam, omega, alpha, gamma: vec![g], theta_init: 0.0 };
        let th = evolve_theta(&evo, prev, &[x]);
        prop_assert!(in_range(fam, th));
        prop_assert!(log_density(fam, 0.3, 0.6, th).unwrap().is_finite());
    }

    #[test]
    fn h_function_is_a_distribution(u in 0.001f64..0.999, v in 0.001f64..0.999, which in 0usize..5, r in -2.0f64..2.0) {
        let fam = CopulaFamily::PARAMETRIC[which];
        let th = link(fam, r);
        let h = h_function(fam, u, v, th).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        let back = h_inverse(fam, u, h, th).unwrap();
        prop_assert!((h_function(fam, u, back, th).unwrap() - h).abs() < 1e-9);
    }
}
