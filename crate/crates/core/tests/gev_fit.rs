use cropcast::gev::{fit_dynamic_gev, gev_cdf, gev_logpdf, gev_quantile, joint_gradient, joint_log_density, GevParams};
use cropcast::optim::NelderMeadOptions;
use cropcast::quad::integrate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn draw_gev(rng: &mut ChaCha8Rng, mu: f64, sigma: f64, xi: f64) -> f64 {
    let u: f64 = rng.random_range(1e-300..1.0);
    gev_quantile(u, mu, sigma, xi).unwrap()
}

#[test]
fn density_integrates_to_one() {
    for &sigma in &[0.5, 1.0, 2.0] {
        for &xi in &[-0.3, -1e-9, 0.3] {
            let lo = gev_quantile(1e-15, 1.0, sigma, xi).unwrap();
            let hi = gev_quantile(1.0 - 1e-15, 1.0, sigma, xi).unwrap();
            let mass = integrate(|z| gev_logpdf(z, 1.0, sigma, xi).map_or(0.0, f64::exp), lo, hi, 1e-12, 1e-10);
            assert!((mass - 1.0).abs() < 1e-6, "sigma {sigma} xi {xi}: {mass}");
        }
    }
}

#[test]
fn quantile_and_cdf_are_inverse() {
    for &xi in &[-0.4, 0.0, 1e-9, 0.25] {
        for k in 1..100 {
            let u = k as f64 / 100.0;
            let z = gev_quantile(u, 2.0, 1.5, xi).unwrap();
            assert!((gev_cdf(z, 2.0, 1.5, xi).unwrap() - u).abs() < 1e-10);
        }
    }
}

#[test]
fn path_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let p = GevParams {
            phi: rng.random_range(-0.9..0.9),
            sigma_mu: rng.random_range(0.3..2.0),
            sigma: rng.random_range(0.5..2.0),
            xi: rng.random_range(-0.3..0.3),
        };
        let z: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        // keep every point well inside the support
        let mu: Vec<f64> = z.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let g = joint_gradient(&z, &mu, &p).unwrap();
        for t in 0..z.len() {
            let h = 1e-5;
            let mut up = mu.clone();
            let mut dn = mu.clone();
            up[t] += h;
            dn[t] -= h;
            let fd = (joint_log_density(&z, &up, &p).unwrap() - joint_log_density(&z, &dn, &p).unwrap()) / (2.0 * h);
            let rel = (fd - g[t]).abs() / g[t].abs().max(1e-3);
            assert!(rel < 1e-5, "t {t}: {fd} vs {}", g[t]);
        }
    }
}

#[test]
fn static_location_recovers_scale_and_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let z: Vec<f64> = (0..500).map(|_| draw_gev(&mut rng, 10.0, 2.0, 0.1)).collect();
    let fit = fit_dynamic_gev(&z, &NelderMeadOptions::default()).unwrap();
    eprintln!("{:?}", (fit.phi, fit.sigma_mu, fit.sigma, fit.xi));
    assert!((fit.sigma - 2.0).abs() < 0.2, "sigma {}", fit.sigma);
    assert!((fit.xi - 0.1).abs() < 0.1, "xi {}", fit.xi);
}

#[test]
fn autoregressive_location_recovers_phi() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (phi, sigma_mu) = (0.8, 1.0);
    let mut mu = sigma_mu / (1.0f64 - phi * phi).sqrt() * rng.sample::<f64, _>(StandardNormal);
    let z: Vec<f64> = (0..500)
        .map(|_| {
            mu = phi * mu + sigma_mu * rng.sample::<f64, _>(StandardNormal);
            draw_gev(&mut rng, mu, 2.0, 0.1)
        })
        .collect();
    let fit = fit_dynamic_gev(&z, &NelderMeadOptions::default()).unwrap();
    eprintln!("{:?}", (fit.phi, fit.sigma_mu, fit.sigma, fit.xi));
    assert!((fit.phi - phi).abs() < 0.15, "phi {}", fit.phi);
}
