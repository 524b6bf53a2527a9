//! Standard normal helpers shared by the marginal and copula code.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::SQRT_2;

/// ln(sqrt(2 pi))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile.
#[inline]
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    // one Halley refinement step
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Log density of N(mean, sd^2) at `x`.
#[inline]
pub fn norm_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
}

/// Draws from N(mean, sd^2) truncated to (lo, hi) by inverting the CDF.
///
/// Works on whichever tail is numerically safer so that the interval can sit far in the
/// tail of the untruncated law.
pub fn truncated_normal<R: rand::Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    debug_assert!(lo < hi);
    if sd <= 0.0 || !sd.is_finite() {
        return mean.clamp(lo, hi);
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let u: f64 = rng.random();
    let z = if a > 0.0 {
        // upper tail: use survival functions
        let sa = norm_cdf(-a);
        let sb = norm_cdf(-b);
        -norm_ppf(sa - u * (sa - sb))
    } else {
        let fa = norm_cdf(a);
        let fb = norm_cdf(b);
        norm_ppf(fa + u * (fb - fa))
    };
    let x = mean + sd * z;
    if x.is_finite() {
        x.clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    }
}

/// Order-one Debye function D1(x) = (1/x) * integral_0^x t / (e^t - 1) dt.
pub fn debye1(x: f64) -> f64 {
    if x.abs() < 1e-10 {
        return 1.0 - x / 4.0;
    }
    let integrand = |t: f64| if t.abs() < 1e-12 { 1.0 } else { t / t.exp_m1() };
    let integral = crate::quad::integrate(integrand, 0.0, x, 1e-14, 1e-13);
    integral / x
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    #[test]
    fn cdf_and_ppf_invert() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.77, 0.999] {
            let err = (norm_cdf(norm_ppf(p)) - p).abs() / p;
            assert!(err < 1e-12, "{p}: {err}");
        }
        assert_eq!(norm_cdf(0.0), 0.5);
    }

    #[test]
    fn truncated_normal_respects_bounds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let x = truncated_normal(&mut rng, 5.0, 0.1, -1.0, 1.0);
            assert!((-1.0..=1.0).contains(&x));
        }
        let mean: f64 = (0..20000)
            .map(|_| truncated_normal(&mut rng, 0.0, 1.0, 0.0, f64::INFINITY))
            .sum::<f64>()
            / 20000.0;
        // half-normal mean sqrt(2/pi)
        assert!((mean - (2.0 / PI).sqrt()).abs() < 0.02);
    }

    #[test]
    fn debye_matches_series() {
        // D1(x) = 1 - x/4 + x^2/36 - x^4/3600 + ...
        let x: f64 = 0.3;
        let series = 1.0 - x / 4.0 + x * x / 36.0 - x.powi(4) / 3600.0 + x.powi(6) / 211_680.0;
        assert!((debye1(x) - series).abs() < 1e-10);
        // D1(-x) = D1(x) + x/2
        assert!((debye1(-2.0) - debye1(2.0) - 1.0).abs() < 1e-12);
    }
}
