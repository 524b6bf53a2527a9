use rand::Rng;
use rand_distr::StandardNormal;

use super::family::{h_inverse, in_range, CopulaFamily};
use crate::error::{Error, Result};
use crate::special::norm_cdf;

const UNIT_LO: f64 = 1e-300;
const UNIT_HI: f64 = 1.0 - f64::EPSILON / 2.0;

pub(crate) fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws `u2` from the conditional distribution given `u1`.
pub fn sample_conditional<R: Rng + ?Sized>(family: CopulaFamily, theta: f64, u1: f64, rng: &mut R) -> Result<f64> {
    let w = open_uniform(rng);
    Ok(h_inverse(family, u1, w, theta)?.clamp(UNIT_LO, UNIT_HI))
}

/// `n` pairs from the copula by conditional inversion.
pub fn simulate_pair<R: Rng + ?Sized>(family: CopulaFamily, theta: f64, n: usize, rng: &mut R) -> Result<Vec<(f64, f64)>> {
    if !in_range(family, theta) {
        return Err(Error::ParameterDomain {
            family: family.to_string(),
            theta,
        });
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        if family == CopulaFamily::Gaussian {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let c = theta * a + (1.0 - theta * theta).sqrt() * b;
            out.push((norm_cdf(a).clamp(UNIT_LO, UNIT_HI), norm_cdf(c).clamp(UNIT_LO, UNIT_HI)));
        } else {
            let u1 = open_uniform(rng);
            let u2 = sample_conditional(family, theta, u1, rng)?;
            out.push((u1, u2));
        }
    }
    Ok(out)
}
