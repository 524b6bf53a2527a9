//! Bivariate one-parameter copula families.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quad::integrate;
use crate::scalar::Scalar;
use crate::special::{debye1, norm_cdf, norm_ppf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Gaussian,
    Clayton,
    Frank,
    Gumbel,
    Joe,
    Independence,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 6] = [
        CopulaFamily::Gaussian,
        CopulaFamily::Clayton,
        CopulaFamily::Frank,
        CopulaFamily::Gumbel,
        CopulaFamily::Joe,
        CopulaFamily::Independence,
    ];

    /// Families with a dependence parameter.
    pub const PARAMETRIC: [CopulaFamily; 5] = [
        CopulaFamily::Gaussian,
        CopulaFamily::Clayton,
        CopulaFamily::Frank,
        CopulaFamily::Gumbel,
        CopulaFamily::Joe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CopulaFamily::Gaussian => "gaussian",
            CopulaFamily::Clayton => "clayton",
            CopulaFamily::Frank => "frank",
            CopulaFamily::Gumbel => "gumbel",
            CopulaFamily::Joe => "joe",
            CopulaFamily::Independence => "independence",
        }
    }

    pub fn is_independence(self) -> bool {
        self == CopulaFamily::Independence
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownFamily(pub String);

impl fmt::Display for UnknownFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let valid: Vec<&str> = CopulaFamily::ALL.iter().map(|c| c.name()).collect();
        write!(f, "unknown copula family '{}'; valid families: {}", self.0, valid.join(", "))
    }
}

impl std::error::Error for UnknownFamily {}

impl FromStr for CopulaFamily {
    type Err = UnknownFamily;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        CopulaFamily::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownFamily(s.to_string()))
    }
}

// Saturation limits of the link functions. They bound |tau| by roughly 0.99 and keep
// every density finite in double precision.
const RAW_MIN: f64 = -23.0;
pub const CLAYTON_MAX: f64 = 200.0;
pub const ARCH_MAX: f64 = 100.0;
pub const FRANK_MAX: f64 = 200.0;
pub const FRANK_GAP: f64 = 1e-6;
pub const GAUSS_MAX: f64 = 0.9999;

/// Maps an unconstrained value into the family's admissible parameter range.
pub fn link<F: Scalar>(family: CopulaFamily, raw: F) -> F {
    let raw = if raw.is_nan() { F::zero() } else { raw };
    match family {
        CopulaFamily::Clayton => raw.max(F::c(RAW_MIN)).min(F::c(CLAYTON_MAX.ln())).exp(),
        CopulaFamily::Gumbel | CopulaFamily::Joe => {
            F::one() + raw.max(F::c(RAW_MIN)).min(F::c((ARCH_MAX - 1.0).ln())).exp()
        }
        CopulaFamily::Frank => {
            let r = raw.max(F::c(-FRANK_MAX)).min(F::c(FRANK_MAX));
            if r.abs() < F::c(FRANK_GAP) {
                if r < F::zero() {
                    F::c(-FRANK_GAP)
                } else {
                    F::c(FRANK_GAP)
                }
            } else {
                r
            }
        }
        CopulaFamily::Gaussian => raw.tanh().max(F::c(-GAUSS_MAX)).min(F::c(GAUSS_MAX)),
        CopulaFamily::Independence => F::zero(),
    }
}

/// Inverse of [`link`] on the interior of the range.
pub fn link_inverse(family: CopulaFamily, theta: f64) -> f64 {
    match family {
        CopulaFamily::Clayton => theta.max(1e-10).ln(),
        CopulaFamily::Gumbel | CopulaFamily::Joe => (theta - 1.0).max(1e-10).ln(),
        CopulaFamily::Frank => theta,
        CopulaFamily::Gaussian => theta.clamp(-GAUSS_MAX, GAUSS_MAX).atanh(),
        CopulaFamily::Independence => 0.0,
    }
}

pub fn in_range<F: Scalar>(family: CopulaFamily, theta: F) -> bool {
    if !theta.is_finite() {
        return false;
    }
    match family {
        CopulaFamily::Gaussian => theta.abs() < F::one(),
        CopulaFamily::Clayton => theta > F::zero(),
        CopulaFamily::Frank => theta != F::zero(),
        CopulaFamily::Gumbel | CopulaFamily::Joe => theta >= F::one(),
        CopulaFamily::Independence => true,
    }
}

fn check<F: Scalar>(family: CopulaFamily, theta: F) -> Result<()> {
    if in_range(family, theta) {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            family: family.to_string(),
            theta: theta.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// ln(e^a + e^b - 1) for a, b >= 0.
fn ln_sum_exp_minus_one<F: Scalar>(a: F, b: F) -> F {
    let hi = a.max(b);
    let lo = a.min(b);
    if hi < F::c(20.0) {
        (a.exp_m1() + b.exp_m1()).ln_1p()
    } else {
        hi + ((lo - hi).exp() - (-hi).exp()).ln_1p()
    }
}

/// ln(e^a + e^b) without overflow.
fn ln_add_exp<F: Scalar>(a: F, b: F) -> F {
    let hi = a.max(b);
    hi + (a.min(b) - hi).exp().ln_1p()
}

/// softplus(x) = ln(1 + e^x)
fn softplus<F: Scalar>(x: F) -> F {
    if x > F::c(35.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `D = (1 - e^{-t}) - (1 - e^{-t u})(1 - e^{-t v})` for `t > 0`, without cancellation.
fn frank_d<F: Scalar>(u: F, v: F, t: F) -> F {
    if t > F::one() {
        (-t * u).exp() + (-t * v).exp() - (-t * (u + v)).exp() - (-t).exp()
    } else {
        -(-t).exp_m1() - (-t * u).exp_m1() * (-t * v).exp_m1()
    }
}

// Frank functions for t > 0; negative parameters use c_{-t}(u, v) = c_t(u, 1 - v).
fn frank_log_density<F: Scalar>(u: F, v: F, t: F) -> F {
    let em = -(-t).exp_m1();
    (t * em).ln() - t * (u + v) - F::c(2.0) * frank_d(u, v, t).ln()
}

fn frank_cdf<F: Scalar>(u: F, v: F, t: F) -> F {
    let em = -(-t).exp_m1();
    -(frank_d(u, v, t).ln() - em.ln()) / t
}

fn frank_h<F: Scalar>(u: F, v: F, t: F) -> F {
    (-t * u).exp() * (-(-t * v).exp_m1()) / frank_d(u, v, t)
}

fn frank_h_inverse<F: Scalar>(u: F, w: F, t: F) -> F {
    let one = F::one();
    let e1 = (-t * u).exp();
    if t > one {
        // v = -(1/t) ln[((1 - w) e^{-t u} + w e^{-t}) / (w + (1 - w) e^{-t u})]
        let num = ln_add_exp((one - w).ln() - t * u, w.ln() - t);
        let den = (w + (one - w) * e1).ln();
        -(num - den) / t
    } else {
        -(w * (-t).exp_m1() / (w + (one - w) * e1)).ln_1p() / t
    }
}

/// Log copula density `ln c(u1, u2 | theta)`.
pub fn log_density<F: Scalar>(family: CopulaFamily, u1: F, u2: F, theta: F) -> Result<F> {
    check(family, theta)?;
    let one = F::one();
    if !(u1 > F::zero() && u1 < one && u2 > F::zero() && u2 < one) {
        return Err(Error::precondition("copula arguments must lie strictly inside (0, 1)"));
    }
    let v = match family {
        CopulaFamily::Independence => F::zero(),
        CopulaFamily::Clayton => {
            let (lu, lv) = (u1.ln(), u2.ln());
            let l = ln_sum_exp_minus_one(-theta * lu, -theta * lv);
            theta.ln_1p() - (one + theta) * (lu + lv) - (F::c(2.0) + one / theta) * l
        }
        CopulaFamily::Frank => {
            if theta > F::zero() {
                frank_log_density(u1, u2, theta)
            } else {
                frank_log_density(u1, one - u2, -theta)
            }
        }
        CopulaFamily::Gumbel => {
            let (x, y) = (-u1.ln(), -u2.ln());
            let ln_a = ln_add_exp(theta * x.ln(), theta * y.ln());
            let a_inv = (ln_a / theta).exp(); // A^{1/theta}
            -a_inv - u1.ln() - u2.ln() + (theta - one) * (x.ln() + y.ln()) + (F::c(2.0) / theta - F::c(2.0)) * ln_a
                + ((theta - one) / a_inv).ln_1p()
        }
        CopulaFamily::Joe => {
            let (l1, l2) = ((-u1).ln_1p(), (-u2).ln_1p());
            let (a, b) = ((theta * l1).exp(), (theta * l2).exp());
            // S = a + b - ab = 1 - (1 - a)(1 - b)
            let s = a + b - a * b;
            (one / theta - F::c(2.0)) * s.ln() + (theta - one) * (l1 + l2) + (theta - one + s).ln()
        }
        CopulaFamily::Gaussian => {
            let rho = theta.to_f64().unwrap();
            let x = norm_ppf(u1.to_f64().unwrap());
            let y = norm_ppf(u2.to_f64().unwrap());
            let r2 = 1.0 - rho * rho;
            F::c(-0.5 * r2.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2))
        }
    };
    Ok(v)
}

/// Copula CDF `C(u1, u2 | theta)`.
pub fn cdf<F: Scalar>(family: CopulaFamily, u1: F, u2: F, theta: F) -> Result<F> {
    check(family, theta)?;
    let one = F::one();
    if u1 <= F::zero() || u2 <= F::zero() {
        return Ok(F::zero());
    }
    if u1 >= one {
        return Ok(u2.min(one));
    }
    if u2 >= one {
        return Ok(u1);
    }
    let v = match family {
        CopulaFamily::Independence => u1 * u2,
        CopulaFamily::Clayton => {
            let l = ln_sum_exp_minus_one(-theta * u1.ln(), -theta * u2.ln());
            (-l / theta).exp()
        }
        CopulaFamily::Frank => {
            if theta > F::zero() {
                frank_cdf(u1, u2, theta)
            } else {
                (u1 - frank_cdf(u1, one - u2, -theta)).max(F::zero())
            }
        }
        CopulaFamily::Gumbel => {
            let ln_a = ln_add_exp(theta * (-u1.ln()).ln(), theta * (-u2.ln()).ln());
            (-(ln_a / theta).exp()).exp()
        }
        CopulaFamily::Joe => {
            let (a, b) = ((theta * (-u1).ln_1p()).exp(), (theta * (-u2).ln_1p()).exp());
            one - (a + b - a * b).powf(one / theta)
        }
        CopulaFamily::Gaussian => {
            let rho = theta.to_f64().unwrap();
            let (a, b) = (u1.to_f64().unwrap(), u2.to_f64().unwrap());
            let y = norm_ppf(b);
            let s = (1.0 - rho * rho).sqrt();
            // C(a, b) = int_0^a P(V <= b | U = w) dw, integrated in x = Phi^{-1}(w)
            let xa = norm_ppf(a);
            let g = |x: f64| {
                let dens = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                dens * norm_cdf((y - rho * x) / s)
            };
            if xa <= -9.0 {
                return Ok(F::zero());
            }
            F::c(integrate(g, -9.0, xa, 1e-15, 1e-13).clamp(0.0, a.min(b)))
        }
    };
    Ok(v)
}

/// Conditional distribution `h(u2 | u1) = dC/du1 = P(U2 <= u2 | U1 = u1)`.
pub fn h_function<F: Scalar>(family: CopulaFamily, u1: F, u2: F, theta: F) -> Result<F> {
    check(family, theta)?;
    let one = F::one();
    if u2 <= F::zero() {
        return Ok(F::zero());
    }
    if u2 >= one {
        return Ok(one);
    }
    let v = match family {
        CopulaFamily::Independence => u2,
        CopulaFamily::Clayton => {
            let lu = u1.ln();
            let l = ln_sum_exp_minus_one(-theta * lu, -theta * u2.ln());
            ((-theta - one) * lu - (one + one / theta) * l).exp()
        }
        CopulaFamily::Frank => {
            if theta > F::zero() {
                frank_h(u1, u2, theta)
            } else {
                one - frank_h(u1, one - u2, -theta)
            }
        }
        CopulaFamily::Gumbel => {
            let x = -u1.ln();
            let ln_a = ln_add_exp(theta * x.ln(), theta * (-u2.ln()).ln());
            let a_inv = (ln_a / theta).exp();
            (-a_inv + (one / theta - one) * ln_a + (theta - one) * x.ln() - u1.ln()).exp()
        }
        CopulaFamily::Joe => {
            let (l1, l2) = ((-u1).ln_1p(), (-u2).ln_1p());
            let (a, b) = ((theta * l1).exp(), (theta * l2).exp());
            let s = a + b - a * b;
            ((one / theta - one) * s.ln() + (theta - one) * l1).exp() * (one - b)
        }
        CopulaFamily::Gaussian => {
            let rho = theta.to_f64().unwrap();
            let x = norm_ppf(u1.to_f64().unwrap());
            let y = norm_ppf(u2.to_f64().unwrap());
            F::c(norm_cdf((y - rho * x) / (1.0 - rho * rho).sqrt()))
        }
    };
    Ok(v.max(F::zero()).min(one))
}

/// Solves `h(u2 | u1) = w` for `u2`.
pub fn h_inverse<F: Scalar>(family: CopulaFamily, u1: F, w: F, theta: F) -> Result<F> {
    check(family, theta)?;
    let one = F::one();
    let v = match family {
        CopulaFamily::Independence => w,
        CopulaFamily::Clayton => {
            // u2 = ((w^{-theta/(1+theta)} - 1) u1^{-theta} + 1)^{-1/theta}
            let c = (-theta / (one + theta)) * w.ln();
            let lt = c.exp_m1().ln() - theta * u1.ln();
            (-softplus(lt) / theta).exp()
        }
        CopulaFamily::Frank => {
            if theta > F::zero() {
                frank_h_inverse(u1, w, theta)
            } else {
                one - frank_h_inverse(u1, one - w, -theta)
            }
        }
        CopulaFamily::Gaussian => {
            let rho = theta.to_f64().unwrap();
            let x = norm_ppf(u1.to_f64().unwrap());
            let z = norm_ppf(w.to_f64().unwrap());
            F::c(norm_cdf(rho * x + (1.0 - rho * rho).sqrt() * z))
        }
        CopulaFamily::Gumbel | CopulaFamily::Joe => {
            // h is increasing in u2; bisection to an absolute tolerance far below 1e-10
            let (mut lo, mut hi) = (F::zero(), one);
            for _ in 0..64 {
                let mid = F::c(0.5) * (lo + hi);
                if h_function(family, u1, mid, theta)? < w {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < F::c(1e-15) {
                    break;
                }
            }
            F::c(0.5) * (lo + hi)
        }
    };
    Ok(v)
}

/// Kendall's tau implied by `theta`.
pub fn theta_to_tau<F: Scalar>(family: CopulaFamily, theta: F) -> Result<F> {
    check(family, theta)?;
    let t = theta.to_f64().unwrap();
    let tau = match family {
        CopulaFamily::Independence => 0.0,
        CopulaFamily::Clayton => t / (t + 2.0),
        CopulaFamily::Gumbel => 1.0 - 1.0 / t,
        CopulaFamily::Gaussian => 2.0 / std::f64::consts::PI * t.asin(),
        CopulaFamily::Frank => 1.0 - 4.0 / t * (1.0 - debye1(t)),
        CopulaFamily::Joe => {
            if t == 1.0 {
                0.0
            } else {
                // tau = 1 + 4 int_0^1 phi(s) / phi'(s) ds with phi(s) = -ln(1 - (1 - s)^theta)
                let ratio = |s: f64| {
                    let r = 1.0 - s;
                    if r <= 0.0 || s <= 0.0 {
                        return 0.0;
                    }
                    let rt = r.powf(t);
                    let one_minus = -(t * r.ln()).exp_m1();
                    (-rt).ln_1p() * one_minus * r.powf(1.0 - t) / t * if rt.is_finite() { 1.0 } else { 0.0 }
                };
                1.0 + 4.0 * integrate(ratio, 0.0, 1.0, 1e-14, 1e-12)
            }
        }
    };
    Ok(F::c(tau))
}

/// Inverts [`theta_to_tau`]; tau outside the family's attainable range is clipped to
/// the nearest link-reachable parameter.
pub fn tau_to_theta(family: CopulaFamily, tau: f64) -> f64 {
    let tau = tau.clamp(-0.99, 0.99);
    match family {
        CopulaFamily::Independence => 0.0,
        CopulaFamily::Clayton => (2.0 * tau / (1.0 - tau)).clamp(1e-6, CLAYTON_MAX),
        CopulaFamily::Gumbel => (1.0 / (1.0 - tau.max(0.0))).clamp(1.0, ARCH_MAX),
        CopulaFamily::Gaussian => (std::f64::consts::FRAC_PI_2 * tau).sin(),
        CopulaFamily::Frank | CopulaFamily::Joe => {
            let (mut lo, mut hi) = if family == CopulaFamily::Frank {
                (-FRANK_MAX, FRANK_MAX)
            } else {
                (1.0, ARCH_MAX)
            };
            if family == CopulaFamily::Joe && tau <= 0.0 {
                return 1.0;
            }
            if family == CopulaFamily::Frank && tau.abs() < 1e-9 {
                return FRANK_GAP;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let m = if family == CopulaFamily::Frank && mid.abs() < FRANK_GAP {
                    FRANK_GAP.copysign(mid)
                } else {
                    mid
                };
                if theta_to_tau(family, m).unwrap_or(0.0) < tau {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-10 {
                    break;
                }
            }
            let out = 0.5 * (lo + hi);
            if family == CopulaFamily::Frank && out.abs() < FRANK_GAP {
                FRANK_GAP.copysign(out)
            } else {
                out
            }
        }
    }
}

/// Upper-tail dependence coefficient.
pub fn upper_tail_dependence(family: CopulaFamily, theta: f64) -> f64 {
    match family {
        CopulaFamily::Gumbel | CopulaFamily::Joe => 2.0 - 2f64.powf(1.0 / theta),
        _ => 0.0,
    }
}

/// Lower-tail dependence coefficient.
pub fn lower_tail_dependence(family: CopulaFamily, theta: f64) -> f64 {
    match family {
        CopulaFamily::Clayton => 2f64.powf(-1.0 / theta),
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use CopulaFamily::*;

    #[test]
    fn links_at_zero() {
        assert_eq!(link(Clayton, 0.0), 1.0);
        assert_eq!(link(Gumbel, 0.0), 2.0);
        assert_eq!(link(Joe, 0.0), 2.0);
        assert_eq!(link(Gaussian, 0.0), 0.0);
        assert_eq!(link(Frank, 0.0), FRANK_GAP);
        assert_eq!(link(Frank, -1e-9), -FRANK_GAP);
        assert_eq!(link(Frank, 3.0), 3.0);
    }

    #[test]
    fn links_are_total() {
        for fam in ALL_FAMILIES {
            for raw in [-1e308, -50.0, -1.0, 0.0, 1e-300, 2.0, 700.0, 1e308, f64::NAN] {
                let th = link(fam, raw);
                assert!(in_range(fam, th), "{fam} {raw} -> {th}");
            }
        }
    }

    const ALL_FAMILIES: [CopulaFamily; 6] = CopulaFamily::ALL;

    #[test]
    fn clayton_density_hand_value() {
        // c(1/2, 1/2 | 2) = 3 * 2^3 * 2^3 * 7^{-5/2} = 192 / 7^{5/2}
        let expected = (192.0 / 7f64.powf(2.5)).ln();
        let got = log_density(Clayton, 0.5, 0.5, 2.0).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((expected - 0.392_72).abs() < 1e-5);
    }

    #[test]
    fn independence_is_flat() {
        assert_eq!(log_density(Independence, 0.2, 0.9, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_theta_is_rejected() {
        assert!(log_density(Clayton, 0.3, 0.3, -0.5).is_err());
        assert!(log_density(Gumbel, 0.3, 0.3, 0.5).is_err());
        assert!(log_density(Gaussian, 0.3, 0.3, 1.0).is_err());
        assert!(log_density(Frank, 0.3, 0.3, 0.0).is_err());
        assert!(theta_to_tau(Joe, 0.9).is_err());
    }

    #[test]
    fn tau_closed_forms() {
        assert_eq!(theta_to_tau(Clayton, 2.0).unwrap(), 0.5);
        assert_eq!(theta_to_tau(Gumbel, 1.0).unwrap(), 0.0);
        // Frank tau at theta = 5 (tabulated 0.4567)
        assert!((theta_to_tau(Frank, 5.0f64).unwrap() - 0.456_7).abs() < 1e-4);
    }

    #[test]
    fn joe_tau_matches_series() {
        // tau = 1 - 4 sum_k 1 / (k (theta k + 2) (theta (k - 1) + 2))
        for &th in &[1.5, 2.0, 4.0, 9.0] {
            let series: f64 = 1.0
                - 4.0
                    * (1..200_000)
                        .map(|k| {
                            let k = k as f64;
                            1.0 / (k * (th * k + 2.0) * (th * (k - 1.0) + 2.0))
                        })
                        .sum::<f64>();
            let q = theta_to_tau(Joe, th).unwrap();
            assert!((q - series).abs() < 1e-6, "{th}: {q} vs {series}");
        }
    }

    #[test]
    fn tau_inversion_round_trips() {
        for fam in CopulaFamily::PARAMETRIC {
            for &tau in &[0.1, 0.35, 0.7] {
                let th = tau_to_theta(fam, tau);
                assert!((theta_to_tau(fam, th).unwrap() - tau).abs() < 1e-7, "{fam} {tau}");
            }
        }
        assert!((theta_to_tau(Frank, tau_to_theta(Frank, -0.4)).unwrap() + 0.4).abs() < 1e-7);
    }

    #[test]
    fn h_inverse_inverts_h() {
        for fam in CopulaFamily::ALL {
            let th = match fam {
                Gaussian => 0.6,
                Clayton => 3.0,
                Frank => -4.0,
                Gumbel => 2.5,
                Joe => 1.8,
                Independence => 0.0,
            };
            for &u in &[0.05, 0.5, 0.93] {
                for &w in &[0.01, 0.3, 0.77, 0.999] {
                    let v: f64 = h_inverse(fam, u, w, th).unwrap();
                    let back: f64 = h_function(fam, u, v, th).unwrap();
                    assert!((back - w).abs() < 1e-9, "{fam} u={u} w={w}: {back}");
                }
            }
        }
    }

    #[test]
    fn densities_are_symmetric() {
        for fam in CopulaFamily::ALL {
            let th = match fam {
                Gaussian => -0.3,
                Clayton => 1.2,
                Frank => 7.0,
                Gumbel => 3.0,
                Joe => 2.2,
                Independence => 0.0,
            };
            let a: f64 = log_density(fam, 0.13, 0.71, th).unwrap();
            let b: f64 = log_density(fam, 0.71, 0.13, th).unwrap();
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{fam}");
        }
    }

    #[test]
    fn f32_instantiation() {
        let v: f32 = log_density(Clayton, 0.5f32, 0.5f32, 2.0f32).unwrap();
        assert!((v - 0.392_72).abs() < 1e-4);
        assert_eq!(link(Gumbel, 0.0f32), 2.0f32);
    }

    #[test]
    fn parse_family_names() {
        assert_eq!("Gumbel".parse::<CopulaFamily>().unwrap(), Gumbel);
        let err = "student".parse::<CopulaFamily>().unwrap_err().to_string();
        assert!(err.contains("gaussian") && err.contains("joe"));
    }
}
