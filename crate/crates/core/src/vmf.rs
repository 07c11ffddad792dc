//! Von Mises-Fisher distribution on the 2-sphere.
//!
//! Density `C_3(c) exp(c mu^T x)` with `C_3(c) = c / (4 pi sinh c)`. Everything is
//! evaluated in log space; ratios of normalizers become differences.
//!
//! The conjugate prior on the mean direction is itself a vMF with parameters
//! `(mu0, c0)`, so the mean direction of a cluster can be integrated out. The
//! concentration carries a log-normal prior and is handled by Metropolis-Hastings
//! in the sampler.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geo::{norm3, UnitVec3};

/// `ln(4 pi)`: the uniform density on the sphere is `exp(-LN_4PI)`.
pub const LN_4PI: f64 = 2.531_024_246_969_290_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmfParams {
    pub mu: UnitVec3,
    pub c: f64,
}

impl VmfParams {
    pub fn new(mu: UnitVec3, c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Domain(format!("concentration must be finite and >= 0, got {c}")));
        }
        Ok(VmfParams { mu, c })
    }
}

/// Prior on a location factor: `mu ~ vMF(mu0, c0)`, `c ~ LogNormal(m_c, sigma_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmfPrior {
    pub mu0: UnitVec3,
    pub c0: f64,
    pub m_c: f64,
    pub sigma_c: f64,
}

impl VmfPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::Config(format!("c0 must be > 0, got {}", self.c0)));
        }
        if !(self.sigma_c > 0.0 && self.sigma_c.is_finite()) {
            return Err(Error::Config(format!("sigma_c must be > 0, got {}", self.sigma_c)));
        }
        if !self.m_c.is_finite() {
            return Err(Error::Config("m_c must be finite".into()));
        }
        Ok(())
    }

    /// Log-normal log density of a concentration value.
    pub fn log_prior_c(&self, c: f64) -> f64 {
        let z = (c.ln() - self.m_c) / self.sigma_c;
        -c.ln() - self.sigma_c.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * z * z
    }

    pub fn sample_c<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        (self.m_c + self.sigma_c * z).exp()
    }

    fn prior_vec(&self) -> [f64; 3] {
        let m = self.mu0.as_array();
        [self.c0 * m[0], self.c0 * m[1], self.c0 * m[2]]
    }
}

/// `ln sinh(x)` for `x > 0`, stable at both ends.
fn ln_sinh(x: f64) -> f64 {
    x + (-(-2.0 * x).exp_m1()).ln() - LN_2
}

/// `ln(cosh x - sinh(x) / x)` for `x > 0`.
fn ln_cosh_minus_sinhc(x: f64) -> f64 {
    if x < 1.0 {
        // sum_{k>=1} 2k x^{2k} / (2k+1)!
        let x2 = x * x;
        let mut pow = x2;
        let mut fact = 6.0; // (2k+1)! for k = 1
        let mut sum = 0.0;
        for k in 1..30 {
            let term = 2.0 * k as f64 * pow / fact;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            pow *= x2;
            let kk = 2.0 * k as f64;
            fact *= (kk + 2.0) * (kk + 3.0);
        }
        sum.ln()
    } else {
        let e = (-2.0 * x).exp();
        x - LN_2 + (1.0 - 1.0 / x + e * (1.0 + 1.0 / x)).ln()
    }
}

/// `ln I_nu(x)`, the modified Bessel function of the first kind.
///
/// Orders 1/2 and 3/2 use their closed forms; any other order falls back to
/// the power series (small `x`) or the large-argument expansion.
pub fn log_bessel_i(nu: f64, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel argument must be finite and >= 0, got {x}")));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!("bessel order must be >= 0, got {nu}")));
    }
    if x == 0.0 {
        return Ok(if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let half_log = 0.5 * (2.0 / (PI * x)).ln();
    Ok(if nu == 0.5 {
        half_log + ln_sinh(x)
    } else if nu == 1.5 {
        half_log + ln_cosh_minus_sinhc(x)
    } else {
        log_bessel_i_general(nu, x)
    })
}

/// General-order fallback. Exposed for cross-checking the closed forms.
pub fn log_bessel_i_general(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x < 30.0 || x < nu * nu {
        // ln I = nu ln(x/2) - ln Gamma(nu+1) + ln sum_k t_k, t_0 = 1,
        // t_{k+1} / t_k = (x^2/4) / ((k+1)(nu+k+1))
        let q = 0.25 * x * x;
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        let mut k = 0.0;
        loop {
            term *= q / ((k + 1.0) * (nu + k + 1.0));
            sum += term;
            k += 1.0;
            if term < sum * 1e-17 && k > q.sqrt() {
                break;
            }
            if k > 10_000.0 {
                break;
            }
        }
        nu * (0.5 * x).ln() - ln_gamma(nu + 1.0) + sum.ln()
    } else {
        let mu = 4.0 * nu * nu;
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        for k in 1..60 {
            let odd = (2 * k - 1) as f64;
            let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 {
                break;
            }
        }
        x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
    }
}

/// `ln C_3(c)`; `c = 0` gives the uniform limit `-ln(4 pi)`.
#[inline]
pub fn log_c3(c: f64) -> f64 {
    if c == 0.0 {
        return -LN_4PI;
    }
    // 0.5 ln c - 1.5 ln(2 pi) - [0.5 ln(2 / (pi c)) + ln sinh c]
    c.ln() - LN_4PI - ln_sinh(c)
}

/// `ln C_D(c)` for the ambient dimension `D`. Only `D = 3` is supported.
pub fn log_norm_const(dim: usize, c: f64) -> Result<f64> {
    if dim != 3 {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("concentration must be finite and >= 0, got {c}")));
    }
    if c == 0.0 {
        return Ok(-LN_4PI);
    }
    let order = 0.5 * dim as f64 - 1.0;
    Ok(order * c.ln() - 0.5 * dim as f64 * (2.0 * PI).ln() - log_bessel_i(order, c)?)
}

pub fn log_density(x: &UnitVec3, p: &VmfParams) -> f64 {
    log_c3(p.c) + p.c * x.dot(p.mu.as_array())
}

/// Mean resultant length `A_3(c) = coth c - 1/c`.
pub fn mean_resultant_length(c: f64) -> f64 {
    if c < 1e-4 {
        return c / 3.0;
    }
    1.0 / c.tanh() - 1.0 / c
}

/// Two unit vectors completing `mu` to an orthonormal basis.
fn tangent_basis(mu: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if mu[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = mu[0] * helper[0] + mu[1] * helper[1] + mu[2] * helper[2];
    let mut e1 = [helper[0] - d * mu[0], helper[1] - d * mu[1], helper[2] - d * mu[2]];
    let n = norm3(&e1);
    e1.iter_mut().for_each(|v| *v /= n);
    let e2 = [
        mu[1] * e1[2] - mu[2] * e1[1],
        mu[2] * e1[0] - mu[0] * e1[2],
        mu[0] * e1[1] - mu[1] * e1[0],
    ];
    (e1, e2)
}

/// Draws from vMF(mu, c) via the tangent-normal decomposition. On the 2-sphere the
/// cosine `w = mu^T x` has density proportional to `exp(c w)` on [-1, 1], which
/// inverts in closed form, so no rejection loop is needed.
pub fn sample_vmf<R: Rng + ?Sized>(p: &VmfParams, rng: &mut R) -> UnitVec3 {
    let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let c = p.c;
    let w = if c == 0.0 {
        2.0 * u - 1.0
    } else {
        // w = 1 + ln(u + (1 - u) e^{-2c}) / c
        (1.0 + (-(1.0 - u) * -(-2.0 * c).exp_m1()).ln_1p() / c).clamp(-1.0, 1.0)
    };
    let theta = 2.0 * PI * rng.gen::<f64>();
    let r = (1.0 - w * w).max(0.0).sqrt();
    let mu = p.mu.as_array();
    let (e1, e2) = tangent_basis(mu);
    let (st, ct) = theta.sin_cos();
    let mut x = [0.0; 3];
    for i in 0..3 {
        x[i] = w * mu[i] + r * (ct * e1[i] + st * e2[i]);
    }
    let n = norm3(&x);
    UnitVec3::from_raw([x[0] / n, x[1] / n, x[2] / n])
}

fn prior_shifted_norm(sum_vec: &[f64; 3], c: f64, prior: &VmfPrior) -> f64 {
    let p = prior.prior_vec();
    norm3(&[c * sum_vec[0] + p[0], c * sum_vec[1] + p[1], c * sum_vec[2] + p[2]])
}

/// Log marginal likelihood of `n` points with resultant `sum_vec` in one factor,
/// with the mean direction integrated out against its vMF prior.
pub fn log_marginal(sum_vec: &[f64; 3], n: usize, c: f64, prior: &VmfPrior) -> f64 {
    if n == 0 {
        return 0.0;
    }
    n as f64 * log_c3(c) + log_c3(prior.c0) - log_c3(prior_shifted_norm(sum_vec, c, prior))
}

/// Log predictive density of `x` joining a factor whose other members sum to
/// `sum_excl`, with the mean direction integrated out.
pub fn predictive_log_prob(x: &UnitVec3, sum_excl: &[f64; 3], c: f64, prior: &VmfPrior) -> f64 {
    let xa = x.as_array();
    let incl = [sum_excl[0] + xa[0], sum_excl[1] + xa[1], sum_excl[2] + xa[2]];
    log_c3(c) + log_c3(prior_shifted_norm(sum_excl, c, prior)) - log_c3(prior_shifted_norm(&incl, c, prior))
}

/// Posterior over the mean direction of a factor: `vMF(normalize(v), |v|)` with
/// `v = c * sum_vec + c0 * mu0`. Falls back to `mu0` when `v` vanishes.
pub fn posterior_direction(sum_vec: &[f64; 3], c: f64, prior: &VmfPrior) -> VmfParams {
    let p = prior.prior_vec();
    let v = [c * sum_vec[0] + p[0], c * sum_vec[1] + p[1], c * sum_vec[2] + p[2]];
    let kappa = norm3(&v);
    let mu = UnitVec3::normalize(v).unwrap_or(prior.mu0);
    VmfParams { mu, c: kappa }
}
