//! Log-space sampling helpers shared by the sampler, the stick updates and the
//! forward simulator.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
///
/// Panics if no weight is finite; callers always include at least one
/// strictly positive option.
pub fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "no finite weight among {} options", log_weights.len());
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in log_weights.iter().enumerate() {
        let p = (w - max).exp();
        if u < p {
            return i;
        }
        u -= p;
    }
    // rounding: fall back to the last option with positive mass
    log_weights.iter().rposition(|w| w.is_finite()).unwrap()
}

/// Draws an index proportional to nonnegative linear weights.
pub fn sample_weights<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap()
}

/// `ln G` for `G ~ Gamma(shape, 1)`. Small shapes use the boost
/// `G = G' U^{1/shape}`, `G' ~ Gamma(shape + 1)`, so the result never underflows.
pub fn log_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).unwrap().sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).unwrap().sample(rng).ln();
        let u: f64 = 1.0 - rng.gen::<f64>();
        g + u.ln() / shape
    }
}

/// Dirichlet draw returned as probabilities, computed through log-gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = alpha.iter().map(|a| log_gamma_variate(*a, rng)).collect();
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

/// Number of occupied tables after seating `n` customers in a Chinese
/// restaurant with concentration `conc`: a sum of independent
/// Bernoulli(conc / (conc + i)) draws, i = 0..n.
pub fn sample_crt<R: Rng + ?Sized>(n: u32, conc: f64, rng: &mut R) -> u32 {
    let mut tables = 0;
    for i in 0..n {
        if rng.gen::<f64>() * (conc + i as f64) < conc {
            tables += 1;
        }
    }
    tables
}

/// `1 - U^{1/alpha}`: a Beta(1, alpha) draw by inversion.
pub fn sample_beta_one<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    -(u.ln() / alpha).exp_m1()
}
