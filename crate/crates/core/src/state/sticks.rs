use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::categorical::{sample_beta_one, sample_crt, sample_dirichlet};

/// Finite-plus-remainder representation of a global DP draw: one weight per
/// live factor and the mass of every factor not yet instantiated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSticks {
    pub weights: Vec<f64>,
    pub remainder: f64,
}

impl Default for GlobalSticks {
    fn default() -> Self {
        GlobalSticks { weights: Vec::new(), remainder: 1.0 }
    }
}

impl GlobalSticks {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.remainder
    }

    /// Breaks a new atom off the remainder with a fraction `frac` in (0, 1).
    pub fn split_remainder(&mut self, frac: f64) {
        let frac = frac.clamp(1e-12, 1.0 - 1e-12);
        let w = self.remainder * frac;
        self.remainder -= w;
        self.weights.push(w);
    }

    /// Draws a Beta(1, alpha0) fraction and splits off a new atom.
    pub fn split_new<R: Rng + ?Sized>(&mut self, alpha0: f64, rng: &mut R) {
        let frac = sample_beta_one(alpha0, rng);
        self.split_remainder(frac);
    }

    /// Drops atom `k`, folding its mass into the remainder.
    pub fn fold(&mut self, k: usize) {
        self.remainder += self.weights.remove(k);
    }
}

/// Resamples global sticks given per-group factor counts.
///
/// `rows[g][k]` is the number of items of group `g` on factor `k`. Table counts
/// `m_gk ~ CRT(rows[g][k], group_conc * current[k])` are drawn first, then
/// `(weights, remainder) ~ Dirichlet(m_.1, ..., m_.K, alpha0)`.
pub fn resample_sticks<R: Rng + ?Sized>(
    rows: &[Vec<u32>],
    group_conc: f64,
    current: &GlobalSticks,
    alpha0: f64,
    rng: &mut R,
) -> GlobalSticks {
    let k = current.len();
    let mut m = vec![0u32; k];
    for row in rows {
        debug_assert_eq!(row.len(), k);
        for (j, &n) in row.iter().enumerate() {
            if n > 0 {
                m[j] += sample_crt(n, group_conc * current.weights[j], rng);
            }
        }
    }
    let mut params: Vec<f64> = m.iter().map(|&x| x as f64).collect();
    if params.iter().any(|p| *p == 0.0) {
        // a live factor always opens at least one table; guard against an
        // empty column anyway so the Dirichlet stays proper
        params.iter_mut().filter(|p| **p == 0.0).for_each(|p| *p = 1e-3);
    }
    params.push(alpha0);
    let mut draw = sample_dirichlet(&params, rng);
    for p in draw.iter_mut() {
        *p = p.max(f64::MIN_POSITIVE);
    }
    let remainder = draw.pop().unwrap();
    GlobalSticks { weights: draw, remainder }
}
