//! Collapsed Dirichlet-multinomial predictive over the item catalog.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dirichlet pseudo-counts over a catalog of `gamma.len()` items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CatalogParams {
    gamma: Vec<f64>,
    total: f64,
    // fast path when every entry is equal
    symmetric: Option<f64>,
}

impl TryFrom<Vec<f64>> for CatalogParams {
    type Error = Error;

    fn try_from(gamma: Vec<f64>) -> Result<Self> {
        Self::new(gamma)
    }
}

impl From<CatalogParams> for Vec<f64> {
    fn from(cp: CatalogParams) -> Self {
        cp.gamma
    }
}

impl CatalogParams {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::Config("catalog must contain at least one item".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Config(format!("gamma entries must be positive, got {g}")));
        }
        let total = gamma.iter().sum();
        let first = gamma[0];
        let symmetric = gamma.iter().all(|g| *g == first).then_some(first);
        Ok(CatalogParams { gamma, total, symmetric })
    }

    pub fn symmetric(size: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![gamma; size])
    }

    pub fn size(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    #[inline]
    pub fn gamma_at(&self, v: usize) -> f64 {
        self.symmetric.unwrap_or_else(|| self.gamma[v])
    }

    #[inline]
    pub fn gamma_total(&self) -> f64 {
        self.total
    }

    fn check(&self, v: usize) -> Result<()> {
        if v >= self.gamma.len() {
            return Err(Error::InvalidItem { item: v, size: self.gamma.len() });
        }
        Ok(())
    }
}

/// Per-topic item counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicCounts {
    pub n_zv: Vec<u32>,
    pub total: u32,
}

impl TopicCounts {
    pub fn empty(size: usize) -> Self {
        TopicCounts { n_zv: vec![0; size], total: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// `ln((n_zv[v] + gamma_v) / (n_z + sum gamma))`, counts excluding the view in question.
pub fn predictive_log_prob(tc: &TopicCounts, v: usize, cp: &CatalogParams) -> Result<f64> {
    cp.check(v)?;
    Ok(predictive_log_prob_unchecked(tc, v, cp))
}

#[inline]
pub(crate) fn predictive_log_prob_unchecked(tc: &TopicCounts, v: usize, cp: &CatalogParams) -> f64 {
    ((tc.n_zv[v] as f64 + cp.gamma_at(v)) / (tc.total as f64 + cp.gamma_total())).ln()
}

/// `ln(gamma_v / sum gamma)`: the predictive of a topic with no views yet.
pub fn new_topic_log_prob(v: usize, cp: &CatalogParams) -> Result<f64> {
    cp.check(v)?;
    Ok(new_topic_log_prob_unchecked(v, cp))
}

#[inline]
pub(crate) fn new_topic_log_prob_unchecked(v: usize, cp: &CatalogParams) -> f64 {
    (cp.gamma_at(v) / cp.gamma_total()).ln()
}

/// Collapsed log marginal of a topic's counts under Dirichlet(gamma).
pub fn log_marginal(tc: &TopicCounts, cp: &CatalogParams) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let mut acc = ln_gamma(cp.gamma_total()) - ln_gamma(tc.total as f64 + cp.gamma_total());
    for (v, &n) in tc.n_zv.iter().enumerate() {
        if n > 0 {
            let g = cp.gamma_at(v);
            acc += ln_gamma(n as f64 + g) - ln_gamma(g);
        }
    }
    acc
}
