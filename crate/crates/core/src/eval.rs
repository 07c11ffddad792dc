//! Held-out predictive likelihood, partition agreement, and factor reports.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::categorical::log_sum_exp;
use crate::dirmult;
use crate::error::{Error, Result};
use crate::geo::{unit_to_latlon, GeoPoint, UnitVec3};
use crate::state::{Dataset, State};
use crate::vmf::{self, VmfPrior};

/// Grid points used to integrate a new factor's concentration against its prior.
const C_GRID: usize = 241;
const C_GRID_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutScore {
    /// Mean log predictive probability of a held-out view.
    pub per_view: f64,
    /// Mean log predictive density of a held-out location.
    pub per_location: f64,
    /// Mean joint log predictive of a held-out customer.
    pub per_customer: f64,
    pub customers: usize,
    pub views: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub heldout_loglik_per_view: f64,
    pub heldout_loglik_location: f64,
    pub heldout_loglik_customer: f64,
    pub ari_t: Option<f64>,
    pub ari_s: Option<f64>,
    pub ari_z: Option<f64>,
    pub factors: FactorSummary,
}

/// Precomputed mixture weights of a fitted state.
struct Predictive<'a> {
    state: &'a State,
    /// Log cluster weights; the last entry is a new cluster.
    log_w_t: Vec<f64>,
    /// Per cluster (plus new), log weights over location factors (plus new).
    log_w_ts: Vec<Vec<f64>>,
    /// Per cluster (plus new), log weights over topics (plus new).
    log_w_tz: Vec<Vec<f64>>,
    c_grid: Vec<(f64, f64)>,
}

/// Log-c grid nodes with normalized log weights under the concentration prior.
fn c_grid(prior: &VmfPrior) -> Vec<(f64, f64)> {
    let lo = prior.m_c - C_GRID_SIGMAS * prior.sigma_c;
    let step = 2.0 * C_GRID_SIGMAS * prior.sigma_c / (C_GRID - 1) as f64;
    let nodes: Vec<(f64, f64)> = (0..C_GRID)
        .map(|i| {
            let u = lo + step * i as f64;
            let z = (u - prior.m_c) / prior.sigma_c;
            (u.exp(), -0.5 * z * z)
        })
        .collect();
    let norm = log_sum_exp(&nodes.iter().map(|n| n.1).collect::<Vec<_>>());
    nodes.into_iter().map(|(c, w)| (c, w - norm)).collect()
}

impl<'a> Predictive<'a> {
    fn new(state: &'a State) -> Self {
        let h = state.hyper();
        let tb = state.tables();
        let n = tb.total_customers() as f64;
        let mut log_w_t: Vec<f64> = tb.n_t.iter().map(|c| (*c as f64).ln()).collect();
        log_w_t.push(h.alpha_omega.ln());
        let z_t = (n + h.alpha_omega).ln();
        log_w_t.iter_mut().for_each(|w| *w -= z_t);

        let mix = |counts: Option<&[u32]>, total: f64, conc: f64, weights: &[f64], rem: f64| {
            let denom = (total + conc).ln();
            let mut out: Vec<f64> = weights
                .iter()
                .enumerate()
                .map(|(k, b)| (counts.map_or(0, |c| c[k]) as f64 + conc * b).ln() - denom)
                .collect();
            out.push((conc * rem).ln() - denom);
            out
        };
        let (phi0, pi0) = (state.phi0(), state.pi0());
        let mut log_w_ts = Vec::with_capacity(state.num_t() + 1);
        let mut log_w_tz = Vec::with_capacity(state.num_t() + 1);
        for t in 0..state.num_t() {
            log_w_ts.push(mix(Some(&tb.n_ts[t]), tb.n1_t[t] as f64, h.alpha_phi, &phi0.weights, phi0.remainder));
            log_w_tz.push(mix(Some(&tb.n_tz[t]), tb.n2_t[t] as f64, h.alpha_pi, &pi0.weights, pi0.remainder));
        }
        log_w_ts.push(mix(None, 0.0, h.alpha_phi, &phi0.weights, phi0.remainder));
        log_w_tz.push(mix(None, 0.0, h.alpha_pi, &pi0.weights, pi0.remainder));
        Predictive { state, log_w_t, log_w_ts, log_w_tz, c_grid: c_grid(&h.vmf_prior) }
    }

    /// Log predictive density of `x` under each location factor, plus a new one.
    fn location_terms(&self, x: &UnitVec3) -> Vec<f64> {
        let prior = &self.state.hyper().vmf_prior;
        let mut out: Vec<f64> = (0..self.state.num_s())
            .map(|s| vmf::predictive_log_prob(x, &self.state.sum_s(s), self.state.c(s), prior))
            .collect();
        let new: Vec<f64> = self
            .c_grid
            .iter()
            .map(|(c, lw)| lw + vmf::predictive_log_prob(x, &[0.0; 3], *c, prior))
            .collect();
        out.push(log_sum_exp(&new));
        out
    }

    /// Log predictive probability of item `v` under each topic, plus a new one.
    fn item_terms(&self, v: usize) -> Vec<f64> {
        let cat = &self.state.hyper().catalog;
        let mut out: Vec<f64> = self
            .state
            .tables()
            .topics
            .iter()
            .map(|tc| dirmult::predictive_log_prob_unchecked(tc, v, cat))
            .collect();
        out.push(dirmult::new_topic_log_prob_unchecked(v, cat));
        out
    }

    fn mix_over(weights: &[f64], terms: &[f64]) -> f64 {
        let v: Vec<f64> = weights.iter().zip(terms).map(|(w, t)| w + t).collect();
        log_sum_exp(&v)
    }

    /// Per-cluster log predictive of a location.
    fn location_given_t(&self, x: &UnitVec3) -> Vec<f64> {
        let terms = self.location_terms(x);
        self.log_w_ts.iter().map(|w| Self::mix_over(w, &terms)).collect()
    }

    /// Per-cluster log predictive of an item.
    fn item_given_t(&self, v: usize) -> Vec<f64> {
        let terms = self.item_terms(v);
        self.log_w_tz.iter().map(|w| Self::mix_over(w, &terms)).collect()
    }

    /// Marginal log probability of a single item.
    fn item(&self, v: usize) -> f64 {
        Self::mix_over(&self.log_w_t, &self.item_given_t(v))
    }

    /// (location, sum of per-view marginals, joint) for one held-out customer.
    fn customer(&self, x: &UnitVec3, views: &[u32]) -> (f64, f64, f64) {
        let loc_t = self.location_given_t(x);
        let mut joint_t: Vec<f64> = self.log_w_t.iter().zip(&loc_t).map(|(w, l)| w + l).collect();
        let mut view_sum = 0.0;
        for &v in views {
            let item_t = self.item_given_t(v as usize);
            view_sum += Self::mix_over(&self.log_w_t, &item_t);
            joint_t.iter_mut().zip(&item_t).for_each(|(j, i)| *j += i);
        }
        (Self::mix_over(&self.log_w_t, &loc_t), view_sum, log_sum_exp(&joint_t))
    }
}

/// Predictive probability of a single view of an unseen customer, per item.
/// The returned probabilities sum to one over the catalog.
pub fn item_predictive(state: &State) -> Vec<f64> {
    let p = Predictive::new(state);
    (0..state.data().catalog_size()).map(|v| p.item(v).exp()).collect()
}

/// Log predictive density of an unseen customer's location.
pub fn location_predictive(state: &State, x: &UnitVec3) -> f64 {
    let p = Predictive::new(state);
    Predictive::mix_over(&p.log_w_t, &p.location_given_t(x))
}

/// Scores every held-out customer as wholly unseen. Views are conditionally
/// independent given the customer's cluster in the joint score.
pub fn heldout_loglik(state: &State, heldout: &Dataset) -> Result<HeldoutScore> {
    let size = state.data().catalog_size();
    for c in heldout.customers() {
        if let Some(v) = c.views.iter().find(|v| **v as usize >= size) {
            return Err(Error::InvalidItem { item: *v as usize, size });
        }
    }
    let pred = Predictive::new(state);
    let score = |c: &crate::state::Customer| pred.customer(&c.location, &c.views);
    #[cfg(feature = "parallel")]
    let per: Vec<(f64, f64, f64)> = {
        use rayon::prelude::*;
        heldout.customers().par_iter().map(score).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per: Vec<(f64, f64, f64)> = heldout.customers().iter().map(score).collect();

    let n = heldout.len();
    let views = heldout.total_views();
    let (loc, view, joint) = per.iter().fold((0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let mean = |x: f64, k: usize| if k == 0 { f64::NAN } else { x / k as f64 };
    Ok(HeldoutScore { per_view: mean(view, views), per_location: mean(loc, n), per_customer: mean(joint, n), customers: n, views })
}

fn choose2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same elements.
pub fn ari(pred: &[u32], truth: &[u32]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let mut cells: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    for (a, b) in pred.iter().zip(truth) {
        *cells.entry((*a, *b)).or_default() += 1;
        *rows.entry(*a).or_default() += 1;
        *cols.entry(*b).or_default() += 1;
    }
    let index: f64 = cells.values().map(|n| choose2(*n)).sum();
    let sa: f64 = rows.values().map(|n| choose2(*n)).sum();
    let sb: f64 = cols.values().map(|n| choose2(*n)).sum();
    let total = choose2(pred.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub index: usize,
    pub views: u32,
    /// (item, posterior predictive mass), descending.
    pub top_items: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSummary {
    pub index: usize,
    pub center: GeoPoint,
    pub c: f64,
    pub customers: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub index: usize,
    pub customers: u32,
    /// (location factor, customers), descending.
    pub top_locations: Vec<(usize, u32)>,
    /// (topic, views), descending.
    pub top_topics: Vec<(usize, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub topics: Vec<TopicSummary>,
    pub locations: Vec<LocationSummary>,
    pub clusters: Vec<ClusterSummary>,
}

fn top_counts(row: &[u32], k: usize) -> Vec<(usize, u32)> {
    let mut v: Vec<(usize, u32)> = row.iter().copied().enumerate().filter(|(_, n)| *n > 0).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

/// Posterior summary of every live factor, keeping the `k` strongest entries.
pub fn report(state: &State, k: usize) -> FactorSummary {
    let h = state.hyper();
    let tb = state.tables();
    let gamma_total = h.catalog.gamma_total();
    let topics = tb
        .topics
        .iter()
        .enumerate()
        .map(|(index, tc)| {
            let denom = tc.total as f64 + gamma_total;
            let mut items: Vec<(u32, f64)> = tc
                .n_zv
                .iter()
                .enumerate()
                .map(|(v, n)| (v as u32, (*n as f64 + h.catalog.gamma_at(v)) / denom))
                .collect();
            items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            items.truncate(k);
            TopicSummary { index, views: tc.total, top_items: items }
        })
        .collect();
    let locations = (0..state.num_s())
        .map(|s| {
            let post = vmf::posterior_direction(&state.sum_s(s), state.c(s), &h.vmf_prior);
            LocationSummary {
                index: s,
                center: unit_to_latlon(post.mu).expect("unit vector"),
                c: state.c(s),
                customers: tb.n_s[s],
            }
        })
        .collect();
    let clusters = (0..state.num_t())
        .map(|t| ClusterSummary {
            index: t,
            customers: tb.n_t[t],
            top_locations: top_counts(&tb.n_ts[t], k),
            top_topics: top_counts(&tb.n_tz[t], k),
        })
        .collect();
    FactorSummary { topics, locations, clusters }
}

impl FactorSummary {
    /// Plain-text tables. `names` maps item indices to display titles.
    pub fn to_text(&self, names: Option<&HashMap<u32, String>>) -> String {
        let item = |v: u32| names.and_then(|n| n.get(&v)).cloned().unwrap_or_else(|| format!("#{v}"));
        let mut out = String::new();
        out.push_str("LOCATION FACTORS\n");
        out.push_str(&format!("{:>5} {:>10} {:>11} {:>10} {:>9}\n", "s", "lat", "lon", "c", "customers"));
        for l in &self.locations {
            out.push_str(&format!("{:>5} {:>10.4} {:>11.4} {:>10.3} {:>9}\n", l.index, l.center.lat, l.center.lon, l.c, l.customers));
        }
        out.push_str("\nVIDEO TOPICS\n");
        for t in &self.topics {
            let items: Vec<String> = t.top_items.iter().map(|(v, p)| format!("{} ({:.3})", item(*v), p)).collect();
            out.push_str(&format!("{:>5} {:>7} views  {}\n", t.index, t.views, items.join(", ")));
        }
        out.push_str("\nINTERACTION CLUSTERS\n");
        for c in &self.clusters {
            let locs: Vec<String> = c.top_locations.iter().map(|(s, n)| format!("s{s}:{n}")).collect();
            let tops: Vec<String> = c.top_topics.iter().map(|(z, n)| format!("z{z}:{n}")).collect();
            out.push_str(&format!("{:>5} {:>7} customers  [{}]  [{}]\n", c.index, c.customers, locs.join(" "), tops.join(" ")));
        }
        out
    }

    /// GeoJSON feature collection of location-factor centers.
    pub fn to_geojson(&self) -> serde_json::Value {
        let features: Vec<serde_json::Value> = self
            .locations
            .iter()
            .map(|l| {
                serde_json::json!({
                    "type": "Feature",
                    "geometry": { "type": "Point", "coordinates": [l.center.lon, l.center.lat] },
                    "properties": { "factor": l.index, "c": l.c, "customers": l.customers },
                })
            })
            .collect();
        serde_json::json!({ "type": "FeatureCollection", "features": features })
    }
}
