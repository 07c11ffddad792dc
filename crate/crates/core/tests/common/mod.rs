//! Oracles shared by the integration tests: brute-force conditionals from the
//! joint score, goodness-of-fit p-values and small fixtures.
#![allow(dead_code)]

use std::sync::Arc;

use geolatent::categorical::log_sum_exp;
use geolatent::dirmult::CatalogParams;
use geolatent::geo::{latlon_to_unit, GeoPoint, UnitVec3};
use geolatent::sampler::log_joint;
use geolatent::state::{AssignmentState, Customer, Dataset, GlobalSticks, Hyperparams, State};
use geolatent::vmf::VmfPrior;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn point(lat: f64, lon: f64) -> UnitVec3 {
    latlon_to_unit(GeoPoint { lat, lon }).unwrap()
}

pub fn customer(i: usize, lat: f64, lon: f64, views: &[u32]) -> Customer {
    Customer { id: format!("c{i}"), location: point(lat, lon), views: views.to_vec() }
}

pub fn hyper(v: usize, gamma: f64, vmf_prior: VmfPrior) -> Arc<Hyperparams> {
    Arc::new(Hyperparams {
        alpha_phi0: 1.0,
        alpha_pi0: 1.0,
        alpha_omega: 1.0,
        alpha_phi: 1.0,
        alpha_pi: 1.0,
        catalog: CatalogParams::symmetric(v, gamma).unwrap(),
        vmf_prior,
    })
}

/// Four customers over two clusters, two location factors and three topics.
pub fn frozen_toy() -> State {
    let customers = vec![
        customer(0, 40.0, -100.0, &[0, 1]),
        customer(1, 45.0, -95.0, &[1, 1, 2]),
        customer(2, -30.0, 140.0, &[3]),
        customer(3, -25.0, 135.0, &[2, 3, 0]),
    ];
    let data = Arc::new(Dataset::new(customers, 4).unwrap());
    let prior = VmfPrior { mu0: UnitVec3::NORTH_POLE, c0: 1.0, m_c: 1.5, sigma_c: 1.0 };
    let assign = AssignmentState {
        t: vec![0, 0, 1, 1],
        s: vec![0, 0, 1, 1],
        z: vec![0, 0, 0, 1, 1, 2, 1, 2, 0],
        c: vec![20.0, 5.0],
    };
    let phi0 = GlobalSticks { weights: vec![0.5, 0.3], remainder: 0.2 };
    let pi0 = GlobalSticks { weights: vec![0.4, 0.3, 0.2], remainder: 0.1 };
    State::from_assignments(data, hyper(4, 0.5, prior), assign, phi0, pi0).unwrap()
}

fn normalize(logw: &[f64]) -> Vec<f64> {
    let norm = log_sum_exp(logw);
    logw.iter().map(|l| (l - norm).exp()).collect()
}

/// Probabilities of each cluster for customer `d` (last entry: a new cluster),
/// from the joint score of every completed state.
pub fn t_oracle(state: &State, d: usize) -> Vec<f64> {
    let mut base = state.clone();
    assert!(base.unassign_t(d).unwrap().is_none(), "customer must share its cluster");
    let mut logw: Vec<f64> = (0..base.num_t())
        .map(|t| {
            let mut st = base.clone();
            st.assign_t(d, t).unwrap();
            log_joint(&st)
        })
        .collect();
    let mut st = base.clone();
    let t = st.open_t();
    st.assign_t(d, t).unwrap();
    logw.push(log_joint(&st));
    normalize(&logw)
}

/// Probabilities of each topic for view `(d, j)` (last entry: a new topic).
/// The new topic receives the whole stick remainder.
pub fn z_oracle(state: &State, d: usize, j: usize) -> Vec<f64> {
    let mut base = state.clone();
    assert!(base.remove_view(d, j).unwrap().is_none(), "view must share its topic");
    let mut logw: Vec<f64> = (0..base.num_z())
        .map(|z| {
            let mut st = base.clone();
            st.add_view(d, j, z).unwrap();
            log_joint(&st)
        })
        .collect();
    let mut st = base.clone();
    let z = st.open_z(1.0);
    st.add_view(d, j, z).unwrap();
    logw.push(log_joint(&st));
    normalize(&logw)
}

/// Probabilities of each location factor for customer `d` (last entry: a new
/// factor) when the new factor's concentration is drawn from its prior before
/// the choice. The prior is integrated by quadrature in `ln c`.
pub fn s_oracle(state: &State, d: usize) -> Vec<f64> {
    let mut base = state.clone();
    assert!(base.unassign_s(d).unwrap().is_none(), "customer must share its factor");
    let existing: Vec<f64> = (0..base.num_s())
        .map(|s| {
            let mut st = base.clone();
            st.assign_s(d, s).unwrap();
            log_joint(&st)
        })
        .collect();
    let prior = state.hyper().vmf_prior;
    let steps = 4000;
    let (lo, hi) = (prior.m_c - 10.0 * prior.sigma_c, prior.m_c + 10.0 * prior.sigma_c);
    let du = (hi - lo) / steps as f64;
    let mut probs = vec![0.0; existing.len() + 1];
    for i in 0..=steps {
        let u = lo + i as f64 * du;
        let c = u.exp();
        let mut st = base.clone();
        let s = st.open_s(c, 1.0);
        st.assign_s(d, s).unwrap();
        // the joint carries the prior density of c; the choice itself does not
        let mut logw = existing.clone();
        logw.push(log_joint(&st) - prior.log_prior_c(c));
        let density = (prior.log_prior_c(c) + u).exp();
        let trapezoid = if i == 0 || i == steps { 0.5 } else { 1.0 };
        for (p, q) in probs.iter_mut().zip(normalize(&logw)) {
            *p += trapezoid * du * density * q;
        }
    }
    probs
}

/// `ln ∫ exp(f(u)) du` over the unit sphere by Simpson's rule in `cos θ` and
/// the midpoint rule in longitude.
pub fn sphere_log_integral(f: impl Fn(&[f64; 3]) -> f64, n_t: usize, n_phi: usize) -> f64 {
    let ht = 2.0 / n_t as f64;
    let hp = 2.0 * std::f64::consts::PI / n_phi as f64;
    let mut terms = Vec::with_capacity((n_t + 1) * n_phi);
    for i in 0..=n_t {
        let t = -1.0 + i as f64 * ht;
        let r = (1.0 - t * t).max(0.0).sqrt();
        let w = if i == 0 || i == n_t { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * hp;
            let u = [r * phi.cos(), r * phi.sin(), t];
            terms.push(f(&u) + (w * ht / 3.0 * hp).ln());
        }
    }
    log_sum_exp(&terms)
}

/// Pearson goodness-of-fit p-value. Cells with small expected counts are pooled.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pool = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pool.0 += c as f64;
            pool.1 += e;
        } else {
            cells.push((c as f64, e));
        }
    }
    if pool.1 > 0.0 {
        cells.push(pool);
    }
    if cells.len() < 2 {
        return 1.0;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    ChiSquared::new((cells.len() - 1) as f64).unwrap().sf(stat)
}

/// Asymptotic Kolmogorov tail probability `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let cdf: f64 = (1..=50)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-(m * m) * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let q: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum::<f64>()
            * 2.0;
        q.clamp(0.0, 1.0)
    }
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let p = kolmogorov_sf((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d);
    (d, p)
}

/// Empirical frequencies of `draw` over `reps` calls, one cell per outcome.
pub fn tally(cells: usize, reps: usize, mut draw: impl FnMut() -> usize) -> Vec<u64> {
    let mut counts = vec![0u64; cells];
    for _ in 0..reps {
        counts[draw()] += 1;
    }
    counts
}

/// Hyperparameters used for the planted-recovery runs.
pub fn recovery_hyper(v: usize) -> Arc<Hyperparams> {
    Arc::new(Hyperparams {
        alpha_phi0: 1.0,
        alpha_pi0: 1.0,
        alpha_omega: 1.0,
        alpha_phi: 1.0,
        alpha_pi: 1.0,
        catalog: CatalogParams::symmetric(v, 0.1).unwrap(),
        vmf_prior: VmfPrior { mu0: UnitVec3::NORTH_POLE, c0: 0.01, m_c: 3.0, sigma_c: 1.0 },
    })
}

/// Training and held-out customers drawn together from a planted model, with
/// the true location and topic labels of the training customers.
pub struct Planted {
    pub train: Arc<Dataset>,
    pub heldout: Dataset,
    pub s: Vec<u32>,
    pub z: Vec<u32>,
}

pub fn planted(config: &geolatent::synth::PlantedConfig, train: usize, seed: u64) -> Planted {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (data, truth) = geolatent::synth::generate_planted(config, &mut rng).unwrap();
    let v = data.catalog_size();
    let customers = data.customers();
    Planted {
        train: Arc::new(Dataset::new(customers[..train].to_vec(), v).unwrap()),
        heldout: Dataset::new(customers[train..].to_vec(), v).unwrap(),
        s: truth.s[..train].to_vec(),
        z: truth.z[..train].concat(),
    }
}

pub struct Recovery {
    pub ari_s: f64,
    pub ari_z: f64,
    pub per_view: f64,
}

pub fn score(state: &State, p: &Planted) -> Recovery {
    use geolatent::eval::{ari, heldout_loglik};
    Recovery {
        ari_s: ari(&state.assignments().s, &p.s).unwrap(),
        ari_z: ari(&state.assignments().z, &p.z).unwrap(),
        per_view: heldout_loglik(state, &p.heldout).unwrap().per_view,
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
