//! Forward simulation from the generative model, with ground truth.
//!
//! Two exact-in-distribution modes are provided. `Sticks` draws the global and
//! per-cluster measures by truncated stick-breaking; `Crp` seats customers in a
//! Chinese restaurant franchise and never truncates. A third generator,
//! [`generate_planted`], draws data from explicitly specified atoms for
//! recovery experiments.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::categorical::{sample_beta_one, sample_dirichlet, sample_weights};
use crate::error::{Error, Result};
use crate::geo::{latlon_to_unit, GeoPoint, UnitVec3};
use crate::sampler::{self, SamplerConfig};
use crate::state::{AssignmentState, Customer, Dataset, GlobalSticks, Hyperparams, State};
use crate::vmf::{self, VmfParams};

/// Largest stick mass allowed to fall beyond the truncation level.
pub const MAX_TAIL_MASS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewCount {
    Fixed { count: u32 },
    Poisson { mean: f64 },
}

impl ViewCount {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            ViewCount::Fixed { count } => count as usize,
            ViewCount::Poisson { mean } if mean <= 0.0 => 0,
            ViewCount::Poisson { mean } => Poisson::new(mean).unwrap().sample(rng) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    #[default]
    Sticks,
    Crp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub customers: usize,
    pub views: ViewCount,
    pub truncation: usize,
    pub mode: SynthMode,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { customers: 200, views: ViewCount::Poisson { mean: 20.0 }, truncation: 100, mode: SynthMode::Sticks, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationAtom {
    pub mu: UnitVec3,
    pub c: f64,
}

/// Labels and atoms behind a generated dataset. Labels are dense and numbered
/// in order of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t: Vec<u32>,
    pub s: Vec<u32>,
    /// Topic of every view, per customer.
    pub z: Vec<Vec<u32>>,
    pub location_factors: Vec<LocationAtom>,
    /// Item distribution of each topic.
    pub topics: Vec<Vec<f64>>,
    /// Global sticks restricted to the factors that were used.
    pub phi0: GlobalSticks,
    pub pi0: GlobalSticks,
}

impl GroundTruth {
    pub fn flat_z(&self) -> Vec<u32> {
        self.z.iter().flatten().copied().collect()
    }
}

/// Relabels by order of first appearance.
#[derive(Default)]
struct Compactor {
    map: HashMap<usize, u32>,
    order: Vec<usize>,
}

impl Compactor {
    fn label(&mut self, raw: usize) -> u32 {
        let next = self.map.len() as u32;
        *self.map.entry(raw).or_insert_with(|| {
            self.order.push(raw);
            next
        })
    }
}

fn truncated_gem<R: Rng + ?Sized>(alpha: f64, truncation: usize, what: &str, rng: &mut R) -> Result<Vec<f64>> {
    let mut rest = 1.0;
    let mut w = Vec::with_capacity(truncation);
    for _ in 0..truncation {
        let b = sample_beta_one(alpha, rng);
        w.push(rest * b);
        rest *= 1.0 - b;
    }
    if rest >= MAX_TAIL_MASS {
        return Err(Error::Config(format!(
            "truncation {truncation} leaves {rest:.3e} of the {what} stick mass; increase the truncation level"
        )));
    }
    Ok(w)
}

fn dirichlet_over<R: Rng + ?Sized>(conc: f64, base: &[f64], rng: &mut R) -> Vec<f64> {
    let params: Vec<f64> = base.iter().map(|b| (conc * b).max(1e-300)).collect();
    sample_dirichlet(&params, rng)
}

fn draw_location_atom<R: Rng + ?Sized>(hyper: &Hyperparams, rng: &mut R) -> LocationAtom {
    let p = &hyper.vmf_prior;
    let mu = vmf::sample_vmf(&VmfParams { mu: p.mu0, c: p.c0 }, rng);
    LocationAtom { mu, c: p.sample_c(rng) }
}

fn draw_topic<R: Rng + ?Sized>(hyper: &Hyperparams, rng: &mut R) -> Vec<f64> {
    sample_dirichlet(hyper.catalog.gamma(), rng)
}

/// Forward-samples a dataset and its ground truth.
pub fn generate<R: Rng + ?Sized>(hyper: &Hyperparams, config: &SynthConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    hyper.validate()?;
    match config.mode {
        SynthMode::Sticks => generate_sticks(hyper, config, rng),
        SynthMode::Crp => generate_crp(hyper, config, rng),
    }
}

fn generate_sticks<R: Rng + ?Sized>(hyper: &Hyperparams, config: &SynthConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    let trunc = config.truncation.max(1);
    let phi0 = truncated_gem(hyper.alpha_phi0, trunc, "location", rng)?;
    let pi0 = truncated_gem(hyper.alpha_pi0, trunc, "topic", rng)?;
    let omega = truncated_gem(hyper.alpha_omega, trunc, "cluster", rng)?;
    let loc_atoms: Vec<LocationAtom> = (0..trunc).map(|_| draw_location_atom(hyper, rng)).collect();
    let topic_atoms: Vec<Vec<f64>> = (0..trunc).map(|_| draw_topic(hyper, rng)).collect();

    // per-cluster measures, drawn when a cluster is first used
    let mut cluster_measures: HashMap<usize, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let (mut tc, mut sc, mut zc) = (Compactor::default(), Compactor::default(), Compactor::default());
    let mut customers = Vec::with_capacity(config.customers);
    let (mut t_lab, mut s_lab, mut z_lab) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..config.customers {
        let t = sample_weights(&omega, rng);
        let (phi_t, pi_t) = cluster_measures
            .entry(t)
            .or_insert_with(|| (dirichlet_over(hyper.alpha_phi, &phi0, rng), dirichlet_over(hyper.alpha_pi, &pi0, rng)));
        let s = sample_weights(phi_t, rng);
        let atom = &loc_atoms[s];
        let location = vmf::sample_vmf(&VmfParams { mu: atom.mu, c: atom.c }, rng);
        let j = config.views.draw(rng);
        let mut views = Vec::with_capacity(j);
        let mut zs = Vec::with_capacity(j);
        for _ in 0..j {
            let z = sample_weights(pi_t, rng);
            views.push(sample_weights(&topic_atoms[z], rng) as u32);
            zs.push(zc.label(z));
        }
        t_lab.push(tc.label(t));
        s_lab.push(sc.label(s));
        z_lab.push(zs);
        customers.push(Customer { id: format!("cust{i:06}"), location, views });
    }
    let used = |weights: &[f64], order: &[usize]| {
        let w: Vec<f64> = order.iter().map(|k| weights[*k]).collect();
        let rem = (1.0 - w.iter().sum::<f64>()).max(f64::MIN_POSITIVE);
        GlobalSticks { weights: w, remainder: rem }
    };
    let truth = GroundTruth {
        t: t_lab,
        s: s_lab,
        z: z_lab,
        location_factors: sc.order.iter().map(|k| loc_atoms[*k].clone()).collect(),
        topics: zc.order.iter().map(|k| topic_atoms[*k].clone()).collect(),
        phi0: used(&phi0, &sc.order),
        pi0: used(&pi0, &zc.order),
    };
    Ok((Dataset::new(customers, hyper.catalog.size())?, truth))
}

/// One restaurant of a franchise: table sizes and the dish each table serves.
#[derive(Default)]
struct Restaurant {
    tables: Vec<u32>,
    dish: Vec<usize>,
}

impl Restaurant {
    /// Seats one customer; returns the dish, creating tables and dishes as needed.
    fn seat<R: Rng + ?Sized>(&mut self, conc: f64, dish_tables: &mut Vec<u32>, conc0: f64, rng: &mut R) -> (usize, bool) {
        let mut w: Vec<f64> = self.tables.iter().map(|n| *n as f64).collect();
        w.push(conc);
        let k = sample_weights(&w, rng);
        if k < self.tables.len() {
            self.tables[k] += 1;
            return (self.dish[k], false);
        }
        let mut dw: Vec<f64> = dish_tables.iter().map(|m| *m as f64).collect();
        dw.push(conc0);
        let dish = sample_weights(&dw, rng);
        let fresh = dish == dish_tables.len();
        if fresh {
            dish_tables.push(0);
        }
        dish_tables[dish] += 1;
        self.tables.push(1);
        self.dish.push(dish);
        (dish, fresh)
    }
}

fn generate_crp<R: Rng + ?Sized>(hyper: &Hyperparams, config: &SynthConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    let mut cluster_sizes: Vec<u32> = Vec::new();
    let mut loc_rest: Vec<Restaurant> = Vec::new();
    let mut view_rest: Vec<Restaurant> = Vec::new();
    let mut loc_tables: Vec<u32> = Vec::new();
    let mut topic_tables: Vec<u32> = Vec::new();
    let mut loc_atoms: Vec<LocationAtom> = Vec::new();
    let mut topic_atoms: Vec<Vec<f64>> = Vec::new();

    let mut customers = Vec::with_capacity(config.customers);
    let (mut t_lab, mut s_lab, mut z_lab) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..config.customers {
        let mut w: Vec<f64> = cluster_sizes.iter().map(|n| *n as f64).collect();
        w.push(hyper.alpha_omega);
        let t = sample_weights(&w, rng);
        if t == cluster_sizes.len() {
            cluster_sizes.push(0);
            loc_rest.push(Restaurant::default());
            view_rest.push(Restaurant::default());
        }
        cluster_sizes[t] += 1;

        let (s, fresh) = loc_rest[t].seat(hyper.alpha_phi, &mut loc_tables, hyper.alpha_phi0, rng);
        if fresh {
            loc_atoms.push(draw_location_atom(hyper, rng));
        }
        let atom = &loc_atoms[s];
        let location = vmf::sample_vmf(&VmfParams { mu: atom.mu, c: atom.c }, rng);

        let j = config.views.draw(rng);
        let mut views = Vec::with_capacity(j);
        let mut zs = Vec::with_capacity(j);
        for _ in 0..j {
            let (z, fresh) = view_rest[t].seat(hyper.alpha_pi, &mut topic_tables, hyper.alpha_pi0, rng);
            if fresh {
                topic_atoms.push(draw_topic(hyper, rng));
            }
            views.push(sample_weights(&topic_atoms[z], rng) as u32);
            zs.push(z as u32);
        }
        t_lab.push(t as u32);
        s_lab.push(s as u32);
        z_lab.push(zs);
        customers.push(Customer { id: format!("cust{i:06}"), location, views });
    }

    // given the table counts, the global sticks are Dirichlet(m_1..m_K, alpha0)
    let sticks = |tables: &[u32], alpha0: f64, rng: &mut R| {
        let mut params: Vec<f64> = tables.iter().map(|m| *m as f64).collect();
        params.push(alpha0);
        let mut w = sample_dirichlet(&params, rng);
        w.iter_mut().for_each(|p| *p = p.max(f64::MIN_POSITIVE));
        let remainder = w.pop().unwrap();
        GlobalSticks { weights: w, remainder }
    };
    let phi0 = sticks(&loc_tables, hyper.alpha_phi0, rng);
    let pi0 = sticks(&topic_tables, hyper.alpha_pi0, rng);

    // dishes are numbered in creation order, which is first-appearance order
    // for s; topics likewise, since a dish is created when first served
    let truth = GroundTruth { t: t_lab, s: s_lab, z: z_lab, location_factors: loc_atoms, topics: topic_atoms, phi0, pi0 };
    Ok((Dataset::new(customers, hyper.catalog.size())?, truth))
}

/// Explicit atoms for recovery experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub location_factors: Vec<(GeoPoint, f64)>,
    pub topics: Vec<Vec<f64>>,
    /// Per interaction cluster: weights over location factors and over topics.
    pub clusters: Vec<(Vec<f64>, Vec<f64>)>,
    pub cluster_weights: Vec<f64>,
    pub customers: usize,
    pub views: ViewCount,
}

impl PlantedConfig {
    /// Three well-separated location factors (c = 50), four topics on
    /// disjoint ten-item blocks of a 40-item catalog, three clusters.
    pub fn well_separated(customers: usize) -> Self {
        let block = |k: usize| (0..40).map(|v| if v / 10 == k { 0.1 } else { 0.0 }).collect::<Vec<f64>>();
        PlantedConfig {
            location_factors: vec![
                (GeoPoint { lat: 40.0, lon: -100.0 }, 50.0),
                (GeoPoint { lat: 50.0, lon: 10.0 }, 50.0),
                (GeoPoint { lat: -30.0, lon: 140.0 }, 50.0),
            ],
            topics: (0..4).map(block).collect(),
            clusters: vec![
                (vec![1.0, 0.0, 0.0], vec![0.7, 0.3, 0.0, 0.0]),
                (vec![0.0, 1.0, 0.0], vec![0.0, 0.6, 0.4, 0.0]),
                (vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.3, 0.7]),
            ],
            cluster_weights: vec![1.0, 1.0, 1.0],
            customers,
            views: ViewCount::Poisson { mean: 20.0 },
        }
    }

    pub fn catalog_size(&self) -> usize {
        self.topics.first().map_or(0, Vec::len)
    }
}

pub fn generate_planted<R: Rng + ?Sized>(config: &PlantedConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    let v = config.catalog_size();
    if v == 0 || config.topics.iter().any(|t| t.len() != v) {
        return Err(Error::Config("planted topics must share a nonempty catalog".into()));
    }
    if config.clusters.len() != config.cluster_weights.len() {
        return Err(Error::Config("one weight per planted cluster is required".into()));
    }
    let atoms: Vec<LocationAtom> = config
        .location_factors
        .iter()
        .map(|(p, c)| Ok(LocationAtom { mu: latlon_to_unit(*p)?, c: *c }))
        .collect::<Result<_>>()?;
    let (mut tc, mut sc, mut zc) = (Compactor::default(), Compactor::default(), Compactor::default());
    let mut customers = Vec::with_capacity(config.customers);
    let (mut t_lab, mut s_lab, mut z_lab) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..config.customers {
        let t = sample_weights(&config.cluster_weights, rng);
        let (loc_w, topic_w) = &config.clusters[t];
        let s = sample_weights(loc_w, rng);
        let location = vmf::sample_vmf(&VmfParams { mu: atoms[s].mu, c: atoms[s].c }, rng);
        let j = config.views.draw(rng);
        let mut views = Vec::with_capacity(j);
        let mut zs = Vec::with_capacity(j);
        for _ in 0..j {
            let z = sample_weights(topic_w, rng);
            views.push(sample_weights(&config.topics[z], rng) as u32);
            zs.push(zc.label(z));
        }
        t_lab.push(tc.label(t));
        s_lab.push(sc.label(s));
        z_lab.push(zs);
        customers.push(Customer { id: format!("cust{i:06}"), location, views });
    }
    let even = |k: usize| GlobalSticks { weights: vec![0.9 / k as f64; k], remainder: 0.1 };
    let truth = GroundTruth {
        t: t_lab,
        s: s_lab,
        z: z_lab,
        location_factors: sc.order.iter().map(|k| atoms[*k].clone()).collect(),
        topics: zc.order.iter().map(|k| config.topics[*k].clone()).collect(),
        phi0: even(sc.order.len()),
        pi0: even(zc.order.len()),
    };
    Ok((Dataset::new(customers, v)?, truth))
}

/// A sampler state positioned at the ground truth.
pub fn state_from_truth(data: Arc<Dataset>, hyper: Arc<Hyperparams>, truth: &GroundTruth) -> Result<State> {
    let assign = AssignmentState {
        t: truth.t.clone(),
        s: truth.s.clone(),
        z: truth.flat_z(),
        c: truth.location_factors.iter().map(|a| a.c).collect(),
    };
    State::from_assignments(data, hyper, assign, truth.phi0.clone(), truth.pi0.clone())
}

/// Redraws every observation from its conditional given the latent state:
/// factor mean directions and topic distributions are drawn from their
/// posteriors, then locations and items are drawn afresh. View counts stay fixed.
pub fn resample_data<R: Rng + ?Sized>(state: &State, rng: &mut R) -> Result<Dataset> {
    let h = state.hyper();
    let data = state.data();
    let mus: Vec<UnitVec3> = (0..state.num_s())
        .map(|s| vmf::sample_vmf(&vmf::posterior_direction(&state.sum_s(s), state.c(s), &h.vmf_prior), rng))
        .collect();
    let betas: Vec<Vec<f64>> = state
        .tables()
        .topics
        .iter()
        .map(|tc| {
            let params: Vec<f64> = tc.n_zv.iter().enumerate().map(|(v, n)| *n as f64 + h.catalog.gamma_at(v)).collect();
            sample_dirichlet(&params, rng)
        })
        .collect();
    let mut customers = Vec::with_capacity(data.len());
    for d in 0..data.len() {
        let s = state.s_of(d).ok_or_else(|| Error::StateCorruption(format!("customer {d} unassigned")))?;
        let location = vmf::sample_vmf(&VmfParams { mu: mus[s], c: state.c(s) }, rng);
        let views = (0..data.views(d).len())
            .map(|j| {
                let z = state.z_of(d, j).expect("fully assigned state");
                sample_weights(&betas[z], rng) as u32
            })
            .collect();
        customers.push(Customer { id: data.customer(d).id.clone(), location, views });
    }
    Dataset::new(customers, data.catalog_size())
}

/// Statistics compared between forward and successive-conditional simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GewekeStats {
    pub live_topics: f64,
    pub mean_c: f64,
    pub mean_resultant_length: f64,
}

pub fn data_resultant_length(data: &Dataset) -> f64 {
    let mut s = [0.0; 3];
    for c in data.customers() {
        for i in 0..3 {
            s[i] += c.location.as_array()[i];
        }
    }
    crate::geo::norm3(&s) / data.len().max(1) as f64
}

pub fn forward_stats(data: &Dataset, truth: &GroundTruth) -> GewekeStats {
    let cs: Vec<f64> = truth.location_factors.iter().map(|a| a.c).collect();
    GewekeStats {
        live_topics: truth.topics.len() as f64,
        mean_c: cs.iter().sum::<f64>() / cs.len().max(1) as f64,
        mean_resultant_length: data_resultant_length(data),
    }
}

pub fn state_stats(state: &State) -> GewekeStats {
    let cs = &state.assignments().c;
    GewekeStats {
        live_topics: state.num_z() as f64,
        mean_c: cs.iter().sum::<f64>() / cs.len().max(1) as f64,
        mean_resultant_length: data_resultant_length(state.data()),
    }
}

/// Successive-conditional chain: alternates a parameter sweep with a redraw of
/// the data given the parameters.
pub struct GewekeChain {
    pub state: State,
    config: SamplerConfig,
    rng: ChaCha8Rng,
    cycles: u64,
}

impl GewekeChain {
    /// Starts from a forward draw.
    pub fn new(data: Dataset, truth: &GroundTruth, hyper: Arc<Hyperparams>, config: SamplerConfig, rng: ChaCha8Rng) -> Result<Self> {
        let state = state_from_truth(Arc::new(data), hyper, truth)?;
        Ok(GewekeChain { state, config, rng, cycles: 0 })
    }

    /// One sweep over the latent variables followed by one data redraw.
    pub fn perturb_resample(&mut self) -> Result<()> {
        sampler::sweep(&mut self.state, &self.config, self.cycles, &mut self.rng)?;
        let data = resample_data(&self.state, &mut self.rng)?;
        self.state.replace_data(Arc::new(data))?;
        self.cycles += 1;
        Ok(())
    }

    pub fn run(&mut self, cycles: usize) -> Result<GewekeStats> {
        for _ in 0..cycles {
            self.perturb_resample()?;
        }
        Ok(state_stats(&self.state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirmult::CatalogParams;
    use crate::vmf::VmfPrior;
    use rand::SeedableRng;

    fn hyper(alpha_omega: f64) -> Hyperparams {
        Hyperparams {
            alpha_phi0: 1.0,
            alpha_pi0: 1.0,
            alpha_omega,
            alpha_phi: 1.0,
            alpha_pi: 1.0,
            catalog: CatalogParams::symmetric(6, 0.5).unwrap(),
            vmf_prior: VmfPrior { mu0: UnitVec3::NORTH_POLE, c0: 100.0, m_c: 50f64.ln(), sigma_c: 0.05 },
        }
    }

    #[test]
    fn generated_data_is_consistent() {
        for mode in [SynthMode::Sticks, SynthMode::Crp] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let cfg = SynthConfig { customers: 60, views: ViewCount::Poisson { mean: 4.0 }, mode, ..Default::default() };
            let h = Arc::new(hyper(1.0));
            let (data, truth) = generate(&h, &cfg, &mut rng).unwrap();
            assert_eq!(data.len(), 60);
            assert_eq!(truth.flat_z().len(), data.total_views());
            let st = state_from_truth(Arc::new(data), h, &truth).unwrap();
            st.audit().unwrap();
            assert!((st.phi0().total() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_cluster_concentration_gives_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SynthConfig { customers: 50, mode: SynthMode::Crp, ..Default::default() };
        let (_, truth) = generate(&hyper(1e-12), &cfg, &mut rng).unwrap();
        assert!(truth.t.iter().all(|t| *t == 0));
    }

    #[test]
    fn expected_cluster_count() {
        let alpha = 2.0;
        let n = 30;
        let expected: f64 = (0..n).map(|i| alpha / (alpha + i as f64)).sum();
        for mode in [SynthMode::Crp, SynthMode::Sticks] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let cfg = SynthConfig { customers: n, views: ViewCount::Fixed { count: 0 }, mode, truncation: 200, ..Default::default() };
            let counts: Vec<f64> = (0..1000)
                .map(|_| {
                    let (_, truth) = generate(&hyper(alpha), &cfg, &mut rng).unwrap();
                    (*truth.t.iter().max().unwrap() + 1) as f64
                })
                .collect();
            let mean = counts.iter().sum::<f64>() / 1000.0;
            let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 999.0;
            assert!((mean - expected).abs() < 3.0 * (var / 1000.0).sqrt(), "{mode:?}: {mean} vs {expected}");
        }
    }

    #[test]
    fn concentrated_factors_are_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SynthConfig { customers: 400, views: ViewCount::Fixed { count: 1 }, mode: SynthMode::Crp, ..Default::default() };
        let (data, truth) = generate(&hyper(1.0), &cfg, &mut rng).unwrap();
        for s in 0..truth.location_factors.len() {
            let members: Vec<usize> = (0..data.len()).filter(|d| truth.s[*d] as usize == s).collect();
            if members.len() < 10 {
                continue;
            }
            let mut sum = [0.0; 3];
            for d in &members {
                for i in 0..3 {
                    sum[i] += data.location(*d).as_array()[i];
                }
            }
            assert!(crate::geo::norm3(&sum) / members.len() as f64 >= 0.95);
        }
    }

    #[test]
    fn truncation_check_fires() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SynthConfig { truncation: 5, ..Default::default() };
        assert!(matches!(generate(&hyper(1.0), &cfg, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn zero_cycles_leave_initial_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = Arc::new(hyper(1.0));
        let cfg = SynthConfig { customers: 5, views: ViewCount::Poisson { mean: 3.0 }, mode: SynthMode::Crp, ..Default::default() };
        let (data, truth) = generate(&h, &cfg, &mut rng).unwrap();
        let mut chain = GewekeChain::new(data.clone(), &truth, h, SamplerConfig::default(), ChaCha8Rng::seed_from_u64(1)).unwrap();
        let stats = chain.run(0).unwrap();
        assert_eq!(stats, forward_stats(&data, &truth));
        chain.run(3).unwrap();
        chain.state.audit().unwrap();
    }

    #[test]
    fn planted_recovery_preset() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (data, truth) = generate_planted(&PlantedConfig::well_separated(90), &mut rng).unwrap();
        assert_eq!(data.catalog_size(), 40);
        assert_eq!(truth.location_factors.len(), 3);
        assert_eq!(truth.topics.len(), 4);
    }
}
