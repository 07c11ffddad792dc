//! Serial collapsed Gibbs sampler.
//!
//! A sweep visits every customer and resamples, in order, its interaction
//! cluster, its location factor and the topic of each of its views. All
//! conditionals are evaluated in log space. After the assignment pass the
//! topics take a pass of block and exchange moves, the concentration of every
//! live location factor takes one Metropolis-Hastings step, and the global
//! sticks are resampled on a fixed schedule.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::categorical::{sample_beta_one, sample_log_weights};
use crate::dirmult;
use crate::error::{Error, Result};
use crate::state::State;
use crate::vmf::{self, VmfPrior};

mod blocks;
pub use blocks::{block_pass, exchange_pass};

/// Order in which a sweep visits customers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    #[default]
    Forward,
    Reverse,
    /// A fixed permutation derived from the given seed.
    Permuted(u64),
}

impl SweepOrder {
    pub fn arrange(&self, customers: &mut [usize]) {
        match *self {
            SweepOrder::Forward => {}
            SweepOrder::Reverse => customers.reverse(),
            SweepOrder::Permuted(seed) => customers.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Random-walk scale on `ln c` for the concentration updates.
    pub mh_step_sigma: f64,
    pub sweeps_per_stick_resample: u32,
    pub rng_seed: u64,
    /// Sweeps between full recounts of the tables against the labels.
    pub recompute_interval: u32,
    /// Use the plain fixed-count product over a customer's views in the cluster
    /// conditional instead of the sequential predictive.
    pub strict_paper_mode: bool,
    pub order: SweepOrder,
    /// Run one pass of topic block and exchange moves per sweep.
    #[serde(default = "yes")]
    pub block_moves: bool,
}

fn yes() -> bool {
    true
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mh_step_sigma: 0.5,
            sweeps_per_stick_resample: 1,
            rng_seed: 0,
            recompute_interval: 100,
            strict_paper_mode: false,
            order: SweepOrder::Forward,
            block_moves: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mh_step_sigma > 0.0 && self.mh_step_sigma.is_finite()) {
            return Err(Error::Config(format!("mh_step_sigma must be > 0, got {}", self.mh_step_sigma)));
        }
        if self.sweeps_per_stick_resample == 0 {
            return Err(Error::Config("sweeps_per_stick_resample must be >= 1".into()));
        }
        if self.recompute_interval == 0 {
            return Err(Error::Config("recompute_interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Acceptance band outside of which the concentration step size is reported.
pub const MH_ACCEPTANCE_BAND: (f64, f64) = (0.15, 0.6);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDiagnostics {
    pub sweep: u64,
    pub log_joint: f64,
    pub num_t_clusters: usize,
    pub num_s_factors: usize,
    pub num_z_topics: usize,
    pub mh_acceptance_rate: f64,
    pub blocks_moved: u32,
}

impl SweepDiagnostics {
    pub fn mh_out_of_band(&self) -> bool {
        self.mh_acceptance_rate < MH_ACCEPTANCE_BAND.0 || self.mh_acceptance_rate > MH_ACCEPTANCE_BAND.1
    }
}

// ---- conditional weights ----

/// Unnormalized log weights for the cluster of customer `d`, which must be
/// detached from its cluster. Entry `num_t` is a new cluster.
pub fn t_log_weights(state: &State, d: usize, strict: bool) -> Vec<f64> {
    let h = state.hyper();
    let tb = state.tables();
    let s = state.s_of(d);
    let phi_s = s.map(|s| state.phi0().weights[s]);

    // (topic, earlier views of d on that topic, position among assigned views)
    let mut views: Vec<(usize, f64, f64)> = Vec::with_capacity(state.data().views(d).len());
    for j in 0..state.data().views(d).len() {
        if let Some(z) = state.z_of(d, j) {
            let (prior, pos) = if strict {
                (0.0, 0.0)
            } else {
                (views.iter().filter(|(zz, _, _)| *zz == z).count() as f64, views.len() as f64)
            };
            views.push((z, prior, pos));
        }
    }
    let pi0 = &state.pi0().weights;

    let mut out = Vec::with_capacity(state.num_t() + 1);
    for t in 0..state.num_t() {
        let mut w = (tb.n_t[t] as f64).ln();
        if let (Some(s), Some(p)) = (s, phi_s) {
            w += (tb.n_ts[t][s] as f64 + h.alpha_phi * p).ln() - (tb.n1_t[t] as f64 + h.alpha_phi).ln();
        }
        let row = &tb.n_tz[t];
        let n2 = tb.n2_t[t] as f64;
        for &(z, k, pos) in &views {
            w += (row[z] as f64 + k + h.alpha_pi * pi0[z]).ln() - (n2 + pos + h.alpha_pi).ln();
        }
        out.push(w);
    }
    let mut w = h.alpha_omega.ln();
    if let Some(p) = phi_s {
        w += p.ln();
    }
    for &(z, k, pos) in &views {
        w += (k + h.alpha_pi * pi0[z]).ln() - (pos + h.alpha_pi).ln();
    }
    out.push(w);
    out
}

/// Unnormalized log weights for the location factor of customer `d`, whose
/// location must be detached. The last entry is a new factor with
/// concentration `c_new`.
pub fn s_log_weights(state: &State, d: usize, c_new: f64) -> Vec<f64> {
    let h = state.hyper();
    let tb = state.tables();
    let x = state.data().location(d);
    let row = state.t_of(d).map(|t| &tb.n_ts[t]);
    let mut out = Vec::with_capacity(state.num_s() + 1);
    for s in 0..state.num_s() {
        let n = row.map_or(0, |r| r[s]) as f64;
        let prior = (n + h.alpha_phi * state.phi0().weights[s]).ln();
        out.push(prior + vmf::predictive_log_prob(x, &state.sum_s(s), state.c(s), &h.vmf_prior));
    }
    let new = (h.alpha_phi * state.phi0().remainder).ln() + vmf::predictive_log_prob(x, &[0.0; 3], c_new, &h.vmf_prior);
    out.push(new);
    out
}

/// Unnormalized log weights for the topic of view `j` of customer `d`, which
/// must be detached. The last entry is a new topic.
pub fn z_log_weights(state: &State, d: usize, j: usize) -> Vec<f64> {
    let h = state.hyper();
    let tb = state.tables();
    let v = state.data().views(d)[j] as usize;
    let row = state.t_of(d).map(|t| &tb.n_tz[t]);
    let mut out = Vec::with_capacity(state.num_z() + 1);
    for z in 0..state.num_z() {
        let n = row.map_or(0, |r| r[z]) as f64;
        let prior = (n + h.alpha_pi * state.pi0().weights[z]).ln();
        out.push(prior + dirmult::predictive_log_prob_unchecked(&tb.topics[z], v, &h.catalog));
    }
    out.push((h.alpha_pi * state.pi0().remainder).ln() + dirmult::new_topic_log_prob_unchecked(v, &h.catalog));
    out
}

// ---- single-variable updates ----

/// Draws and assigns the cluster of a detached customer. Returns the index.
pub fn sample_t<R: Rng + ?Sized>(state: &mut State, d: usize, strict: bool, rng: &mut R) -> Result<usize> {
    let weights = t_log_weights(state, d, strict);
    let mut t = sample_log_weights(&weights, rng);
    if t == state.num_t() {
        t = state.open_t();
    }
    state.assign_t(d, t)?;
    Ok(t)
}

/// Draws and assigns the location factor of a customer whose location is
/// detached. `aux_c` is the concentration offered to a new factor; when `None`
/// it is drawn from the log-normal prior.
pub fn sample_s<R: Rng + ?Sized>(state: &mut State, d: usize, aux_c: Option<f64>, rng: &mut R) -> Result<usize> {
    let c_new = match aux_c {
        Some(c) => c,
        None => state.hyper().vmf_prior.sample_c(rng),
    };
    let weights = s_log_weights(state, d, c_new);
    let mut s = sample_log_weights(&weights, rng);
    if s == state.num_s() {
        let frac = sample_beta_one(state.hyper().alpha_phi0, rng);
        s = state.open_s(c_new, frac);
    }
    state.assign_s(d, s)?;
    Ok(s)
}

/// Draws and assigns the topic of a detached view.
pub fn sample_z<R: Rng + ?Sized>(state: &mut State, d: usize, j: usize, rng: &mut R) -> Result<usize> {
    let weights = z_log_weights(state, d, j);
    let mut z = sample_log_weights(&weights, rng);
    if z == state.num_z() {
        let frac = sample_beta_one(state.hyper().alpha_pi0, rng);
        z = state.open_z(frac);
    }
    state.add_view(d, j, z)?;
    Ok(z)
}

/// Log of the concentration target: log-normal prior times the collapsed
/// marginal of the factor's `n` members with resultant `sum_vec`.
pub fn c_log_target(sum_vec: &[f64; 3], n: usize, c: f64, prior: &VmfPrior) -> f64 {
    prior.log_prior_c(c) + vmf::log_marginal(sum_vec, n, c, prior)
}

/// Log acceptance ratio of moving `c -> c_prop` under a random walk on `ln c`.
/// The `ln c_prop - ln c` term is the Jacobian of the log-scale proposal.
pub fn mh_log_accept(c: f64, c_prop: f64, log_target: impl Fn(f64) -> f64) -> f64 {
    log_target(c_prop) - log_target(c) + c_prop.ln() - c.ln()
}

/// One Metropolis-Hastings step on `ln c`. Returns the new value and whether
/// the proposal was accepted.
pub fn mh_step<R: Rng + ?Sized>(c: f64, sigma: f64, log_target: impl Fn(f64) -> f64, rng: &mut R) -> (f64, bool) {
    let step: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma;
    let proposal = c * step.exp();
    let log_a = mh_log_accept(c, proposal, log_target);
    let u: f64 = rng.gen();
    if u.ln() < log_a && proposal > 0.0 && proposal.is_finite() {
        (proposal, true)
    } else {
        (c, false)
    }
}

/// One Metropolis-Hastings update of the concentration of factor `s`.
pub fn sample_c<R: Rng + ?Sized>(state: &mut State, s: usize, sigma: f64, rng: &mut R) -> bool {
    let sum = state.sum_s(s);
    let n = state.tables().n_s[s] as usize;
    let prior = state.hyper().vmf_prior;
    let (c, accepted) = mh_step(state.c(s), sigma, |c| c_log_target(&sum, n, c, &prior), rng);
    state.set_c(s, c);
    accepted
}

// ---- sweeps ----

/// Resamples cluster, location factor and view topics for each listed customer.
pub fn assignment_pass<R: Rng + ?Sized>(state: &mut State, customers: &[usize], strict: bool, rng: &mut R) -> Result<()> {
    for &d in customers {
        state.unassign_t(d)?;
        sample_t(state, d, strict, rng)?;

        let s = state.s_of(d).ok_or_else(|| Error::StateCorruption(format!("customer {d} has no location factor")))?;
        let aux = (state.tables().n_s[s] == 1).then(|| state.c(s));
        state.unassign_s(d)?;
        sample_s(state, d, aux, rng)?;

        for j in 0..state.data().views(d).len() {
            state.remove_view(d, j)?;
            sample_z(state, d, j, rng)?;
        }
    }
    Ok(())
}

/// Outcome of the global updates of one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlobalStats {
    pub mh_acceptance_rate: f64,
    pub blocks_moved: u32,
}

/// Topic block and exchange moves, concentration updates and stick resampling on the
/// merged state.
pub fn global_pass<R: Rng + ?Sized>(state: &mut State, config: &SamplerConfig, sweep_index: u64, rng: &mut R) -> Result<GlobalStats> {
    let mut stats = GlobalStats::default();
    if config.block_moves {
        stats.blocks_moved = block_pass(state, rng)? + exchange_pass(state, rng)?;
    }
    let num_s = state.num_s();
    let mut accepted = 0usize;
    for s in 0..num_s {
        if sample_c(state, s, config.mh_step_sigma, rng) {
            accepted += 1;
        }
    }
    if (sweep_index + 1) % config.sweeps_per_stick_resample as u64 == 0 {
        state.resample_phi0(rng);
        state.resample_pi0(rng);
    }
    if num_s > 0 {
        stats.mh_acceptance_rate = accepted as f64 / num_s as f64;
    }
    Ok(stats)
}

pub fn diagnostics(state: &State, sweep: u64, stats: &GlobalStats) -> SweepDiagnostics {
    SweepDiagnostics {
        sweep,
        log_joint: log_joint(state),
        num_t_clusters: state.num_t(),
        num_s_factors: state.num_s(),
        num_z_topics: state.num_z(),
        mh_acceptance_rate: stats.mh_acceptance_rate,
        blocks_moved: stats.blocks_moved,
    }
}

pub fn customer_order(range: std::ops::Range<usize>, order: SweepOrder) -> Vec<usize> {
    let mut v: Vec<usize> = range.collect();
    order.arrange(&mut v);
    v
}

/// One full sweep. The assignment pass runs on a generator seeded from `rng`
/// so that a single-shard parallel epoch reproduces it exactly.
pub fn sweep(state: &mut State, config: &SamplerConfig, sweep_index: u64, rng: &mut ChaCha8Rng) -> Result<SweepDiagnostics> {
    let order = customer_order(0..state.data().len(), config.order);
    let mut local = ChaCha8Rng::seed_from_u64(rng.next_u64());
    assignment_pass(state, &order, config.strict_paper_mode, &mut local)?;
    let stats = global_pass(state, config, sweep_index, rng)?;
    if (sweep_index + 1) % config.recompute_interval as u64 == 0 {
        state.audit()?;
    }
    Ok(diagnostics(state, sweep_index, &stats))
}

/// Sequential initialization: customers join one at a time, each drawing its
/// location factor and view topics from the conditionals given the customers
/// already placed, then its cluster.
pub fn initialize<R: Rng + ?Sized>(state: &mut State, order: SweepOrder, strict: bool, rng: &mut R) -> Result<()> {
    for d in customer_order(0..state.data().len(), order) {
        if state.t_of(d).is_some() || state.s_of(d).is_some() {
            return Err(Error::StateCorruption(format!("customer {d} assigned before initialization")));
        }
        sample_s(state, d, None, rng)?;
        for j in 0..state.data().views(d).len() {
            sample_z(state, d, j, rng)?;
        }
        sample_t(state, d, strict, rng)?;
    }
    Ok(())
}

/// Joint log score of the collapsed state: cluster partition, per-cluster
/// factor allocations given the global sticks, collapsed location and topic
/// marginals, and the log-normal priors on the concentrations.
pub fn log_joint(state: &State) -> f64 {
    let h = state.hyper();
    let tb = state.tables();
    let n: u64 = tb.total_customers();
    let mut acc = 0.0;

    // exchangeable partition of customers into clusters
    acc += tb.num_t() as f64 * h.alpha_omega.ln() + ln_gamma(h.alpha_omega) - ln_gamma(h.alpha_omega + n as f64);
    for &nt in &tb.n_t {
        acc += ln_gamma(nt as f64);
    }

    // per-cluster Dirichlet-multinomial over factors given the sticks
    let group = |rows: &[Vec<u32>], totals: &[u32], conc: f64, weights: &[f64]| -> f64 {
        let mut a = 0.0;
        for (row, &tot) in rows.iter().zip(totals) {
            a += ln_gamma(conc) - ln_gamma(conc + tot as f64);
            for (k, &m) in row.iter().enumerate() {
                if m > 0 {
                    let b = conc * weights[k];
                    a += ln_gamma(m as f64 + b) - ln_gamma(b);
                }
            }
        }
        a
    };
    acc += group(&tb.n_ts, &tb.n1_t, h.alpha_phi, &state.phi0().weights);
    acc += group(&tb.n_tz, &tb.n2_t, h.alpha_pi, &state.pi0().weights);

    for s in 0..tb.num_s() {
        let c = state.c(s);
        acc += vmf::log_marginal(&state.sum_s(s), tb.n_s[s] as usize, c, &h.vmf_prior);
        acc += h.vmf_prior.log_prior_c(c);
    }
    for topic in &tb.topics {
        acc += dirmult::log_marginal(topic, &h.catalog);
    }
    acc
}

/// Owns the generator and sweep counter of a serial run.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub config: SamplerConfig,
    rng: ChaCha8Rng,
    sweeps_done: u64,
}

impl Sampler {
    pub fn new(config: SamplerConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Sampler { config, rng, sweeps_done: 0 }
    }

    pub fn from_parts(config: SamplerConfig, rng: ChaCha8Rng, sweeps_done: u64) -> Self {
        Sampler { config, rng, sweeps_done }
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn sweeps_done(&self) -> u64 {
        self.sweeps_done
    }

    pub fn initialize(&mut self, state: &mut State) -> Result<()> {
        initialize(state, self.config.order, self.config.strict_paper_mode, &mut self.rng)
    }

    pub fn sweep(&mut self, state: &mut State) -> Result<SweepDiagnostics> {
        let diag = sweep(state, &self.config, self.sweeps_done, &mut self.rng)?;
        self.sweeps_done += 1;
        Ok(diag)
    }
}
