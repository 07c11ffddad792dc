//! Latent state of the model and its sufficient statistics.
//!
//! Every customer `d` carries an interaction cluster `t_d` and a location factor
//! `s_d`; every view carries a video topic `z`. The count tables are kept in
//! sync with these labels by the `add_*` / `remove_*` operations, which also
//! prune factors as they empty out. Pruning compacts indices while preserving
//! the relative order of the surviving factors.

mod data;
mod sticks;
mod tables;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use data::{Customer, Dataset, FixedVec3};
pub use sticks::{resample_sticks, GlobalSticks};
pub use tables::CountTables;

use crate::dirmult::{CatalogParams, TopicCounts};
use crate::error::{Error, Result};
use crate::vmf::VmfPrior;

/// Label of an item that is currently not assigned to any factor.
pub const UNASSIGNED: u32 = u32::MAX;

/// Fixed scalars of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Concentration of the global location DP.
    pub alpha_phi0: f64,
    /// Concentration of the global topic DP.
    pub alpha_pi0: f64,
    /// Concentration of the top-level DP over interaction clusters.
    pub alpha_omega: f64,
    /// Per-cluster concentration over location factors.
    pub alpha_phi: f64,
    /// Per-cluster concentration over topics.
    pub alpha_pi: f64,
    pub catalog: CatalogParams,
    pub vmf_prior: VmfPrior,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha_phi0", self.alpha_phi0),
            ("alpha_pi0", self.alpha_pi0),
            ("alpha_omega", self.alpha_omega),
            ("alpha_phi", self.alpha_phi),
            ("alpha_pi", self.alpha_pi),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        self.vmf_prior.validate()
    }
}

/// Indicator values plus per-location-factor concentrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentState {
    pub t: Vec<u32>,
    pub s: Vec<u32>,
    /// Flat per-view topics, laid out by [`Dataset::view_offset`].
    pub z: Vec<u32>,
    pub c: Vec<f64>,
}

/// Which family of factors an index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorKind {
    Cluster,
    Location,
    Topic,
}

/// A factor removed by compaction. Indices above `index` shift down by one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pruned {
    pub kind: FactorKind,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct State {
    data: Arc<Dataset>,
    hyper: Arc<Hyperparams>,
    assign: AssignmentState,
    tables: CountTables,
    phi0: GlobalSticks,
    pi0: GlobalSticks,
    // identities that survive compaction, used to align factors across shards
    t_uid: Vec<u64>,
    s_uid: Vec<u64>,
    z_uid: Vec<u64>,
    next_uid: u64,
}

fn corrupt<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::StateCorruption(msg.into()))
}

impl State {
    /// A state with every customer and view unassigned.
    pub fn empty(data: Arc<Dataset>, hyper: Arc<Hyperparams>) -> Result<Self> {
        hyper.validate()?;
        if hyper.catalog.size() != data.catalog_size() {
            return Err(Error::Config(format!(
                "gamma has {} entries but the catalog has {} items",
                hyper.catalog.size(),
                data.catalog_size()
            )));
        }
        let n = data.len();
        let views = data.total_views();
        Ok(State {
            assign: AssignmentState { t: vec![UNASSIGNED; n], s: vec![UNASSIGNED; n], z: vec![UNASSIGNED; views], c: Vec::new() },
            data,
            hyper,
            tables: CountTables::empty(),
            phi0: GlobalSticks::default(),
            pi0: GlobalSticks::default(),
            t_uid: Vec::new(),
            s_uid: Vec::new(),
            z_uid: Vec::new(),
            next_uid: 0,
        })
    }

    /// Rebuilds a state from stored labels. Every label must be assigned and
    /// every factor must have at least one member.
    pub fn from_assignments(
        data: Arc<Dataset>,
        hyper: Arc<Hyperparams>,
        assign: AssignmentState,
        phi0: GlobalSticks,
        pi0: GlobalSticks,
    ) -> Result<Self> {
        let mut st = State::empty(data, hyper)?;
        if assign.t.len() != st.data.len() || assign.s.len() != st.data.len() {
            return Err(Error::LengthMismatch(assign.t.len(), st.data.len()));
        }
        if assign.z.len() != st.data.total_views() {
            return Err(Error::LengthMismatch(assign.z.len(), st.data.total_views()));
        }
        let bound = |labels: &[u32]| labels.iter().map(|l| *l as usize + 1).max().unwrap_or(0);
        if assign.t.iter().chain(&assign.s).chain(&assign.z).any(|l| *l == UNASSIGNED) {
            return corrupt("stored assignment contains unassigned labels");
        }
        let (nt, ns, nz) = (bound(&assign.t), bound(&assign.s), bound(&assign.z));
        if assign.c.len() != ns {
            return corrupt(format!("{} concentrations for {} location factors", assign.c.len(), ns));
        }
        if assign.c.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return corrupt("concentrations must be positive");
        }
        if phi0.len() != ns || pi0.len() != nz {
            return corrupt("stick lengths do not match factor counts");
        }
        st.assign = assign;
        st.phi0 = phi0;
        st.pi0 = pi0;
        st.tables = st.recompute_with_dims(nt, ns, nz);
        if st.tables.n_t.contains(&0) || st.tables.n_s.contains(&0) || st.tables.topics.iter().any(TopicCounts::is_empty) {
            return corrupt("stored assignment references an empty factor");
        }
        st.reset_uids();
        Ok(st)
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn hyper_arc(&self) -> &Arc<Hyperparams> {
        &self.hyper
    }

    pub fn assignments(&self) -> &AssignmentState {
        &self.assign
    }

    pub fn tables(&self) -> &CountTables {
        &self.tables
    }

    pub fn phi0(&self) -> &GlobalSticks {
        &self.phi0
    }

    pub fn pi0(&self) -> &GlobalSticks {
        &self.pi0
    }

    pub fn num_t(&self) -> usize {
        self.tables.num_t()
    }

    pub fn num_s(&self) -> usize {
        self.tables.num_s()
    }

    pub fn num_z(&self) -> usize {
        self.tables.num_z()
    }

    #[inline]
    pub fn t_of(&self, d: usize) -> Option<usize> {
        label(self.assign.t[d])
    }

    #[inline]
    pub fn s_of(&self, d: usize) -> Option<usize> {
        label(self.assign.s[d])
    }

    #[inline]
    pub fn z_of(&self, d: usize, j: usize) -> Option<usize> {
        label(self.assign.z[self.data.view_offset(d) + j])
    }

    pub fn c(&self, s: usize) -> f64 {
        self.assign.c[s]
    }

    pub fn set_c(&mut self, s: usize, c: f64) {
        debug_assert!(c > 0.0 && c.is_finite());
        self.assign.c[s] = c;
    }

    pub fn set_phi0(&mut self, sticks: GlobalSticks) {
        assert_eq!(sticks.len(), self.num_s());
        self.phi0 = sticks;
    }

    pub fn set_pi0(&mut self, sticks: GlobalSticks) {
        assert_eq!(sticks.len(), self.num_z());
        self.pi0 = sticks;
    }

    pub fn sum_s(&self, s: usize) -> [f64; 3] {
        self.tables.sum_s[s].to_f64()
    }

    /// True when every customer and view carries a label.
    pub fn fully_assigned(&self) -> bool {
        !self.assign.t.iter().chain(&self.assign.s).chain(&self.assign.z).any(|l| *l == UNASSIGNED)
    }

    // ---- factor creation ----

    pub fn open_t(&mut self) -> usize {
        self.tables.push_t();
        let uid = self.bump_uid();
        self.t_uid.push(uid);
        self.num_t() - 1
    }

    /// Opens a location factor with concentration `c`, taking `stick_frac` of the
    /// remaining global mass as its weight.
    pub fn open_s(&mut self, c: f64, stick_frac: f64) -> usize {
        self.tables.push_s();
        self.assign.c.push(c);
        self.phi0.split_remainder(stick_frac);
        let uid = self.bump_uid();
        self.s_uid.push(uid);
        self.num_s() - 1
    }

    pub fn open_z(&mut self, stick_frac: f64) -> usize {
        self.tables.push_z(self.data.catalog_size());
        self.pi0.split_remainder(stick_frac);
        let uid = self.bump_uid();
        self.z_uid.push(uid);
        self.num_z() - 1
    }

    fn bump_uid(&mut self) -> u64 {
        let u = self.next_uid;
        self.next_uid += 1;
        u
    }

    // ---- interaction cluster ----

    pub fn assign_t(&mut self, d: usize, t: usize) -> Result<()> {
        if self.assign.t[d] != UNASSIGNED {
            return corrupt(format!("customer {d} already has a cluster"));
        }
        if t >= self.num_t() {
            return corrupt(format!("cluster {t} is not live"));
        }
        self.assign.t[d] = t as u32;
        self.tables.n_t[t] += 1;
        if let Some(s) = self.s_of(d) {
            self.tables.n_ts[t][s] += 1;
            self.tables.n1_t[t] += 1;
        }
        let off = self.data.view_offset(d);
        for j in 0..self.data.views(d).len() {
            if let Some(z) = label(self.assign.z[off + j]) {
                self.tables.n_tz[t][z] += 1;
                self.tables.n2_t[t] += 1;
            }
        }
        Ok(())
    }

    pub fn unassign_t(&mut self, d: usize) -> Result<Option<Pruned>> {
        let Some(t) = self.t_of(d) else {
            return corrupt(format!("customer {d} has no cluster to remove"));
        };
        self.assign.t[d] = UNASSIGNED;
        self.tables.n_t[t] -= 1;
        if let Some(s) = self.s_of(d) {
            self.tables.n_ts[t][s] -= 1;
            self.tables.n1_t[t] -= 1;
        }
        let off = self.data.view_offset(d);
        for j in 0..self.data.views(d).len() {
            if let Some(z) = label(self.assign.z[off + j]) {
                self.tables.n_tz[t][z] -= 1;
                self.tables.n2_t[t] -= 1;
            }
        }
        if self.tables.n_t[t] == 0 {
            self.prune_t(t);
            return Ok(Some(Pruned { kind: FactorKind::Cluster, index: t }));
        }
        Ok(None)
    }

    fn prune_t(&mut self, k: usize) {
        self.tables.remove_t(k);
        self.t_uid.remove(k);
        shift_labels(&mut self.assign.t, k);
    }

    // ---- location factor ----

    pub fn assign_s(&mut self, d: usize, s: usize) -> Result<()> {
        if self.assign.s[d] != UNASSIGNED {
            return corrupt(format!("customer {d} already has a location factor"));
        }
        if s >= self.num_s() {
            return corrupt(format!("location factor {s} is not live"));
        }
        self.assign.s[d] = s as u32;
        self.tables.n_s[s] += 1;
        self.tables.sum_s[s].add(self.data.location_fixed(d));
        if let Some(t) = self.t_of(d) {
            self.tables.n_ts[t][s] += 1;
            self.tables.n1_t[t] += 1;
        }
        Ok(())
    }

    pub fn unassign_s(&mut self, d: usize) -> Result<Option<Pruned>> {
        let Some(s) = self.s_of(d) else {
            return corrupt(format!("customer {d} has no location factor to remove"));
        };
        self.assign.s[d] = UNASSIGNED;
        self.tables.n_s[s] -= 1;
        let fixed = *self.data.location_fixed(d);
        self.tables.sum_s[s].sub(&fixed);
        if let Some(t) = self.t_of(d) {
            self.tables.n_ts[t][s] -= 1;
            self.tables.n1_t[t] -= 1;
        }
        if self.tables.n_s[s] == 0 {
            self.prune_s(s);
            return Ok(Some(Pruned { kind: FactorKind::Location, index: s }));
        }
        Ok(None)
    }

    fn prune_s(&mut self, k: usize) {
        self.tables.remove_s(k);
        self.assign.c.remove(k);
        self.phi0.fold(k);
        self.s_uid.remove(k);
        shift_labels(&mut self.assign.s, k);
    }

    // ---- video topic ----

    pub fn add_view(&mut self, d: usize, j: usize, z: usize) -> Result<()> {
        let idx = self.data.view_offset(d) + j;
        if self.assign.z[idx] != UNASSIGNED {
            return corrupt(format!("view ({d}, {j}) already has a topic"));
        }
        if z >= self.num_z() {
            return corrupt(format!("topic {z} is not live"));
        }
        let v = self.data.views(d)[j] as usize;
        self.assign.z[idx] = z as u32;
        let tc = &mut self.tables.topics[z];
        tc.n_zv[v] += 1;
        tc.total += 1;
        if let Some(t) = self.t_of(d) {
            self.tables.n_tz[t][z] += 1;
            self.tables.n2_t[t] += 1;
        }
        Ok(())
    }

    pub fn remove_view(&mut self, d: usize, j: usize) -> Result<Option<Pruned>> {
        let idx = self.data.view_offset(d) + j;
        let Some(z) = label(self.assign.z[idx]) else {
            return corrupt(format!("view ({d}, {j}) has no topic to remove"));
        };
        let v = self.data.views(d)[j] as usize;
        self.assign.z[idx] = UNASSIGNED;
        let tc = &mut self.tables.topics[z];
        tc.n_zv[v] -= 1;
        tc.total -= 1;
        if let Some(t) = self.t_of(d) {
            self.tables.n_tz[t][z] -= 1;
            self.tables.n2_t[t] -= 1;
        }
        if self.tables.topics[z].total == 0 {
            self.prune_z(z);
            return Ok(Some(Pruned { kind: FactorKind::Topic, index: z }));
        }
        Ok(None)
    }

    fn prune_z(&mut self, k: usize) {
        self.tables.remove_z(k);
        self.pi0.fold(k);
        self.z_uid.remove(k);
        shift_labels(&mut self.assign.z, k);
    }

    // ---- whole customers ----

    /// Assigns a currently unassigned customer to live factors `t` and `s`.
    /// Views are attached separately with [`State::add_view`].
    pub fn add_customer(&mut self, d: usize, t: usize, s: usize) -> Result<()> {
        if self.assign.t[d] != UNASSIGNED || self.assign.s[d] != UNASSIGNED {
            return corrupt(format!("customer {d} is already assigned"));
        }
        if t >= self.num_t() || s >= self.num_s() {
            return corrupt(format!("factors ({t}, {s}) are not live"));
        }
        self.assign_s(d, s)?;
        self.assign_t(d, t)
    }

    /// Detaches a customer entirely: views, location and cluster.
    pub fn remove_customer(&mut self, d: usize) -> Result<Vec<Pruned>> {
        if self.assign.t[d] == UNASSIGNED || self.assign.s[d] == UNASSIGNED {
            return corrupt(format!("customer {d} is not assigned"));
        }
        let mut pruned = Vec::new();
        for j in 0..self.data.views(d).len() {
            if self.z_of(d, j).is_some() {
                pruned.extend(self.remove_view(d, j)?);
            }
        }
        pruned.extend(self.unassign_s(d)?);
        pruned.extend(self.unassign_t(d)?);
        Ok(pruned)
    }

    // ---- global sticks ----

    pub fn resample_phi0<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.phi0 = resample_sticks(&self.tables.n_ts, self.hyper.alpha_phi, &self.phi0, self.hyper.alpha_phi0, rng);
    }

    pub fn resample_pi0<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.pi0 = resample_sticks(&self.tables.n_tz, self.hyper.alpha_pi, &self.pi0, self.hyper.alpha_pi0, rng);
    }

    // ---- audit ----

    fn recompute_with_dims(&self, nt: usize, ns: usize, nz: usize) -> CountTables {
        let v = self.data.catalog_size();
        let mut tb = CountTables {
            n_t: vec![0; nt],
            n_ts: vec![vec![0; ns]; nt],
            n_tz: vec![vec![0; nz]; nt],
            n1_t: vec![0; nt],
            n2_t: vec![0; nt],
            n_s: vec![0; ns],
            sum_s: vec![FixedVec3::default(); ns],
            topics: vec![TopicCounts::empty(v); nz],
        };
        for d in 0..self.data.len() {
            let t = label(self.assign.t[d]);
            let s = label(self.assign.s[d]);
            if let Some(t) = t {
                tb.n_t[t] += 1;
            }
            if let Some(s) = s {
                tb.n_s[s] += 1;
                tb.sum_s[s].add(self.data.location_fixed(d));
                if let Some(t) = t {
                    tb.n_ts[t][s] += 1;
                    tb.n1_t[t] += 1;
                }
            }
            let off = self.data.view_offset(d);
            for (j, &item) in self.data.views(d).iter().enumerate() {
                if let Some(z) = label(self.assign.z[off + j]) {
                    tb.topics[z].n_zv[item as usize] += 1;
                    tb.topics[z].total += 1;
                    if let Some(t) = t {
                        tb.n_tz[t][z] += 1;
                        tb.n2_t[t] += 1;
                    }
                }
            }
        }
        tb
    }

    /// Count tables rebuilt from the labels alone.
    pub fn recompute_tables(&self) -> CountTables {
        self.recompute_with_dims(self.num_t(), self.num_s(), self.num_z())
    }

    /// Checks the incrementally maintained tables against a full recount.
    pub fn audit(&self) -> Result<()> {
        if self.recompute_tables() != self.tables {
            return corrupt("count tables diverged from assignments");
        }
        if self.assign.c.len() != self.num_s() || self.phi0.len() != self.num_s() || self.pi0.len() != self.num_z() {
            return corrupt("per-factor arrays out of step with count tables");
        }
        Ok(())
    }

    /// Replaces the dataset (same shape) and recounts location and item statistics.
    pub fn replace_data(&mut self, data: Arc<Dataset>) -> Result<()> {
        if data.len() != self.data.len() || data.total_views() != self.data.total_views() {
            return Err(Error::LengthMismatch(data.len(), self.data.len()));
        }
        self.data = data;
        self.tables = self.recompute_tables();
        Ok(())
    }

    // ---- factor identities ----

    pub fn t_uids(&self) -> &[u64] {
        &self.t_uid
    }

    pub fn s_uids(&self) -> &[u64] {
        &self.s_uid
    }

    pub fn z_uids(&self) -> &[u64] {
        &self.z_uid
    }

    /// Renumbers factor identities to their current indices.
    pub fn reset_uids(&mut self) {
        self.t_uid = (0..self.num_t() as u64).collect();
        self.s_uid = (0..self.num_s() as u64).collect();
        self.z_uid = (0..self.num_z() as u64).collect();
        self.next_uid = self.num_t().max(self.num_s()).max(self.num_z()) as u64;
    }

    /// Makes newly opened factors draw identities from a private range.
    pub fn set_uid_base(&mut self, base: u64) {
        self.next_uid = base;
    }

    pub(crate) fn from_parts(
        data: Arc<Dataset>,
        hyper: Arc<Hyperparams>,
        assign: AssignmentState,
        tables: CountTables,
        phi0: GlobalSticks,
        pi0: GlobalSticks,
    ) -> State {
        let mut st = State {
            data,
            hyper,
            assign,
            tables,
            phi0,
            pi0,
            t_uid: Vec::new(),
            s_uid: Vec::new(),
            z_uid: Vec::new(),
            next_uid: 0,
        };
        st.reset_uids();
        st
    }
}

#[inline]
fn label(l: u32) -> Option<usize> {
    (l != UNASSIGNED).then_some(l as usize)
}

fn shift_labels(labels: &mut [u32], removed: usize) {
    let removed = removed as u32;
    for l in labels.iter_mut() {
        if *l != UNASSIGNED && *l > removed {
            *l -= 1;
        }
    }
}
