//! Approximate shard-parallel Gibbs sampling.
//!
//! Customers are split into contiguous shards. Each shard sweeps its own
//! customers against a private copy of the global state, so it sees the other
//! shards' counts as they were at the last merge. A merge then adds up the
//! per-shard count deltas, keyed by factor identity. Factors opened on
//! different shards stay distinct. Concentration updates and stick resampling
//! run once per epoch on the merged state.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{self, SamplerConfig, SweepDiagnostics};
use crate::state::{AssignmentState, CountTables, Dataset, FixedVec3, GlobalSticks, Hyperparams, State};
use crate::dirmult::TopicCounts;

const UNASSIGNED: u32 = u32::MAX;

/// Identities of factors opened on shard `p` start at `(p + 1) << UID_SHIFT`.
const UID_SHIFT: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePolicy {
    /// Local sweeps between merges.
    pub sync_interval: u32,
}

impl Default for MergePolicy {
    fn default() -> Self {
        MergePolicy { sync_interval: 1 }
    }
}

impl MergePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.sync_interval == 0 {
            return Err(Error::Config("sync_interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// One worker's customers and its private copy of the state.
#[derive(Debug, Clone)]
pub struct Shard {
    pub range: Range<usize>,
    pub seed: u64,
    pub epoch: u64,
    pub state: State,
}

impl Shard {
    /// Runs `passes` assignment passes over the shard's own customers.
    pub fn run(&mut self, passes: u32, config: &SamplerConfig) -> Result<()> {
        let order = sampler::customer_order(self.range.clone(), config.order);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..passes {
            sampler::assignment_pass(&mut self.state, &order, config.strict_paper_mode, &mut rng)?;
        }
        Ok(())
    }
}

/// Contiguous near-equal ranges covering `0..n`. More workers than customers
/// collapse to one customer per shard.
pub fn shard_ranges(n: usize, workers: usize) -> Vec<Range<usize>> {
    let p = workers.clamp(1, n.max(1));
    let (base, extra) = (n / p, n % p);
    let mut start = 0;
    (0..p)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Splits the customers of `global` into shards, each with a deep copy of the
/// state and a seed drawn from `rng`. Factor identities of `global` are reset
/// to its indices.
pub fn partition(global: &mut State, workers: usize, epoch: u64, rng: &mut ChaCha8Rng) -> Vec<Shard> {
    global.reset_uids();
    shard_ranges(global.data().len(), workers)
        .into_iter()
        .enumerate()
        .map(|(p, range)| {
            let mut state = global.clone();
            state.set_uid_base(((p as u64) + 1) << UID_SHIFT);
            Shard { range, seed: rng.next_u64(), epoch, state }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeStats {
    /// Table entries that went negative and were clamped to zero.
    pub clamped: u64,
    /// Factors opened on shards and kept after the merge (t, s, z).
    pub opened: [usize; 3],
    /// Factors left empty by the merge and removed (t, s, z).
    pub pruned: [usize; 3],
}

/// Signed accumulator over the merged factor index space.
struct Delta {
    n_t: Vec<i64>,
    n_ts: Vec<Vec<i64>>,
    n_tz: Vec<Vec<i64>>,
    n1_t: Vec<i64>,
    n2_t: Vec<i64>,
    n_s: Vec<i64>,
    sum_s: Vec<[i128; 3]>,
    n_zv: Vec<Vec<i64>>,
    total_z: Vec<i64>,
}

impl Delta {
    fn zeros(nt: usize, ns: usize, nz: usize, v: usize) -> Self {
        Delta {
            n_t: vec![0; nt],
            n_ts: vec![vec![0; ns]; nt],
            n_tz: vec![vec![0; nz]; nt],
            n1_t: vec![0; nt],
            n2_t: vec![0; nt],
            n_s: vec![0; ns],
            sum_s: vec![[0; 3]; ns],
            n_zv: vec![vec![0; v]; nz],
            total_z: vec![0; nz],
        }
    }

    /// Adds `sign * tb`, with local indices translated by the maps.
    fn accumulate(&mut self, tb: &CountTables, mt: &[usize], ms: &[usize], mz: &[usize], sign: i64) {
        for (t, &gt) in mt.iter().enumerate() {
            self.n_t[gt] += sign * tb.n_t[t] as i64;
            self.n1_t[gt] += sign * tb.n1_t[t] as i64;
            self.n2_t[gt] += sign * tb.n2_t[t] as i64;
            for (s, &gs) in ms.iter().enumerate() {
                self.n_ts[gt][gs] += sign * tb.n_ts[t][s] as i64;
            }
            for (z, &gz) in mz.iter().enumerate() {
                self.n_tz[gt][gz] += sign * tb.n_tz[t][z] as i64;
            }
        }
        for (s, &gs) in ms.iter().enumerate() {
            self.n_s[gs] += sign * tb.n_s[s] as i64;
            for i in 0..3 {
                self.sum_s[gs][i] += sign as i128 * tb.sum_s[s].0[i];
            }
        }
        for (z, &gz) in mz.iter().enumerate() {
            self.total_z[gz] += sign * tb.topics[z].total as i64;
            for (v, n) in tb.topics[z].n_zv.iter().enumerate() {
                self.n_zv[gz][v] += sign * *n as i64;
            }
        }
    }
}

fn clamp(x: i64, clamped: &mut u64) -> u32 {
    if x < 0 {
        *clamped += 1;
        0
    } else {
        x as u32
    }
}

/// Merged index space for one factor family: the factors of `global`
/// followed by each shard's new factors in shard order, then creation order.
struct Alignment {
    size: usize,
    /// Per shard, local index to merged index.
    maps: Vec<Vec<usize>>,
    /// Merged index to (shard, local index) for new factors.
    origin: Vec<Option<(usize, usize)>>,
}

fn align(before: usize, shard_uids: &[&[u64]]) -> Alignment {
    let mut size = before;
    let mut origin = vec![None; before];
    let mut maps = Vec::with_capacity(shard_uids.len());
    for (p, uids) in shard_uids.iter().enumerate() {
        let mut fresh: Vec<(u64, usize)> = uids.iter().enumerate().filter(|(_, u)| **u >= before as u64).map(|(i, u)| (*u, i)).collect();
        fresh.sort_unstable();
        let mut new_index: HashMap<u64, usize> = HashMap::with_capacity(fresh.len());
        for (uid, local) in fresh {
            new_index.insert(uid, size);
            origin.push(Some((p, local)));
            size += 1;
        }
        maps.push(uids.iter().map(|u| if *u < before as u64 { *u as usize } else { new_index[u] }).collect());
    }
    Alignment { size, maps, origin }
}

/// Old-to-new index map dropping the entries where `keep` is false.
fn compaction(keep: &[bool]) -> Vec<u32> {
    let mut next = 0u32;
    keep.iter()
        .map(|k| {
            if *k {
                next += 1;
                next - 1
            } else {
                UNASSIGNED
            }
        })
        .collect()
}

fn merge_sticks(global: &GlobalSticks, align: &Alignment, shards: &[Shard], pick: impl Fn(&State) -> &GlobalSticks, keep: &[bool]) -> GlobalSticks {
    if shards.len() == 1 {
        // a single shard's sticks already describe the merged factor set
        let own = pick(&shards[0].state);
        let mut w = vec![0.0; align.size];
        for (local, &g) in align.maps[0].iter().enumerate() {
            w[g] = own.weights[local];
        }
        let mut remainder = own.remainder;
        let weights = w.into_iter().zip(keep).filter_map(|(x, k)| if *k { Some(x) } else { remainder += x; None }).collect();
        return GlobalSticks { weights, remainder };
    }
    let mut w: Vec<f64> = global.weights.clone();
    for o in &align.origin[global.len()..] {
        let (p, local) = o.expect("new factor origin");
        w.push(pick(&shards[p].state).weights[local]);
    }
    let mut remainder = global.remainder;
    let mut weights: Vec<f64> = Vec::with_capacity(w.len());
    for (x, k) in w.into_iter().zip(keep) {
        if *k {
            weights.push(x);
        } else {
            remainder += x;
        }
    }
    let total = weights.iter().sum::<f64>() + remainder;
    weights.iter_mut().for_each(|x| *x /= total);
    GlobalSticks { weights, remainder: remainder / total }
}

/// Combines shard results: merged tables are the pre-epoch tables plus the sum
/// over shards of (shard tables after - pre-epoch tables). Every shard must
/// have been cut from `global` in the given epoch, and `global`'s factor
/// identities must still equal its indices.
pub fn merge(global: &State, shards: &[Shard], epoch: u64) -> Result<(State, MergeStats)> {
    if let Some(bad) = shards.iter().find(|s| s.epoch != epoch) {
        return Err(Error::MergeEpoch { expected: epoch, found: bad.epoch });
    }
    let mut covered = 0;
    for sh in shards {
        if sh.range.start != covered {
            return Err(Error::StateCorruption("shards do not partition the customers".into()));
        }
        covered = sh.range.end;
    }
    if covered != global.data().len() {
        return Err(Error::StateCorruption("shards do not partition the customers".into()));
    }

    let (bt, bs, bz) = (global.num_t(), global.num_s(), global.num_z());
    let at = align(bt, &shards.iter().map(|s| s.state.t_uids()).collect::<Vec<_>>());
    let as_ = align(bs, &shards.iter().map(|s| s.state.s_uids()).collect::<Vec<_>>());
    let az = align(bz, &shards.iter().map(|s| s.state.z_uids()).collect::<Vec<_>>());
    let v = global.data().catalog_size();

    let mut acc = Delta::zeros(at.size, as_.size, az.size, v);
    let ident = |n: usize| (0..n).collect::<Vec<usize>>();
    let (it, is, iz) = (ident(bt), ident(bs), ident(bz));
    acc.accumulate(global.tables(), &it, &is, &iz, 1);
    for (p, sh) in shards.iter().enumerate() {
        acc.accumulate(sh.state.tables(), &at.maps[p], &as_.maps[p], &az.maps[p], 1);
        acc.accumulate(global.tables(), &it, &is, &iz, -1);
    }

    let mut stats = MergeStats::default();
    let keep_t: Vec<bool> = acc.n_t.iter().map(|n| *n > 0).collect();
    let keep_s: Vec<bool> = acc.n_s.iter().map(|n| *n > 0).collect();
    let keep_z: Vec<bool> = acc.total_z.iter().map(|n| *n > 0).collect();
    let count_new = |keep: &[bool], before: usize| keep[before..].iter().filter(|k| **k).count();
    stats.opened = [count_new(&keep_t, bt), count_new(&keep_s, bs), count_new(&keep_z, bz)];
    let count_gone = |keep: &[bool]| keep.iter().filter(|k| !**k).count();
    stats.pruned = [count_gone(&keep_t), count_gone(&keep_s), count_gone(&keep_z)];
    let (ct, cs, cz) = (compaction(&keep_t), compaction(&keep_s), compaction(&keep_z));

    let mut tables = CountTables::empty();
    let mut clamped = 0u64;
    for t in (0..at.size).filter(|t| keep_t[*t]) {
        tables.n_t.push(clamp(acc.n_t[t], &mut clamped));
        tables.n1_t.push(clamp(acc.n1_t[t], &mut clamped));
        tables.n2_t.push(clamp(acc.n2_t[t], &mut clamped));
        tables.n_ts.push((0..as_.size).filter(|s| keep_s[*s]).map(|s| clamp(acc.n_ts[t][s], &mut clamped)).collect());
        tables.n_tz.push((0..az.size).filter(|z| keep_z[*z]).map(|z| clamp(acc.n_tz[t][z], &mut clamped)).collect());
    }
    for s in (0..as_.size).filter(|s| keep_s[*s]) {
        tables.n_s.push(clamp(acc.n_s[s], &mut clamped));
        tables.sum_s.push(FixedVec3(acc.sum_s[s]));
    }
    for z in (0..az.size).filter(|z| keep_z[*z]) {
        tables.topics.push(TopicCounts {
            n_zv: acc.n_zv[z].iter().map(|n| clamp(*n, &mut clamped)).collect(),
            total: clamp(acc.total_z[z], &mut clamped),
        });
    }
    stats.clamped = clamped;

    // each customer's labels come from the shard that owns it
    let data = global.data();
    let n = data.len();
    let mut assign = AssignmentState { t: vec![UNASSIGNED; n], s: vec![UNASSIGNED; n], z: vec![UNASSIGNED; data.total_views()], c: Vec::new() };
    let relabel = |l: u32, map: &[usize], compact: &[u32]| if l == UNASSIGNED { UNASSIGNED } else { compact[map[l as usize]] };
    for (p, sh) in shards.iter().enumerate() {
        let local = sh.state.assignments();
        for d in sh.range.clone() {
            assign.t[d] = relabel(local.t[d], &at.maps[p], &ct);
            assign.s[d] = relabel(local.s[d], &as_.maps[p], &cs);
            let off = data.view_offset(d);
            for j in 0..data.views(d).len() {
                assign.z[off + j] = relabel(local.z[off + j], &az.maps[p], &cz);
            }
        }
    }
    for s in (0..as_.size).filter(|s| keep_s[*s]) {
        let c = match as_.origin[s] {
            None => global.c(s),
            Some((p, local)) => shards[p].state.c(local),
        };
        assign.c.push(c);
    }

    let phi0 = merge_sticks(global.phi0(), &as_, shards, State::phi0, &keep_s);
    let pi0 = merge_sticks(global.pi0(), &az, shards, State::pi0, &keep_z);
    let merged = State::from_parts(data.clone(), global.hyper_arc().clone(), assign, tables, phi0, pi0);
    Ok((merged, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDiagnostics {
    #[serde(flatten)]
    pub sweep: SweepDiagnostics,
    pub epoch: u64,
    pub workers: usize,
    #[serde(flatten)]
    pub merge: MergeStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelConfig {
    pub workers: usize,
    pub policy: MergePolicy,
}

impl ParallelConfig {
    pub fn new(workers: usize) -> Self {
        ParallelConfig { workers, policy: MergePolicy::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        self.policy.validate()
    }
}

/// Owns the generator and counters of a shard-parallel run. With one worker and
/// a merge after every sweep it reproduces [`sampler::Sampler`] exactly.
#[derive(Debug, Clone)]
pub struct ParallelSampler {
    pub config: SamplerConfig,
    pub parallel: ParallelConfig,
    rng: ChaCha8Rng,
    sweeps_done: u64,
    epochs_done: u64,
}

impl ParallelSampler {
    pub fn new(config: SamplerConfig, parallel: ParallelConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        ParallelSampler { config, parallel, rng, sweeps_done: 0, epochs_done: 0 }
    }

    pub fn from_parts(config: SamplerConfig, parallel: ParallelConfig, rng: ChaCha8Rng, sweeps_done: u64) -> Self {
        let sync = parallel.policy.sync_interval.max(1) as u64;
        ParallelSampler { config, parallel, rng, sweeps_done, epochs_done: sweeps_done.div_ceil(sync) }
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn sweeps_done(&self) -> u64 {
        self.sweeps_done
    }

    pub fn initialize(&mut self, state: &mut State) -> Result<()> {
        sampler::initialize(state, self.config.order, self.config.strict_paper_mode, &mut self.rng)
    }

    /// Runs one epoch of at most `max_sweeps` local sweeps followed by a merge
    /// and the global updates.
    pub fn epoch(&mut self, state: &mut State, max_sweeps: u32) -> Result<EpochDiagnostics> {
        let passes = self.parallel.policy.sync_interval.min(max_sweeps).max(1);
        let epoch = self.epochs_done;
        let mut shards = partition(state, self.parallel.workers, epoch, &mut self.rng);
        let config = &self.config;
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            shards.par_iter_mut().try_for_each(|sh| sh.run(passes, config))?;
        }
        #[cfg(not(feature = "parallel"))]
        shards.iter_mut().try_for_each(|sh| sh.run(passes, config))?;

        let (mut merged, stats) = merge(state, &shards, epoch)?;
        let workers = shards.len();
        drop(shards);
        if workers > 1 {
            merged.resample_phi0(&mut self.rng);
            merged.resample_pi0(&mut self.rng);
        }
        let last = self.sweeps_done + passes as u64 - 1;
        let global = sampler::global_pass(&mut merged, config, last, &mut self.rng)?;
        let interval = config.recompute_interval as u64;
        if (self.sweeps_done..=last).any(|k| (k + 1) % interval == 0) {
            merged.audit()?;
        }
        *state = merged;
        self.sweeps_done += passes as u64;
        self.epochs_done += 1;
        Ok(EpochDiagnostics { sweep: sampler::diagnostics(state, last, &global), epoch, workers, merge: stats })
    }
}

/// Initializes a state from `data` and runs `sweeps` sweeps in shard-parallel
/// epochs. Returns the final state and one diagnostics record per epoch.
pub fn run_parallel(
    data: Arc<Dataset>,
    hyper: Arc<Hyperparams>,
    config: &SamplerConfig,
    parallel: ParallelConfig,
    sweeps: u64,
) -> Result<(State, Vec<EpochDiagnostics>)> {
    config.validate()?;
    parallel.validate()?;
    let mut state = State::empty(data, hyper)?;
    let mut runner = ParallelSampler::new(config.clone(), parallel);
    runner.initialize(&mut state)?;
    let mut diags = Vec::new();
    while runner.sweeps_done() < sweeps {
        let left = (sweeps - runner.sweeps_done()).min(u32::MAX as u64) as u32;
        diags.push(runner.epoch(&mut state, left)?);
    }
    Ok((state, diags))
}
