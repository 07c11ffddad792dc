//! Block moves for video topics.
//!
//! A block is the set of views on topic `a` that share one key: either the
//! item (all views of item `v` on `a`) or the item within one cluster (the
//! views of item `v` by customers of cluster `t` on `a`). The block is reassigned jointly to `a` itself or to
//! any topic holding no views under the same key, with the global sticks held
//! fixed. The set of reachable states is the same from each of them, so
//! drawing the target from the exact conditional is a Gibbs step. Blocks that
//! make up their whole topic stay put, so no topic is opened or emptied.
//!
//! Exchange moves then revisit each (cluster, item) key with every pair of
//! live topics `{a, b}`. Views of one item by customers of one cluster are
//! exchangeable, so given how many of the pair's views under the key sit on
//! `a` the arrangement is uniform. That count is drawn from its exact
//! conditional and the difference is made up by moving views chosen at random.
//! A topic holding nothing but the views being exchanged keeps at least one.

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::categorical::sample_log_weights;
use crate::error::{Error, Result};
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Key {
    Item(usize),
    ItemInCluster(usize, usize),
}

/// Views grouped by item and by (cluster, item) as `(customer, position)` pairs.
pub struct BlockIndex {
    by_item: Vec<Vec<(usize, usize)>>,
    by_pair: Vec<Vec<(usize, usize)>>,
}

impl BlockIndex {
    pub fn new(state: &State) -> Result<Self> {
        let data = state.data();
        let mut by_item = vec![Vec::new(); data.catalog_size()];
        let v_size = data.catalog_size();
        let mut by_pair = vec![Vec::new(); state.num_t() * v_size];
        for d in 0..data.len() {
            let t = state.t_of(d).ok_or_else(|| Error::StateCorruption(format!("customer {d} without cluster")))?;
            for (j, &v) in data.views(d).iter().enumerate() {
                by_item[v as usize].push((d, j));
                by_pair[t * v_size + v as usize].push((d, j));
            }
        }
        Ok(BlockIndex { by_item, by_pair })
    }
}

/// Visits every item block and then every item-in-cluster block once, keys in
/// random order. Returns the number of blocks that changed topic.
pub fn block_pass<R: Rng + ?Sized>(state: &mut State, rng: &mut R) -> Result<u32> {
    let index = BlockIndex::new(state)?;
    let mut moved = 0;
    let mut keys: Vec<Key> = (0..index.by_item.len()).filter(|v| !index.by_item[*v].is_empty()).map(Key::Item).collect();
    keys.shuffle(rng);
    let v_size = index.by_item.len();
    let mut pairs: Vec<Key> = (0..index.by_pair.len()).filter(|p| !index.by_pair[*p].is_empty()).map(|p| Key::ItemInCluster(p % v_size, p / v_size)).collect();
    pairs.shuffle(rng);
    keys.extend(pairs);
    for key in keys {
        let views = match key {
            Key::Item(v) => &index.by_item[v],
            Key::ItemInCluster(v, t) => &index.by_pair[t * index.by_item.len() + v],
        };
        let mut sources: Vec<usize> = (0..state.num_z()).filter(|z| key_count(state, key, views, *z) > 0).collect();
        sources.shuffle(rng);
        for a in sources {
            if move_block(state, key, a, views, rng)? {
                moved += 1;
            }
        }
    }
    Ok(moved)
}

/// Runs one exchange move for every (cluster, item) key and pair of live
/// topics, keys and pairs in random order. Returns the number of moves that
/// changed an assignment.
pub fn exchange_pass<R: Rng + ?Sized>(state: &mut State, rng: &mut R) -> Result<u32> {
    let index = BlockIndex::new(state)?;
    let v_size = index.by_item.len();
    let mut keys: Vec<usize> = (0..index.by_pair.len()).filter(|p| !index.by_pair[*p].is_empty()).collect();
    keys.shuffle(rng);
    let k = state.num_z();
    let mut pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let mut moved = 0;
    for key in keys {
        let (t, v) = (key / v_size, key % v_size);
        let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
        for &(d, j) in &index.by_pair[key] {
            let z = state.z_of(d, j).ok_or_else(|| Error::StateCorruption(format!("view ({d}, {j}) without topic")))?;
            groups[z].push((d, j));
        }
        pairs.shuffle(rng);
        for &(a, b) in &pairs {
            if groups[a].is_empty() && groups[b].is_empty() {
                continue;
            }
            if exchange(state, t, v, a, b, &mut groups, rng)? {
                moved += 1;
            }
        }
    }
    Ok(moved)
}

fn exchange<R: Rng + ?Sized>(
    state: &mut State,
    t: usize,
    v: usize,
    a: usize,
    b: usize,
    groups: &mut [Vec<(usize, usize)>],
    rng: &mut R,
) -> Result<bool> {
    let (ma, mb) = (groups[a].len(), groups[b].len());
    let m = ma + mb;
    let tb = state.tables();
    let h = state.hyper();
    let (g_total, g) = (h.catalog.gamma_total(), h.catalog.gamma_at(v));
    let weights = &state.pi0().weights;
    // counts of each topic without the views being exchanged
    let rest = |k: usize, own: usize| {
        let own = own as u32;
        ((tb.topics[k].total - own) as f64, (tb.topics[k].n_zv[v] - own) as f64, (tb.n_tz[t][k] - own) as f64, h.alpha_pi * weights[k])
    };
    let (a_tot, a_v, a_t, a_p) = rest(a, ma);
    let (b_tot, b_v, b_t, b_p) = rest(b, mb);
    let lo = usize::from(a_tot == 0.0);
    let hi = m - usize::from(b_tot == 0.0);
    if lo >= hi {
        return Ok(false);
    }
    // log weight of `x` views on a, up to a constant, by its ratio to x - 1
    let mut logw = Vec::with_capacity(hi - lo + 1);
    let mut acc = 0.0;
    logw.push(acc);
    for x in lo..hi {
        let (xa, xb) = (x as f64, (m - x - 1) as f64);
        acc += ((m - x) as f64 / (x + 1) as f64).ln() + ((g + a_v + xa) / (g_total + a_tot + xa) * (a_p + a_t + xa)).ln()
            - ((g + b_v + xb) / (g_total + b_tot + xb) * (b_p + b_t + xb)).ln();
        logw.push(acc);
    }
    let target = lo + sample_log_weights(&logw, rng);
    if target == ma {
        return Ok(false);
    }
    let (from, to, n) = if target > ma { (b, a, target - ma) } else { (a, b, ma - target) };
    for _ in 0..n {
        let i = rng.gen_range(0..groups[from].len());
        let (d, j) = groups[from].swap_remove(i);
        if state.remove_view(d, j)?.is_some() {
            return Err(Error::StateCorruption("exchange move emptied its topic".into()));
        }
        state.add_view(d, j, to)?;
        groups[to].push((d, j));
    }
    Ok(true)
}

fn key_count(state: &State, key: Key, views: &[(usize, usize)], z: usize) -> u32 {
    let tb = state.tables();
    match key {
        Key::Item(v) => tb.topics[z].n_zv[v],
        Key::ItemInCluster(..) => views.iter().filter(|(d, j)| state.z_of(*d, *j) == Some(z)).count() as u32,
    }
}

fn tally(counts: &mut Vec<(usize, u32)>, k: usize) {
    match counts.iter_mut().find(|(u, _)| *u == k) {
        Some(e) => e.1 += 1,
        None => counts.push((k, 1)),
    }
}

fn move_block<R: Rng + ?Sized>(state: &mut State, key: Key, a: usize, views: &[(usize, usize)], rng: &mut R) -> Result<bool> {
    let data = state.data().clone();
    let mut block = Vec::new();
    let (mut per_t, mut per_v) = (Vec::new(), Vec::new());
    for &(d, j) in views {
        if state.z_of(d, j) != Some(a) {
            continue;
        }
        let t = state.t_of(d).ok_or_else(|| Error::StateCorruption(format!("customer {d} without cluster")))?;
        tally(&mut per_t, t);
        tally(&mut per_v, data.views(d)[j] as usize);
        block.push((d, j));
    }
    let size = block.len() as u32;
    if size == 0 {
        return Ok(false);
    }
    let tb = state.tables();
    if tb.topics[a].total == size {
        return Ok(false);
    }
    let candidates: Vec<usize> = (0..state.num_z()).filter(|k| *k == a || key_count(state, key, views, *k) == 0).collect();
    if candidates.len() < 2 {
        return Ok(false);
    }
    let h = state.hyper();
    let g_total = h.catalog.gamma_total();
    let weights = &state.pi0().weights;

    // score of the block joining topic k, with the block itself removed from a
    let score = |k: usize| -> f64 {
        let own = |m: u32| if k == a { m } else { 0 };
        let total = (tb.topics[k].total - own(size)) as f64;
        let mut s = ln_gamma(g_total + total) - ln_gamma(g_total + total + size as f64);
        for &(v, m) in &per_v {
            let g = h.catalog.gamma_at(v);
            let base = (tb.topics[k].n_zv[v] - own(m)) as f64;
            s += ln_gamma(g + base + m as f64) - ln_gamma(g + base);
        }
        let prior = h.alpha_pi * weights[k];
        for &(t, m) in &per_t {
            let base = (tb.n_tz[t][k] - own(m)) as f64;
            s += ln_gamma(prior + base + m as f64) - ln_gamma(prior + base);
        }
        s
    };
    let logw: Vec<f64> = candidates.iter().map(|k| score(*k)).collect();
    let target = candidates[sample_log_weights(&logw, rng)];
    if target == a {
        return Ok(false);
    }
    for (d, j) in block {
        if state.remove_view(d, j)?.is_some() {
            return Err(Error::StateCorruption("block move emptied its topic".into()));
        }
        state.add_view(d, j, target)?;
    }
    Ok(true)
}
