use serde::{Deserialize, Serialize};

use super::data::FixedVec3;
use crate::dirmult::TopicCounts;

/// Sufficient statistics of the current assignment.
///
/// Rows are indexed by interaction cluster `t`, columns by location factor `s`
/// (`n_ts`) or video topic `z` (`n_tz`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTables {
    pub n_t: Vec<u32>,
    pub n_ts: Vec<Vec<u32>>,
    pub n_tz: Vec<Vec<u32>>,
    /// Customers of `t` with an assigned location factor (row sums of `n_ts`).
    pub n1_t: Vec<u32>,
    /// Views of `t` with an assigned topic (row sums of `n_tz`).
    pub n2_t: Vec<u32>,
    pub n_s: Vec<u32>,
    pub sum_s: Vec<FixedVec3>,
    pub topics: Vec<TopicCounts>,
}

impl CountTables {
    pub fn empty() -> Self {
        CountTables {
            n_t: Vec::new(),
            n_ts: Vec::new(),
            n_tz: Vec::new(),
            n1_t: Vec::new(),
            n2_t: Vec::new(),
            n_s: Vec::new(),
            sum_s: Vec::new(),
            topics: Vec::new(),
        }
    }

    pub fn num_t(&self) -> usize {
        self.n_t.len()
    }

    pub fn num_s(&self) -> usize {
        self.n_s.len()
    }

    pub fn num_z(&self) -> usize {
        self.topics.len()
    }

    pub(crate) fn push_t(&mut self) {
        self.n_t.push(0);
        self.n_ts.push(vec![0; self.n_s.len()]);
        self.n_tz.push(vec![0; self.topics.len()]);
        self.n1_t.push(0);
        self.n2_t.push(0);
    }

    pub(crate) fn push_s(&mut self) {
        self.n_s.push(0);
        self.sum_s.push(FixedVec3::default());
        self.n_ts.iter_mut().for_each(|row| row.push(0));
    }

    pub(crate) fn push_z(&mut self, catalog_size: usize) {
        self.topics.push(TopicCounts::empty(catalog_size));
        self.n_tz.iter_mut().for_each(|row| row.push(0));
    }

    pub(crate) fn remove_t(&mut self, k: usize) {
        self.n_t.remove(k);
        self.n_ts.remove(k);
        self.n_tz.remove(k);
        self.n1_t.remove(k);
        self.n2_t.remove(k);
    }

    pub(crate) fn remove_s(&mut self, k: usize) {
        self.n_s.remove(k);
        self.sum_s.remove(k);
        self.n_ts.iter_mut().for_each(|row| {
            row.remove(k);
        });
    }

    pub(crate) fn remove_z(&mut self, k: usize) {
        self.topics.remove(k);
        self.n_tz.iter_mut().for_each(|row| {
            row.remove(k);
        });
    }

    pub fn total_customers(&self) -> u64 {
        self.n_t.iter().map(|n| *n as u64).sum()
    }

    pub fn total_topic_views(&self) -> u64 {
        self.topics.iter().map(|t| t.total as u64).sum()
    }
}
