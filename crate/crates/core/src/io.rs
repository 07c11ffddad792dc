//! JSON-lines datasets, item catalogs, and versioned checkpoints.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{latlon_to_unit, unit_to_latlon, GeoPoint};
use crate::parallel::ParallelConfig;
use crate::sampler::SamplerConfig;
use crate::state::{AssignmentState, Customer, Dataset, GlobalSticks, Hyperparams, State};

/// One customer per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub customer_id: String,
    pub lat: f64,
    pub lon: f64,
    pub videos: Vec<i64>,
}

fn data_err(line: usize, message: impl Into<String>) -> Error {
    Error::Data { line, message: message.into() }
}

/// Parses JSON-lines customer records. Blank lines are skipped. The catalog
/// size defaults to the largest item index plus one.
pub fn parse_jsonl<R: BufRead>(reader: R, catalog_size: Option<usize>) -> Result<Dataset> {
    let mut customers = Vec::new();
    let mut lines = Vec::new();
    let mut seen = HashSet::new();
    let mut max_item: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| data_err(no, e.to_string()))?;
        let point = GeoPoint::new(rec.lat, rec.lon).map_err(|e| data_err(no, e.to_string()))?;
        let mut views = Vec::with_capacity(rec.videos.len());
        for v in rec.videos {
            if v < 0 || v > u32::MAX as i64 - 1 {
                return Err(data_err(no, format!("item index {v} is out of range")));
            }
            if let Some(size) = catalog_size {
                if v as usize >= size {
                    return Err(data_err(no, format!("item {v} outside catalog of size {size}")));
                }
            }
            max_item = max_item.max(Some(v as usize));
            views.push(v as u32);
        }
        if !seen.insert(rec.customer_id.clone()) {
            return Err(data_err(no, format!("duplicate customer_id {:?}", rec.customer_id)));
        }
        customers.push(Customer { id: rec.customer_id, location: latlon_to_unit(point)?, views });
        lines.push(no);
    }
    let size = catalog_size.unwrap_or_else(|| max_item.map_or(1, |m| m + 1));
    Dataset::new(customers, size).map_err(|e| match e {
        Error::Data { line, message } => data_err(lines[line - 1], message),
        other => other,
    })
}

pub fn read_jsonl(path: &Path, catalog_size: Option<usize>) -> Result<Dataset> {
    parse_jsonl(BufReader::new(File::open(path)?), catalog_size)
}

pub fn write_jsonl(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in data.customers() {
        let p = unit_to_latlon(c.location)?;
        let rec = Record { customer_id: c.id.clone(), lat: p.lat, lon: p.lon, videos: c.views.iter().map(|v| *v as i64).collect() };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a tab-separated `index<TAB>title` catalog. Lines starting with `#` are ignored.
pub fn read_catalog(path: &Path) -> Result<HashMap<u32, String>> {
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, title) = line.split_once('\t').ok_or_else(|| data_err(i + 1, "expected index<TAB>title"))?;
        let id: u32 = id.trim().parse().map_err(|_| data_err(i + 1, format!("bad item index {id:?}")))?;
        out.insert(id, title.to_string());
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue a run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hyper: Hyperparams,
    pub assignments: AssignmentState,
    pub phi0: GlobalSticks,
    pub pi0: GlobalSticks,
    pub rng: ChaCha8Rng,
    pub sweeps_done: u64,
    pub sampler: SamplerConfig,
    pub parallel: ParallelConfig,
    pub num_customers: usize,
    pub num_views: usize,
}

impl Checkpoint {
    pub fn capture(state: &State, rng: &ChaCha8Rng, sweeps_done: u64, sampler: &SamplerConfig, parallel: ParallelConfig) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            hyper: state.hyper().clone(),
            assignments: state.assignments().clone(),
            phi0: state.phi0().clone(),
            pi0: state.pi0().clone(),
            rng: rng.clone(),
            sweeps_done,
            sampler: sampler.clone(),
            parallel,
            num_customers: state.data().len(),
            num_views: state.data().total_views(),
        }
    }

    /// Rebuilds the state against `data` and audits it.
    pub fn restore(&self, data: Arc<Dataset>) -> Result<State> {
        if data.len() != self.num_customers || data.total_views() != self.num_views {
            return Err(Error::Checkpoint(format!(
                "checkpoint was taken on {} customers with {} views; data has {} and {}",
                self.num_customers,
                self.num_views,
                data.len(),
                data.total_views()
            )));
        }
        let mut state = State::empty(data, Arc::new(self.hyper.clone()))?;
        if self.assignments.t.iter().any(|t| *t != u32::MAX) {
            state = State::from_assignments(state.data().clone(), state.hyper_arc().clone(), self.assignments.clone(), self.phi0.clone(), self.pi0.clone())?;
        }
        state.audit()?;
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => return Err(Error::Checkpoint(format!("unsupported checkpoint version {v}; expected {CHECKPOINT_VERSION}"))),
            None => return Err(Error::Checkpoint("missing checkpoint version".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
