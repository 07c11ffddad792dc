//! Run configuration: a TOML file with command-line overrides.

use std::path::{Path, PathBuf};

use geolatent::dirmult::CatalogParams;
use geolatent::geo::{latlon_to_unit, GeoPoint};
use geolatent::parallel::{MergePolicy, ParallelConfig};
use geolatent::sampler::{SamplerConfig, SweepOrder};
use geolatent::state::Hyperparams;
use geolatent::vmf::VmfPrior;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub alpha_phi0: f64,
    pub alpha_pi0: f64,
    pub alpha_omega: f64,
    pub alpha_phi: f64,
    pub alpha_pi: f64,
    /// Symmetric Dirichlet parameter over items.
    pub gamma: f64,
    /// Number of items; inferred from the data when absent.
    pub catalog_size: Option<usize>,
    /// Prior mean direction of location factors, as [lat, lon].
    pub mu0: [f64; 2],
    pub c0: f64,
    /// Log-normal prior on a factor's concentration: mean and sd of ln c.
    pub m_c: f64,
    pub sigma_c: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            alpha_phi0: 1.0,
            alpha_pi0: 1.0,
            alpha_omega: 1.0,
            alpha_phi: 1.0,
            alpha_pi: 1.0,
            gamma: 0.1,
            catalog_size: None,
            mu0: [90.0, 0.0],
            c0: 0.01,
            m_c: 3.0,
            sigma_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub sweeps: u64,
    pub seed: u64,
    pub workers: usize,
    pub sync_interval: u32,
    /// Sweeps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub mh_step_sigma: f64,
    pub sweeps_per_stick_resample: u32,
    pub recompute_interval: u32,
    pub strict_paper_mode: bool,
    pub order: SweepOrder,
    pub block_moves: bool,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        SamplerSection {
            sweeps: 100,
            seed: 0,
            workers: 1,
            sync_interval: 1,
            checkpoint_every: 0,
            mh_step_sigma: s.mh_step_sigma,
            sweeps_per_stick_resample: s.sweeps_per_stick_resample,
            recompute_interval: s.recompute_interval,
            strict_paper_mode: s.strict_paper_mode,
            order: s.order,
            block_moves: s.block_moves,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Sticks,
    Crp,
    Planted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub kind: SynthKind,
    pub customers: usize,
    pub heldout: usize,
    pub mean_views: f64,
    pub truncation: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { kind: SynthKind::Planted, customers: 200, heldout: 50, mean_views: 20.0, truncation: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sampler: SamplerSection,
    pub synth: SynthSection,
    pub paths: PathsSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub sweeps: Option<u64>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoint_every: Option<u64>,
    pub strict_paper_mode: bool,
}

/// Which inputs and outputs a subcommand touches.
#[derive(Debug, Clone, Copy, Default)]
pub struct Needs {
    pub data: bool,
    pub heldout: bool,
    pub checkpoint: bool,
    pub out: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", p.display())]))?;
                toml::from_str(&text).map_err(|e| CliError::Config(vec![format!("{}: {e}", p.display())]))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(o);
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        let p = &mut self.paths;
        for (dst, src) in [
            (&mut p.data, &o.data),
            (&mut p.heldout, &o.heldout),
            (&mut p.out, &o.out),
            (&mut p.checkpoint, &o.checkpoint),
            (&mut p.truth, &o.truth),
            (&mut p.catalog, &o.catalog),
        ] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        let s = &mut self.sampler;
        s.sweeps = o.sweeps.unwrap_or(s.sweeps);
        s.workers = o.workers.unwrap_or(s.workers);
        s.seed = o.seed.unwrap_or(s.seed);
        s.checkpoint_every = o.checkpoint_every.unwrap_or(s.checkpoint_every);
        s.strict_paper_mode |= o.strict_paper_mode;
    }

    /// Checks every setting and path, reporting all problems together.
    pub fn validate(&self, needs: Needs) -> Result<(), CliError> {
        let mut errs = Vec::new();
        let m = &self.model;
        for (name, v) in [
            ("model.alpha_phi0", m.alpha_phi0),
            ("model.alpha_pi0", m.alpha_pi0),
            ("model.alpha_omega", m.alpha_omega),
            ("model.alpha_phi", m.alpha_phi),
            ("model.alpha_pi", m.alpha_pi),
            ("model.gamma", m.gamma),
            ("model.c0", m.c0),
            ("model.sigma_c", m.sigma_c),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !m.m_c.is_finite() {
            errs.push(format!("model.m_c must be finite, got {}", m.m_c));
        }
        if m.catalog_size == Some(0) {
            errs.push("model.catalog_size must be at least 1".into());
        }
        if GeoPoint::new(m.mu0[0], m.mu0[1]).is_err() {
            errs.push(format!("model.mu0 [{}, {}] is not a valid [lat, lon]", m.mu0[0], m.mu0[1]));
        }
        let s = &self.sampler;
        if s.workers == 0 {
            errs.push("sampler.workers must be at least 1".into());
        }
        if s.sync_interval == 0 {
            errs.push("sampler.sync_interval must be at least 1".into());
        }
        if let Err(e) = self.sampler_config().validate() {
            errs.push(e.to_string());
        }
        let y = &self.synth;
        if !(y.mean_views >= 0.0 && y.mean_views.is_finite()) {
            errs.push(format!("synth.mean_views must be >= 0, got {}", y.mean_views));
        }
        if y.truncation == 0 {
            errs.push("synth.truncation must be at least 1".into());
        }

        let readable = |what: &str, p: &Option<PathBuf>, errs: &mut Vec<String>| match p {
            None => errs.push(format!("{what} path is required")),
            Some(p) if !p.is_file() => errs.push(format!("{what} file {} is not readable", p.display())),
            _ => {}
        };
        if needs.data {
            readable("data", &self.paths.data, &mut errs);
        }
        if needs.heldout {
            readable("heldout", &self.paths.heldout, &mut errs);
        }
        if needs.checkpoint {
            readable("checkpoint", &self.paths.checkpoint, &mut errs);
        }
        for (what, p) in [("truth", &self.paths.truth), ("catalog", &self.paths.catalog)] {
            if p.is_some() {
                readable(what, p, &mut errs);
            }
        }
        if needs.out {
            match &self.paths.out {
                None => errs.push("output directory is required".into()),
                Some(dir) => {
                    if let Err(e) = std::fs::create_dir_all(dir) {
                        errs.push(format!("output directory {} is not writable: {e}", dir.display()));
                    } else if dir.metadata().map(|md| md.permissions().readonly()).unwrap_or(true) {
                        errs.push(format!("output directory {} is not writable", dir.display()));
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs))
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let s = &self.sampler;
        SamplerConfig {
            mh_step_sigma: s.mh_step_sigma,
            sweeps_per_stick_resample: s.sweeps_per_stick_resample,
            rng_seed: s.seed,
            recompute_interval: s.recompute_interval,
            strict_paper_mode: s.strict_paper_mode,
            order: s.order,
            block_moves: s.block_moves,
        }
    }

    pub fn parallel_config(&self) -> ParallelConfig {
        ParallelConfig { workers: self.sampler.workers, policy: MergePolicy { sync_interval: self.sampler.sync_interval } }
    }

    pub fn hyperparams(&self, catalog_size: usize) -> Result<Hyperparams, CliError> {
        let m = &self.model;
        let mu0 = latlon_to_unit(GeoPoint::new(m.mu0[0], m.mu0[1]).map_err(|e| CliError::Config(vec![e.to_string()]))?)
            .map_err(|e| CliError::Config(vec![e.to_string()]))?;
        let h = Hyperparams {
            alpha_phi0: m.alpha_phi0,
            alpha_pi0: m.alpha_pi0,
            alpha_omega: m.alpha_omega,
            alpha_phi: m.alpha_phi,
            alpha_pi: m.alpha_pi,
            catalog: CatalogParams::symmetric(catalog_size, m.gamma).map_err(|e| CliError::Config(vec![e.to_string()]))?,
            vmf_prior: VmfPrior { mu0, c0: m.c0, m_c: m.m_c, sigma_c: m.sigma_c },
        };
        h.validate().map_err(|e| CliError::Config(vec![e.to_string()]))?;
        Ok(h)
    }

    pub fn out_dir(&self) -> &Path {
        self.paths.out.as_deref().unwrap_or(Path::new("."))
    }
}
