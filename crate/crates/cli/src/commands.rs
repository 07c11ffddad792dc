use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use geolatent::eval::{self, EvalReport};
use geolatent::io::{self, Checkpoint};
use geolatent::parallel::{ParallelConfig, ParallelSampler};
use geolatent::sampler::{Sampler, SamplerConfig, MH_ACCEPTANCE_BAND};
use geolatent::state::{Dataset, State};
use geolatent::synth::{self, GroundTruth, PlantedConfig, SynthConfig, SynthMode, ViewCount};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Needs, RunConfig, SynthKind};
use crate::{CliError, Flags};

/// Serial sweeps when there is one worker merging every sweep, shard epochs otherwise.
enum Runner {
    Serial(Sampler),
    Parallel(ParallelSampler),
}

impl Runner {
    fn new(config: SamplerConfig, parallel: ParallelConfig) -> Self {
        Self::with_rng(config, parallel, None, 0)
    }

    fn with_rng(config: SamplerConfig, parallel: ParallelConfig, rng: Option<ChaCha8Rng>, sweeps_done: u64) -> Self {
        let rng = rng.unwrap_or_else(|| ChaCha8Rng::seed_from_u64(config.rng_seed));
        if parallel.workers == 1 && parallel.policy.sync_interval == 1 {
            Runner::Serial(Sampler::from_parts(config, rng, sweeps_done))
        } else {
            Runner::Parallel(ParallelSampler::from_parts(config, parallel, rng, sweeps_done))
        }
    }

    fn initialize(&mut self, state: &mut State) -> geolatent::Result<()> {
        match self {
            Runner::Serial(s) => s.initialize(state),
            Runner::Parallel(p) => p.initialize(state),
        }
    }

    /// Advances by one sweep (serial) or one epoch of at most `left` sweeps.
    /// Returns the diagnostics record and its MH acceptance rate.
    fn step(&mut self, state: &mut State, left: u64) -> geolatent::Result<(serde_json::Value, f64)> {
        match self {
            Runner::Serial(s) => {
                let d = s.sweep(state)?;
                Ok((serde_json::to_value(&d)?, d.mh_acceptance_rate))
            }
            Runner::Parallel(p) => {
                let d = p.epoch(state, left.min(u32::MAX as u64) as u32)?;
                Ok((serde_json::to_value(&d)?, d.sweep.mh_acceptance_rate))
            }
        }
    }

    fn sweeps_done(&self) -> u64 {
        match self {
            Runner::Serial(s) => s.sweeps_done(),
            Runner::Parallel(p) => p.sweeps_done(),
        }
    }

    fn checkpoint(&self, state: &State, parallel: ParallelConfig) -> Checkpoint {
        match self {
            Runner::Serial(s) => Checkpoint::capture(state, s.rng(), s.sweeps_done(), &s.config, parallel),
            Runner::Parallel(p) => Checkpoint::capture(state, p.rng(), p.sweeps_done(), &p.config, parallel),
        }
    }
}

fn load_data(path: &Path, catalog_size: Option<usize>) -> Result<Arc<Dataset>, CliError> {
    io::read_jsonl(path, catalog_size).map(Arc::new).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn required<'a>(p: &'a Option<std::path::PathBuf>) -> &'a Path {
    p.as_deref().expect("validated path")
}

fn sweep_loop(
    state: &mut State,
    runner: &mut Runner,
    parallel: ParallelConfig,
    sweeps: u64,
    checkpoint_every: u64,
    out: &Path,
    append: bool,
) -> Result<(), CliError> {
    let diag_path = out.join("diagnostics.jsonl");
    let file = if append { OpenOptions::new().create(true).append(true).open(&diag_path) } else { File::create(&diag_path) };
    let mut diag = BufWriter::new(file.map_err(geolatent::Error::from)?);
    let target = runner.sweeps_done() + sweeps;
    let (mut rate_sum, mut steps) = (0.0, 0u64);
    while runner.sweeps_done() < target {
        let before = runner.sweeps_done();
        let (record, rate) = runner.step(state, target - before)?;
        serde_json::to_writer(&mut diag, &record).map_err(geolatent::Error::from)?;
        diag.write_all(b"\n").map_err(geolatent::Error::from)?;
        rate_sum += rate;
        steps += 1;
        let done = runner.sweeps_done();
        if checkpoint_every > 0 && done / checkpoint_every > before / checkpoint_every {
            runner.checkpoint(state, parallel).save(&out.join(format!("checkpoint-{done:06}.json")))?;
        }
    }
    diag.flush().map_err(geolatent::Error::from)?;
    runner.checkpoint(state, parallel).save(&out.join("checkpoint.json"))?;
    if steps > 0 {
        let rate = rate_sum / steps as f64;
        if !(MH_ACCEPTANCE_BAND.0..=MH_ACCEPTANCE_BAND.1).contains(&rate) {
            eprintln!(
                "warning: concentration MH acceptance {rate:.3} is outside [{}, {}]; consider adjusting mh_step_sigma",
                MH_ACCEPTANCE_BAND.0, MH_ACCEPTANCE_BAND.1
            );
        }
    }
    println!(
        "sweeps {}  clusters {}  location factors {}  topics {}  checkpoint {}",
        runner.sweeps_done(),
        state.num_t(),
        state.num_s(),
        state.num_z(),
        out.join("checkpoint.json").display()
    );
    Ok(())
}

pub fn train(_flags: &Flags, cfg: RunConfig) -> Result<(), CliError> {
    cfg.validate(Needs { data: true, out: true, ..Needs::default() })?;
    let data = load_data(required(&cfg.paths.data), cfg.model.catalog_size)?;
    let hyper = Arc::new(cfg.hyperparams(data.catalog_size())?);
    let mut state = State::empty(data, hyper)?;
    let parallel = cfg.parallel_config();
    let mut runner = Runner::new(cfg.sampler_config(), parallel);
    runner.initialize(&mut state)?;
    sweep_loop(&mut state, &mut runner, parallel, cfg.sampler.sweeps, cfg.sampler.checkpoint_every, cfg.out_dir(), false)
}

pub fn resume(flags: &Flags, cfg: RunConfig) -> Result<(), CliError> {
    let mut errs = Vec::new();
    if flags.seed.is_some() || flags.workers.is_some() || flags.strict_paper_mode {
        errs.push("resume takes --seed, --workers and --strict-paper-mode from the checkpoint".to_string());
    }
    if let Err(CliError::Config(more)) = cfg.validate(Needs { data: true, checkpoint: true, out: true, ..Needs::default() }) {
        errs.extend(more);
    }
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let cp = Checkpoint::load(required(&cfg.paths.checkpoint))?;
    let data = load_data(required(&cfg.paths.data), Some(cp.hyper.catalog.size()))?;
    let mut state = cp.restore(data)?;
    let mut runner = Runner::with_rng(cp.sampler.clone(), cp.parallel, Some(cp.rng.clone()), cp.sweeps_done);
    let sweeps = flags.sweeps.unwrap_or(cfg.sampler.sweeps);
    sweep_loop(&mut state, &mut runner, cp.parallel, sweeps, cfg.sampler.checkpoint_every, cfg.out_dir(), true)
}

pub fn generate(_flags: &Flags, cfg: RunConfig) -> Result<(), CliError> {
    cfg.validate(Needs { out: true, ..Needs::default() })?;
    let y = &cfg.synth;
    let total = y.customers + y.heldout;
    let views = ViewCount::Poisson { mean: y.mean_views };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler.seed);
    let (data, truth) = match y.kind {
        SynthKind::Planted => {
            let planted = PlantedConfig { views, ..PlantedConfig::well_separated(total) };
            if cfg.model.catalog_size.is_some_and(|v| v != planted.catalog_size()) {
                return Err(CliError::Config(vec![format!("the planted generator uses {} items", planted.catalog_size())]));
            }
            synth::generate_planted(&planted, &mut rng)?
        }
        kind => {
            let Some(v) = cfg.model.catalog_size else {
                return Err(CliError::Config(vec!["model.catalog_size is required to sample from the prior".into()]));
            };
            let mode = if kind == SynthKind::Crp { SynthMode::Crp } else { SynthMode::Sticks };
            let sc = SynthConfig { customers: total, views, truncation: y.truncation, mode, seed: cfg.sampler.seed };
            synth::generate(&cfg.hyperparams(v)?, &sc, &mut rng)?
        }
    };
    let out = cfg.out_dir();
    let split = |range: std::ops::Range<usize>| Dataset::new(data.customers()[range].to_vec(), data.catalog_size());
    io::write_jsonl(&out.join("data.jsonl"), &split(0..y.customers)?)?;
    if y.heldout > 0 {
        io::write_jsonl(&out.join("heldout.jsonl"), &split(y.customers..total)?)?;
    }
    let train_truth = GroundTruth {
        t: truth.t[..y.customers].to_vec(),
        s: truth.s[..y.customers].to_vec(),
        z: truth.z[..y.customers].to_vec(),
        ..truth
    };
    io::write_json(&out.join("truth.json"), &train_truth)?;
    println!(
        "wrote {} training and {} held-out customers over {} items to {}",
        y.customers,
        y.heldout,
        data.catalog_size(),
        out.display()
    );
    Ok(())
}

fn restore(cfg: &RunConfig) -> Result<(State, Checkpoint), CliError> {
    let cp = Checkpoint::load(required(&cfg.paths.checkpoint))?;
    let data = load_data(required(&cfg.paths.data), Some(cp.hyper.catalog.size()))?;
    Ok((cp.restore(data)?, cp))
}

pub fn evaluate(flags: &Flags, cfg: RunConfig) -> Result<(), CliError> {
    cfg.validate(Needs { data: true, heldout: true, checkpoint: true, out: true })?;
    let (state, _) = restore(&cfg)?;
    let heldout = load_data(required(&cfg.paths.heldout), Some(state.data().catalog_size()))?;
    let score = eval::heldout_loglik(&state, &heldout)?;
    let (mut ari_t, mut ari_s, mut ari_z) = (None, None, None);
    if let Some(p) = &cfg.paths.truth {
        let truth: GroundTruth = io::read_json(p)?;
        let a = state.assignments();
        ari_t = Some(eval::ari(&a.t, &truth.t)?);
        ari_s = Some(eval::ari(&a.s, &truth.s)?);
        ari_z = Some(eval::ari(&a.z, &truth.flat_z())?);
    }
    let report = EvalReport {
        heldout_loglik_per_view: score.per_view,
        heldout_loglik_location: score.per_location,
        heldout_loglik_customer: score.per_customer,
        ari_t,
        ari_s,
        ari_z,
        factors: eval::report(&state, flags.top),
    };
    let path = cfg.out_dir().join("eval.json");
    io::write_json(&path, &report)?;
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "held-out log-lik per view {:.4}  per location {:.4}  ARI t {}  s {}  z {}  ({})",
        score.per_view,
        score.per_location,
        fmt(ari_t),
        fmt(ari_s),
        fmt(ari_z),
        path.display()
    );
    Ok(())
}

pub fn report(flags: &Flags, cfg: RunConfig) -> Result<(), CliError> {
    cfg.validate(Needs { data: true, checkpoint: true, out: true, ..Needs::default() })?;
    let (state, _) = restore(&cfg)?;
    let names = cfg.paths.catalog.as_deref().map(io::read_catalog).transpose()?;
    let summary = eval::report(&state, flags.top);
    let out = cfg.out_dir();
    io::write_json(&out.join("report.json"), &summary)?;
    io::write_json(&out.join("factors.geojson"), &summary.to_geojson())?;
    let text = summary.to_text(names.as_ref());
    std::fs::write(out.join("report.txt"), &text).map_err(geolatent::Error::from)?;
    print!("{text}");
    Ok(())
}
