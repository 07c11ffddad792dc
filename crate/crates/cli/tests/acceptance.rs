//! Acceptance suite: one line per criterion, non-zero exit if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use geolatent::dirmult::CatalogParams;
use geolatent::geo::UnitVec3;
use geolatent::parallel::{run_parallel, ParallelConfig};
use geolatent::sampler::{c_log_target, sample_c, sample_s, sample_t, sample_z, Sampler, SamplerConfig};
use geolatent::state::{AssignmentState, Customer, Dataset, GlobalSticks, Hyperparams, State};
use geolatent::synth::{self, GewekeChain, PlantedConfig, SynthConfig, SynthMode, ViewCount};
use geolatent::vmf::{self, VmfParams, VmfPrior};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---- 1: vMF normalizer and density ----

fn vmf_suite() -> Outcome {
    let mut worst_rel = 0.0f64;
    for c in [1e-6, 0.1, 1.0, 10.0, 100.0, 700.0] {
        let closed = (c / (4.0 * std::f64::consts::PI * f64::sinh(c))).ln();
        let got = vmf::log_norm_const(3, c).unwrap();
        worst_rel = worst_rel.max(((got - closed).exp_m1()).abs());
    }
    let mut worst_mass = 0.0f64;
    let mu = point(-35.0, 120.0);
    for c in [1e-6, 0.1, 1.0, 10.0] {
        let p = VmfParams { mu, c };
        let log_mass = sphere_log_integral(|x| vmf::log_density(&UnitVec3::normalize(*x).unwrap(), &p), 2000, 400);
        worst_mass = worst_mass.max(log_mass.exp_m1().abs());
    }
    for c in [100.0, 700.0] {
        // around the mean direction: integrate over s = 1 - cos θ
        let n = 400_000;
        let h = 2.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let s = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * (vmf::log_c3(c) + c * (1.0 - s)).exp();
        }
        let mass = acc * h / 3.0 * 2.0 * std::f64::consts::PI;
        worst_mass = worst_mass.max((mass - 1.0).abs());
    }
    outcome(worst_rel <= 1e-10 && worst_mass <= 1e-6, format!("max relative error {worst_rel:.1e}, max mass error {worst_mass:.1e}"))
}

// ---- 2: conditionals ----

fn conditionals_suite() -> Outcome {
    let draws = 100_000;
    let st = frozen_toy();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut ps = Vec::new();

    let probs = t_oracle(&st, 0);
    let counts = tally(probs.len(), draws, || {
        let mut s = st.clone();
        s.unassign_t(0).unwrap();
        sample_t(&mut s, 0, false, &mut rng).unwrap()
    });
    ps.push(("t", chi_square_p(&counts, &probs)));

    let probs = s_oracle(&st, 1);
    let counts = tally(probs.len(), draws, || {
        let mut s = st.clone();
        s.unassign_s(1).unwrap();
        sample_s(&mut s, 1, None, &mut rng).unwrap()
    });
    ps.push(("s", chi_square_p(&counts, &probs)));

    let probs = z_oracle(&st, 3, 0);
    let counts = tally(probs.len(), draws, || {
        let mut s = st.clone();
        s.remove_view(3, 0).unwrap();
        sample_z(&mut s, 3, 0, &mut rng).unwrap()
    });
    ps.push(("z", chi_square_p(&counts, &probs)));

    let detail = ps.iter().map(|(k, p)| format!("{k}: p = {p:.3}")).collect::<Vec<_>>().join(", ");
    outcome(ps.iter().all(|(_, p)| *p > 0.01), detail)
}

// ---- 3: concentration updates ----

fn mh_total_variation(points: Vec<UnitVec3>, prior: VmfPrior, seed: u64) -> f64 {
    let n = points.len();
    let customers = points.into_iter().enumerate().map(|(i, location)| Customer { id: format!("p{i}"), location, views: vec![] }).collect();
    let data = Arc::new(Dataset::new(customers, 1).unwrap());
    let hyper = Arc::new(Hyperparams {
        alpha_phi0: 1.0,
        alpha_pi0: 1.0,
        alpha_omega: 1.0,
        alpha_phi: 1.0,
        alpha_pi: 1.0,
        catalog: CatalogParams::symmetric(1, 1.0).unwrap(),
        vmf_prior: prior,
    });
    let assign = AssignmentState { t: vec![0; n], s: vec![0; n], z: vec![], c: vec![prior.m_c.exp()] };
    let mut st = State::from_assignments(data, hyper, assign, GlobalSticks { weights: vec![1.0], remainder: 0.0 }, GlobalSticks::default()).unwrap();
    let sum = st.sum_s(0);

    // density of u = ln c on a fine grid, then binned
    let (lo, hi) = (prior.m_c - 8.0 * prior.sigma_c, prior.m_c + 8.0 * prior.sigma_c);
    let fine = 40_000;
    let du = (hi - lo) / fine as f64;
    let logd: Vec<f64> = (0..fine).map(|i| lo + (i as f64 + 0.5) * du).map(|u| c_log_target(&sum, n, u.exp(), &prior) + u).collect();
    let max = logd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = logd.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = dens.iter().sum();
    let cdf: Vec<f64> = dens.iter().scan(0.0, |a, d| {
        *a += d / total;
        Some(*a)
    }).collect();
    let at = |q: f64| lo + cdf.iter().position(|c| *c >= q).unwrap_or(fine - 1) as f64 * du;
    let (a, b) = (at(1e-4), at(1.0 - 1e-4));
    let bins = 40;
    let width = (b - a) / bins as f64;
    let bin_of = |u: f64| ((u - a) / width).floor();
    let mut exact = vec![0.0; bins + 1];
    for (i, d) in dens.iter().enumerate() {
        let k = bin_of(lo + (i as f64 + 0.5) * du);
        let k = if (0.0..bins as f64).contains(&k) { k as usize } else { bins };
        exact[k] += d / total;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        sample_c(&mut st, 0, 0.5, &mut rng);
    }
    let steps = 100_000;
    let mut seen = vec![0.0; bins + 1];
    for _ in 0..steps {
        sample_c(&mut st, 0, 0.5, &mut rng);
        let k = bin_of(st.c(0).ln());
        let k = if (0.0..bins as f64).contains(&k) { k as usize } else { bins };
        seen[k] += 1.0 / steps as f64;
    }
    exact.iter().zip(&seen).map(|(e, s)| (e - s).abs()).sum::<f64>() / 2.0
}

fn mh_suite() -> Outcome {
    let single = mh_total_variation(vec![UnitVec3::NORTH_POLE], VmfPrior { mu0: UnitVec3::NORTH_POLE, c0: 1.0, m_c: 1.0, sigma_c: 1.0 }, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let center = point(30.0, -60.0);
    let pts = (0..10).map(|_| vmf::sample_vmf(&VmfParams { mu: center, c: 20.0 }, &mut rng)).collect();
    let ten = mh_total_variation(pts, VmfPrior { mu0: UnitVec3::NORTH_POLE, c0: 1.0, m_c: 2.0, sigma_c: 1.0 }, 32);
    outcome(single <= 0.05 && ten <= 0.05, format!("total variation {single:.3} (1 point), {ten:.3} (10 points)"))
}

// ---- 4: Geweke ----

fn geweke_suite() -> Outcome {
    let hyper = Hyperparams {
        alpha_phi0: 1.0,
        alpha_pi0: 1.0,
        alpha_omega: 1.0,
        alpha_phi: 1.0,
        alpha_pi: 1.0,
        catalog: CatalogParams::symmetric(4, 0.5).unwrap(),
        vmf_prior: VmfPrior { mu0: UnitVec3::NORTH_POLE, c0: 1.0, m_c: 1.0, sigma_c: 0.5 },
    };
    let cfg = SynthConfig { customers: 5, views: ViewCount::Poisson { mean: 3.0 }, truncation: 100, mode: SynthMode::Crp, seed: 0 };
    let reps = 1000;
    let thin = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let forward: Vec<_> = (0..reps)
        .map(|_| {
            let (d, t) = synth::generate(&hyper, &cfg, &mut rng).unwrap();
            synth::forward_stats(&d, &t)
        })
        .collect();
    let (d, t) = synth::generate(&hyper, &cfg, &mut rng).unwrap();
    let mut chain = GewekeChain::new(d, &t, Arc::new(hyper), SamplerConfig::default(), ChaCha8Rng::seed_from_u64(41)).unwrap();
    let chained: Vec<_> = (0..reps).map(|_| chain.run(thin).unwrap()).collect();
    let pick = |f: fn(&synth::GewekeStats) -> f64| -> (Vec<f64>, Vec<f64>) { (forward.iter().map(f).collect(), chained.iter().map(f).collect()) };
    let mut ps = Vec::new();
    for (name, f) in [
        ("live topics", (|s: &synth::GewekeStats| s.live_topics) as fn(&synth::GewekeStats) -> f64),
        ("mean c", |s| s.mean_c),
        ("mean resultant length", |s| s.mean_resultant_length),
    ] {
        let (a, b) = pick(f);
        ps.push((name, ks_two_sample(&a, &b).1));
    }
    let detail = ps.iter().map(|(k, p)| format!("{k}: p = {p:.3}")).collect::<Vec<_>>().join(", ");
    outcome(ps.iter().all(|(_, p)| *p > 0.01), detail)
}

// ---- 5 and 6: recovery and parallel fidelity ----

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SWEEPS: u64 = 200;

fn recovery_data(seed: u64) -> Planted {
    planted(&PlantedConfig::well_separated(600), 500, 1000 + seed)
}

fn serial_run(p: &Planted, seed: u64) -> Recovery {
    let mut st = State::empty(p.train.clone(), recovery_hyper(40)).unwrap();
    let mut s = Sampler::new(SamplerConfig { rng_seed: seed, ..Default::default() });
    s.initialize(&mut st).unwrap();
    for _ in 0..SWEEPS {
        s.sweep(&mut st).unwrap();
    }
    score(&st, p)
}

fn parallel_run(p: &Planted, seed: u64, workers: usize) -> Recovery {
    let config = SamplerConfig { rng_seed: seed, ..Default::default() };
    let (st, _) = run_parallel(p.train.clone(), recovery_hyper(40), &config, ParallelConfig::new(workers), SWEEPS).unwrap();
    score(&st, p)
}

fn medians(rs: &[Recovery]) -> (f64, f64, f64) {
    (
        median(rs.iter().map(|r| r.ari_s).collect()),
        median(rs.iter().map(|r| r.ari_z).collect()),
        median(rs.iter().map(|r| r.per_view).collect()),
    )
}

fn recovery_suite(serial: &[Recovery]) -> Outcome {
    let (s, z, _) = medians(serial);
    let each = serial.iter().map(|r| format!("{:.2}/{:.2}", r.ari_s, r.ari_z)).collect::<Vec<_>>().join(" ");
    outcome(s >= 0.8 && z >= 0.8, format!("median ARI s = {s:.3}, z = {z:.3} (per seed s/z: {each})"))
}

fn bitwise_single_worker() -> bool {
    let p = recovery_data(0);
    let config = SamplerConfig { rng_seed: 9, ..Default::default() };
    let mut serial = State::empty(p.train.clone(), recovery_hyper(40)).unwrap();
    let mut s = Sampler::new(config.clone());
    s.initialize(&mut serial).unwrap();
    let mut diags = Vec::new();
    for _ in 0..20 {
        diags.push(s.sweep(&mut serial).unwrap());
    }
    let (par, pdiags) = run_parallel(p.train.clone(), recovery_hyper(40), &config, ParallelConfig::new(1), 20).unwrap();
    let same_c = serial.assignments().c.iter().zip(&par.assignments().c).all(|(a, b)| a.to_bits() == b.to_bits());
    let same_sticks = |a: &GlobalSticks, b: &GlobalSticks| {
        a.weights.len() == b.weights.len()
            && a.weights.iter().zip(&b.weights).all(|(x, y)| x.to_bits() == y.to_bits())
            && a.remainder.to_bits() == b.remainder.to_bits()
    };
    serial.assignments().t == par.assignments().t
        && serial.assignments().s == par.assignments().s
        && serial.assignments().z == par.assignments().z
        && serial.assignments().c.len() == par.assignments().c.len()
        && same_c
        && same_sticks(serial.phi0(), par.phi0())
        && same_sticks(serial.pi0(), par.pi0())
        && diags.iter().zip(&pdiags).all(|(a, b)| a.log_joint.to_bits() == b.sweep.log_joint.to_bits())
}

fn parallel_suite(serial: &[Recovery], data: &[Planted]) -> Outcome {
    let par: Vec<Recovery> = data.iter().zip(SEEDS).map(|(p, seed)| parallel_run(p, seed, 4)).collect();
    let (s1, z1, v1) = medians(serial);
    let (s4, z4, v4) = medians(&par);
    let close = (v4 - v1).abs() <= 0.05 && (s4 - s1).abs() <= 0.05 && (z4 - z1).abs() <= 0.05;
    let bitwise = bitwise_single_worker();
    outcome(
        close && bitwise,
        format!(
            "per-view {v1:.4} vs {v4:.4}, ARI s {s1:.3} vs {s4:.3}, z {z1:.3} vs {z4:.3}; one worker bitwise identical: {bitwise}"
        ),
    )
}

// ---- 7: table audit ----

fn audit_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let customers = (0..200)
        .map(|i| {
            let views: Vec<u32> = (0..rng.gen_range(0..8)).map(|_| rng.gen_range(0..10)).collect();
            customer(i, rng.gen_range(-80.0..80.0), rng.gen_range(-170.0..170.0), &views)
        })
        .collect();
    let data = Arc::new(Dataset::new(customers, 10).unwrap());
    let mut st = State::empty(data.clone(), recovery_hyper(10)).unwrap();
    geolatent::sampler::initialize(&mut st, Default::default(), false, &mut rng).unwrap();
    let target_ops = 1_000_000u64;
    let mut ops = 0u64;
    let mut mismatches = 0;
    while ops < target_ops {
        let d = rng.gen_range(0..data.len());
        match rng.gen_range(0..3) {
            0 => {
                st.unassign_t(d).unwrap();
                let t = if rng.gen_bool(0.1) { st.open_t() } else { rng.gen_range(0..st.num_t().max(1)) };
                let t = if st.num_t() == 0 { st.open_t() } else { t };
                st.assign_t(d, t).unwrap();
            }
            1 => {
                st.unassign_s(d).unwrap();
                let s = if st.num_s() == 0 || rng.gen_bool(0.1) { st.open_s(1.0, 0.5) } else { rng.gen_range(0..st.num_s()) };
                st.assign_s(d, s).unwrap();
            }
            _ => {
                let n = data.views(d).len();
                if n == 0 {
                    continue;
                }
                let j = rng.gen_range(0..n);
                st.remove_view(d, j).unwrap();
                let z = if st.num_z() == 0 || rng.gen_bool(0.1) { st.open_z(0.5) } else { rng.gen_range(0..st.num_z()) };
                st.add_view(d, j, z).unwrap();
            }
        }
        ops += 2;
        if ops % 100_000 == 0 && st.tables() != &st.recompute_tables() {
            mismatches += 1;
        }
    }
    let equal = st.tables() == &st.recompute_tables() && st.audit().is_ok();
    outcome(equal && mismatches == 0, format!("{ops} operations, {mismatches} intermediate mismatches, final tables equal: {equal}"))
}

// ---- 8: command line ----

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_geolatent")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`{}` exited with {}: {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr)))
    }
}

fn cli_suite() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let config = config.to_string_lossy().into_owned();
    let run = || -> Result<bool, String> {
        cli(&["generate", "--config", &config, "--out", &d("data")])?;
        let (data, heldout, truth) = (d("data/data.jsonl"), d("data/heldout.jsonl"), d("data/truth.json"));
        cli(&["train", "--config", &config, "--data", &data, "--out", &d("serial")])?;
        cli(&["train", "--config", &config, "--data", &data, "--workers", "4", "--out", &d("par")])?;
        for run in ["serial", "par"] {
            let cp = d(&format!("{run}/checkpoint.json"));
            cli(&["evaluate", "--config", &config, "--data", &data, "--heldout", &heldout, "--truth", &truth, "--checkpoint", &cp, "--out", &d(&format!("{run}-eval"))])?;
            cli(&["report", "--config", &config, "--data", &data, "--checkpoint", &cp, "--out", &d(&format!("{run}-report"))])?;
        }
        cli(&["train", "--config", &config, "--data", &data, "--sweeps", "5", "--out", &d("full")])?;
        cli(&["train", "--config", &config, "--data", &data, "--sweeps", "3", "--out", &d("split")])?;
        cli(&["resume", "--config", &config, "--data", &data, "--sweeps", "2", "--checkpoint", &d("split/checkpoint.json"), "--out", &d("split")])?;
        let read = |p: &str| std::fs::read(d(p)).map_err(|e| format!("{p}: {e}"));
        Ok(read("full/checkpoint.json")? == read("split/checkpoint.json")? && read("full/diagnostics.jsonl")? == read("split/diagnostics.jsonl")?)
    };
    match run() {
        Ok(same) => outcome(same, format!("all commands exit 0; 3 + 2 resumed sweeps match 5 straight sweeps: {same}")),
        Err(e) => outcome(false, e),
    }
}

fn main() {
    // test listing asks for names only
    if std::env::args().skip(1).any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} {name}: {verdict} [{:.1}s] {}", start.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "vMF normalizer and density", &mut vmf_suite);
    report(2, "conditional frequencies", &mut conditionals_suite);
    report(3, "concentration MH target", &mut mh_suite);
    report(4, "Geweke joint consistency", &mut geweke_suite);
    let data: Vec<Planted> = SEEDS.iter().map(|s| recovery_data(*s)).collect();
    let mut serial = Vec::new();
    report(5, "synthetic recovery", &mut || {
        serial = data.iter().zip(SEEDS).map(|(p, seed)| serial_run(p, seed)).collect();
        recovery_suite(&serial)
    });
    report(6, "parallel fidelity", &mut || parallel_suite(&serial, &data));
    report(7, "table audit", &mut audit_suite);
    report(8, "command-line round trip", &mut cli_suite);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
