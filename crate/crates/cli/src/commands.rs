//! Subcommand implementations. Every file written carries the seed and the
//! run digest, a SHA-256 over the subcommand name, seed and resolved config.

use std::fs;
use std::path::{Path, PathBuf};

use fastslow_core::greenkubo::{birkhoff_variance, estimate_sigma_sq_map};
use fastslow_core::io::{gamma_csv, trajectory_csv, write_json, TrajectorySidecar};
use fastslow_core::micro::dynamics::micro_simulate_from;
use fastslow_core::micro::{MicroConfig, MicroState};
use fastslow_core::rng::stream;
use fastslow_core::sde::{hex_digest, simulate_from, simulate_log_coords, LogCoordsConfig, SdeRunConfig, TrajectoryRecord};
use fastslow_core::verify::reports_to_csv;
use fastslow_core::verify::suite::{check_compare, gamma_estimate, run_suite, GammaSection};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load_config, parse_config, ConfigError, LoadedConfig, DEFAULT_VERIFY_CONFIG};
use crate::{Command, Common, EXIT_OK, EXIT_VERIFY, OUT_DIR_ENV};

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<fastslow_core::Error> for Failure {
    fn from(e: fastslow_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

struct Run {
    name: &'static str,
    cfg: LoadedConfig,
    seed: u64,
    digest: String,
    out: PathBuf,
    verbose: u8,
}

impl Run {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("[{}] {}", self.name, msg.as_ref());
        }
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    /// Writes `{config_digest, seed, ...payload}` as pretty JSON.
    fn write_report<T: Serialize>(&self, file: &str, payload: &T) -> Result<(), Failure> {
        let mut doc = serde_json::json!({ "config_digest": self.digest, "seed": self.seed });
        if let serde_json::Value::Object(extra) = serde_json::to_value(payload).map_err(|e| Failure::Runtime(e.to_string()))? {
            doc.as_object_mut().unwrap().extend(extra);
        }
        write_json(&self.path(file), &doc)?;
        Ok(())
    }

    fn write_trajectory(&self, stem: &str, mut record: TrajectoryRecord, extra: serde_json::Value) -> Result<(), Failure> {
        record.config_digest = self.digest.clone();
        record.seed = self.seed;
        fs::write(self.path(&format!("{stem}.csv")), trajectory_csv(&record))?;
        write_json(&self.path(&format!("{stem}.json")), &TrajectorySidecar::new(&record, extra))?;
        Ok(())
    }
}

/// Core argument errors raised while assembling a run configuration.
fn in_section(key: &'static str) -> impl Fn(fastslow_core::Error) -> Failure {
    move |e| Failure::Config(ConfigError(format!("config error at `{key}`: {e}")))
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::SimulateSde(_) => "simulate-sde",
        Command::SimulateMicro(_) => "simulate-micro",
        Command::EstimateGamma(_) => "estimate-gamma",
        Command::EstimateSigma(_) => "estimate-sigma",
        Command::Verify(_) => "verify",
        Command::Compare(_) => "compare",
    }
}

fn output_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fastslow-out"))
}

fn prepare(cmd: &Command, common: &Common) -> Result<Run, Failure> {
    let name = command_name(cmd);
    let cfg = match (&common.config, cmd) {
        (Some(p), _) => load_config(p)?,
        (None, Command::Verify(_)) => parse_config(DEFAULT_VERIFY_CONFIG, Path::new("."))?,
        (None, _) => return Err(ConfigError(format!("{name} requires --config <FILE>")).into()),
    };
    let seed = common.seed.or(cfg.file.seed).unwrap_or(0);
    if let Some(w) = common.workers.or(cfg.file.workers) {
        if w == 0 {
            return Err(ConfigError("--workers must be >= 1".into()).into());
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let resolved = serde_json::to_value(&cfg.file).map_err(|e| Failure::Runtime(e.to_string()))?;
    let digest = hex_digest(serde_json::json!({ "command": name, "seed": seed, "config": resolved }).to_string().as_bytes());
    let out = output_dir(common);
    fs::create_dir_all(&out)?;
    let run = Run {
        name,
        cfg,
        seed,
        digest,
        out,
        verbose: common.verbose,
    };
    run.write_report("resolved_config.json", &serde_json::json!({ "command": name, "config": resolved }))?;
    Ok(run)
}

pub fn execute(cmd: &Command, common: &Common) -> Result<i32, Failure> {
    let run = prepare(cmd, common)?;
    run.log(format!("seed {} digest {}", run.seed, run.digest));
    match cmd {
        Command::SimulateSde(_) => simulate_sde(&run),
        Command::SimulateMicro(_) => simulate_micro(&run),
        Command::EstimateGamma(_) => estimate_gamma(&run),
        Command::EstimateSigma(_) => estimate_sigma(&run),
        Command::Verify(_) => verify(&run),
        Command::Compare(_) => compare(&run),
    }
}

fn simulate_sde(run: &Run) -> Result<i32, Failure> {
    let f = &run.cfg.file;
    let s = run.cfg.require(&f.sde, "sde")?;
    let graph = run.cfg.graph()?;
    let model = run.cfg.model()?;
    let mut base =
        SdeRunConfig::new(graph, model, s.initial.clone(), s.t_end, run.seed).map_err(in_section("sde"))?;
    if let Some(dt) = s.dt {
        base.dt = dt;
    }
    base.delta_stop = s.delta_stop;
    base.record_stride = s.record_stride;
    base.max_halvings = s.max_halvings;
    base.max_rel_change = s.max_rel_change;
    base.validate().map_err(in_section("sde"))?;
    let section = serde_json::to_value(s).unwrap_or_default();
    if let Some(l) = &s.log_coordinates {
        if s.ensemble != 1 {
            return Err(ConfigError("config error at `sde.ensemble`: log coordinates support a single trajectory".into()).into());
        }
        let rec = simulate_log_coords(&LogCoordsConfig {
            base,
            cutoff_delta: l.cutoff_delta,
            project: l.project,
        })?;
        run.write_trajectory("sde_0000", rec, section)?;
        return Ok(EXIT_OK);
    }
    let records: Vec<TrajectoryRecord> = (0..s.ensemble)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(run.seed, "sde-trajectory", i as u64);
            simulate_from(&base, &base.initial, &mut rng)
        })
        .collect::<fastslow_core::Result<_>>()?;
    for (i, r) in records.into_iter().enumerate() {
        run.log(format!("trajectory {i}: t = {}, stopped = {}", r.final_time(), r.stopped));
        run.write_trajectory(&format!("sde_{i:04}"), r, section.clone())?;
    }
    Ok(EXIT_OK)
}

fn simulate_micro(run: &Run) -> Result<i32, Failure> {
    let f = &run.cfg.file;
    let s = run.cfg.require(&f.micro, "micro")?;
    let graph = run.cfg.graph()?;
    let mut mc = MicroConfig::new(graph, s.initial.clone(), 1.0, s.delta, s.t_end, run.seed)
        .map_err(in_section("micro"))?;
    mc.epsilon = s.epsilon;
    mc.backend = s.backend;
    mc.potential = s.potential;
    mc.step = s.step;
    mc.physical_time = s.physical_time;
    mc.max_hamiltonian_drift = s.max_hamiltonian_drift;
    mc.record_interval = s.record_interval.unwrap_or(match s.physical_time {
        Some(t) if s.epsilon > 0.0 => s.epsilon * s.epsilon * t / 100.0,
        Some(t) => t / 100.0,
        None => s.t_end / 100.0,
    });
    mc.validate().map_err(in_section("micro"))?;
    let section = serde_json::to_value(s).unwrap_or_default();
    let records = (0..s.ensemble)
        .into_par_iter()
        .map(|i| micro_simulate_from(&mc, MicroState::sample(&mc.initial, run.seed, i as u64)))
        .collect::<fastslow_core::Result<Vec<_>>>()?;
    for (i, r) in records.into_iter().enumerate() {
        run.log(format!("trajectory {i}: hamiltonian drift {:.3e}", r.hamiltonian_drift));
        let extra = serde_json::json!({
            "section": section,
            "hamiltonian_drift": r.hamiltonian_drift,
            "max_det_error": r.max_det_error,
        });
        run.write_trajectory(&format!("micro_{i:04}"), r.trajectory, extra)?;
    }
    Ok(EXIT_OK)
}

fn gamma_section(run: &Run) -> GammaSection {
    run.cfg.file.gamma.clone().unwrap_or_default()
}

fn estimate_gamma(run: &Run) -> Result<i32, Failure> {
    let s = run.cfg.require(&run.cfg.file.gamma, "gamma")?;
    run.log(format!("{} tau points, {} samples each", s.tau_points, s.ensemble));
    let est = gamma_estimate(s, run.seed)?;
    fs::write(run.path("gamma.csv"), gamma_csv(&est.table()?, &run.digest, run.seed))?;
    run.write_report("gamma_report.json", &est)?;
    Ok(EXIT_OK)
}

fn estimate_sigma(run: &Run) -> Result<i32, Failure> {
    let s = run.cfg.require(&run.cfg.file.sigma, "sigma")?;
    let est = estimate_sigma_sq_map(s.observable, s.lag_max, s.ensemble, run.seed)?;
    let oracle = (s.oracle_steps > 0 && s.oracle_orbits > 1).then(|| {
        birkhoff_variance(
            s.observable,
            s.oracle_steps,
            s.oracle_orbits,
            fastslow_core::rng::child_seed(run.seed, "sigma-oracle", 0),
        )
    });
    run.write_report(
        "sigma.json",
        &serde_json::json!({ "observable": s.observable, "estimate": est, "oracle": oracle }),
    )?;
    Ok(EXIT_OK)
}

fn verify(run: &Run) -> Result<i32, Failure> {
    let mut suite = run.cfg.require(&run.cfg.file.verify, "verify")?.clone();
    suite.seed = run.seed;
    let reports = run_suite(&suite, |r| {
        println!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.name);
        run.log(format!("{}: statistic {:.4e}", r.name, r.statistic));
    });
    let all = !reports.is_empty() && reports.iter().all(|r| r.pass);
    run.write_report("verify_report.json", &serde_json::json!({ "pass": all, "reports": reports }))?;
    let csv = format!("# config_digest={}\n# seed={}\n{}", run.digest, run.seed, reports_to_csv(&reports));
    fs::write(run.path("verify_summary.csv"), csv)?;
    Ok(if all { EXIT_OK } else { EXIT_VERIFY })
}

fn compare(run: &Run) -> Result<i32, Failure> {
    let f = &run.cfg.file;
    let s = run.cfg.require(&f.compare, "compare")?;
    let gs = gamma_section(run);
    let table = match f.model.as_ref().and_then(|m| m.gamma_table.as_ref()) {
        Some(p) => fastslow_core::io::read_gamma_csv(&run.cfg.resolve(p))
            .map_err(|e| ConfigError(format!("config error at `model.gamma_table`: {e}")))?,
        None => {
            run.log("estimating the Γ table");
            gamma_estimate(&gs, fastslow_core::rng::child_seed(run.seed, "compare-gamma", 0))?.table()?
        }
    };
    let report = check_compare(s, &gs, table, run.seed)?;
    println!("{} {}", if report.pass { "PASS" } else { "FAIL" }, report.name);
    run.write_report("compare_report.json", &report)?;
    Ok(if report.pass { EXIT_OK } else { EXIT_VERIFY })
}
