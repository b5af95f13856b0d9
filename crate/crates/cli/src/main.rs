//! `nrep`: build targets, probe them, check analytic conditions and rerun
//! the reference experiment grids.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use nrep_core::adapt::adapt_minimize_with;
use nrep_core::experiments::{experiment_pool_config, probe_layout, reproduce, Algorithm, ExperimentOptions, TableReport, TABLES};
use nrep_core::io::{read_rdm, write_rdm};
use nrep_core::nrep::{evaluate_inequalities, load_inequalities, two_body_check, coleman_check, InequalitySet};
use nrep_core::pool::{build_pool, Excitation, PoolConfig, SzConservation};
use nrep_core::rdm::compute_rdm;

use config::{check_model, prepare, Format, Overrides, RunConfig};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const GIT_HASH: &str = match option_env!("NREP_GIT_HASH") {
    Some(h) => h,
    None => "unknown",
};

mod exit {
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NOT_CONVERGED: u8 = 4;
    pub const REPRODUCE_FAILED: u8 = 5;
}

/// Error classes mapped to distinct exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        Failure::Config(anyhow::anyhow!("{msg}"))
    }

    pub fn from_core(e: nrep_core::Error) -> Self {
        use nrep_core::Error as E;
        match e {
            E::Parse { .. } | E::Io(_) | E::Json(_) | E::Thermal(_) | E::NonFinite => Failure::Data(e.into()),
            _ => Failure::Config(e.into()),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => exit::CONFIG,
            Failure::Data(_) => exit::DATA,
        }
    }
}

fn io_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

#[derive(Parser)]
#[command(name = "nrep", version, about = "Variational N-representability probes for fermionic RDMs")]
struct Cli {
    /// Worker threads for the pool scan.
    #[arg(long, global = true, env = "NREP_THREADS")]
    threads: Option<usize>,
    /// Print per-iteration progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a target RDM from a run config and write it as JSON.
    MakeTarget {
        #[arg(long)]
        config: PathBuf,
        /// Output file; defaults to `<out_dir>/target.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the greedy minimization and write a JSON summary and CSV trace.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check Coleman conditions and an optional inequality set on an RDM file.
    Check {
        #[arg(long)]
        rdm: PathBuf,
        #[arg(long)]
        inequalities: Option<PathBuf>,
        #[arg(long, default_value_t = nrep_core::nrep::DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the generator pool as CSV (id, kind, indices).
    PoolDump {
        #[arg(long)]
        n_spatial: usize,
        #[arg(long)]
        n_electrons: usize,
        #[arg(long, default_value = "ensemble", value_parser = ["pure", "ensemble"])]
        mode: String,
        /// Keep generators acting only on the bath.
        #[arg(long)]
        keep_bath_only: bool,
        #[arg(long, default_value = "none", value_parser = ["none", "total", "per-register"])]
        conserve_sz: String,
        #[arg(long)]
        no_one_body: bool,
        #[arg(long)]
        no_two_body: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a reference table and compare against its values.
    Reproduce {
        /// 2, 3, 5, 6, 7 or `all`.
        #[arg(long)]
        table: String,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        /// Noise realizations per noisy cell.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        k_max: Option<usize>,
        /// Write `table<N>.json` reports here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MakeTarget { ref config, ref out, ref overrides } => make_target(config, out.as_deref(), overrides, cli.threads),
        Command::Probe { ref config, ref overrides } => probe(config, overrides, cli.threads, cli.verbose),
        Command::Check { ref rdm, ref inequalities, tol, ref out } => check(rdm, inequalities.as_deref(), tol, out.as_deref()),
        Command::PoolDump { n_spatial, n_electrons, ref mode, keep_bath_only, ref conserve_sz, no_one_body, no_two_body, ref out } => {
            let pool = PoolConfig {
                include_one_body: !no_one_body,
                include_two_body: !no_two_body,
                conserve_sz: match conserve_sz.as_str() {
                    "total" => SzConservation::Total,
                    "per-register" => SzConservation::PerRegister,
                    _ => SzConservation::None,
                },
                exclude_bath_only: !keep_bath_only,
            };
            let mode = if mode == "pure" { Algorithm::Pure } else { Algorithm::Ensemble };
            pool_dump(n_spatial, n_electrons, mode, &pool, out.as_deref())
        }
        Command::Reproduce { ref table, ref data_dir, seeds, k_max, ref out_dir } => {
            reproduce_cmd(table, data_dir, seeds, k_max, cli.threads, out_dir.as_deref(), cli.verbose)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let err = match &f {
                Failure::Config(e) => e,
                Failure::Data(e) => e,
            };
            let kind = if matches!(f, Failure::Config(_)) { "config error" } else { "data error" };
            eprintln!("nrep: {kind}: {err:#}");
            ExitCode::from(f.code())
        }
    }
}

fn load_config(path: &Path, overrides: &Overrides, threads: Option<usize>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(overrides, threads)?;
    check_model(&cfg).map_err(Failure::Config)?;
    Ok(cfg)
}

fn provenance(cfg: &RunConfig) -> Value {
    json!({
        "version": VERSION,
        "git": GIT_HASH,
        "seed": cfg.seed,
        "config": cfg,
    })
}

fn make_target(path: &Path, out: Option<&Path>, o: &Overrides, threads: Option<usize>) -> Result<u8, Failure> {
    let cfg = load_config(path, o, threads)?;
    let prepared = prepare(&cfg)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.join("target.json"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_failure)?;
    }
    let mut meta = provenance(&cfg);
    meta["noise"] = serde_json::to_value(cfg.noise_spec()).map_err(io_failure)?;
    if let Some(t) = &prepared.thermal {
        meta["thermal"] = serde_json::to_value(t).map_err(io_failure)?;
    }
    write_rdm(&out, &prepared.target, meta).map_err(Failure::from_core)?;
    let tr = prepared.target.trace();
    println!("wrote {} (p={}, trace {:.6})", out.display(), prepared.target.p(), tr.re);
    Ok(0)
}

fn probe(path: &Path, o: &Overrides, threads: Option<usize>, verbose: bool) -> Result<u8, Failure> {
    let cfg = load_config(path, o, threads)?;
    let prepared = prepare(&cfg)?;
    let pool = build_pool(prepared.initial.layout(), &cfg.pool).map_err(Failure::from_core)?;
    let start = Instant::now();
    let result = adapt_minimize_with(&prepared.initial, &prepared.target, &pool, &cfg.adapt, |e| {
        if verbose {
            eprintln!("k={:<5} generator={:<6} theta={:+.6} D={:.6e}", e.k, e.generator_id, e.theta, e.distance);
        }
    })
    .map_err(Failure::from_core)?;
    let elapsed = start.elapsed().as_secs_f64();

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(io_failure)?;
    let final_rdm = compute_rdm(&result.final_state, cfg.target.p).map_err(Failure::from_core)?;
    if cfg.output.formats.contains(&Format::Json) {
        let mut summary = provenance(&cfg);
        summary["result"] = json!({
            "d_min": result.d_min,
            "initial_distance": result.initial_distance,
            "iterations": result.trace.len(),
            "converged": result.converged,
            "stall": result.stall,
            "pool_size": pool.len(),
            "elapsed_seconds": elapsed,
        });
        if let Some(t) = &prepared.thermal {
            summary["thermal"] = serde_json::to_value(t).map_err(io_failure)?;
        }
        let text = serde_json::to_string_pretty(&summary).map_err(io_failure)?;
        fs::write(dir.join("summary.json"), text + "\n").map_err(io_failure)?;
        write_rdm(dir.join("final_rdm.json"), &final_rdm, provenance(&cfg)).map_err(Failure::from_core)?;
    }
    if cfg.output.formats.contains(&Format::Csv) {
        let mut w = csv::Writer::from_path(dir.join("trace.csv")).map_err(io_failure)?;
        for e in &result.trace {
            w.serialize(e).map_err(io_failure)?;
        }
        w.flush().map_err(io_failure)?;
    }
    let snapshot = toml::to_string(&cfg).map_err(io_failure)?;
    fs::write(dir.join("config.toml"), snapshot).map_err(io_failure)?;

    println!(
        "d_min = {:.6e} after {} iterations ({}), {:.3} s",
        result.d_min,
        result.trace.len(),
        if result.converged { "converged" } else { "k_max reached" },
        elapsed
    );
    Ok(if result.converged { 0 } else { exit::NOT_CONVERGED })
}

fn check(rdm: &Path, inequalities: Option<&Path>, tol: f64, out: Option<&Path>) -> Result<u8, Failure> {
    let (m, _) = read_rdm::<f64>(rdm)
        .map_err(|e| Failure::Data(anyhow::Error::new(e).context(format!("reading {}", rdm.display()))))?;
    let report = if m.p() == 2 {
        if inequalities.is_some() {
            return Err(Failure::config("inequality sets apply to 1-RDMs only"));
        }
        serde_json::to_value(two_body_check(&m, tol).map_err(Failure::from_core)?)
    } else {
        let set: Option<InequalitySet> = match inequalities {
            Some(p) => Some(
                load_inequalities(p)
                    .map_err(|e| Failure::Data(anyhow::Error::new(e).context(format!("reading {}", p.display()))))?,
            ),
            None => None,
        };
        let r = match &set {
            Some(s) => evaluate_inequalities(&m, s, tol),
            None => coleman_check(&m, m.n_particles(), tol),
        }
        .map_err(Failure::from_core)?;
        serde_json::to_value(r)
    }
    .map_err(io_failure)?;
    let text = serde_json::to_string_pretty(&report).map_err(io_failure)? + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(io_failure)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn pool_dump(n_spatial: usize, n_electrons: usize, mode: Algorithm, cfg: &PoolConfig, out: Option<&Path>) -> Result<u8, Failure> {
    let layout = probe_layout(mode, 2 * n_spatial, n_electrons).map_err(Failure::from_core)?;
    let pool = build_pool(&layout, cfg).map_err(Failure::from_core)?;
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(io_failure)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["id", "kind", "indices"]).map_err(io_failure)?;
    let (mut ones, mut twos) = (0, 0);
    for g in &pool {
        let (kind, idx) = match g.excitation {
            Excitation::One { i, k } => {
                ones += 1;
                ("one-body", format!("{i} {k}"))
            }
            Excitation::Two { i, j, k, l } => {
                twos += 1;
                ("two-body", format!("{i} {j} {k} {l}"))
            }
        };
        w.write_record([g.id.to_string().as_str(), kind, idx.as_str()]).map_err(io_failure)?;
    }
    w.flush().map_err(io_failure)?;
    let reference = if cfg == &experiment_pool_config() && mode == Algorithm::Ensemble {
        match n_spatial {
            2 => " (reference: 72)",
            3 => " (reference: 378)",
            4 => " (reference: 1196)",
            _ => "",
        }
    } else {
        ""
    };
    eprintln!("{layout}: {} generators, {ones} one-body, {twos} two-body{reference}", pool.len());
    Ok(0)
}

fn reproduce_cmd(
    table: &str,
    data_dir: &Path,
    seeds: u64,
    k_max: Option<usize>,
    threads: Option<usize>,
    out_dir: Option<&Path>,
    verbose: bool,
) -> Result<u8, Failure> {
    let tables: Vec<u8> = if table == "all" {
        TABLES.to_vec()
    } else {
        let t: u8 = table.parse().map_err(|_| Failure::config(format!("unknown table {table:?}")))?;
        if !TABLES.contains(&t) {
            return Err(Failure::config(format!("no experiment for table {t}; choose one of {TABLES:?} or all")));
        }
        vec![t]
    };
    if seeds == 0 {
        return Err(Failure::config("--seeds must be at least 1"));
    }
    let mut opts = ExperimentOptions { seeds: (1..=seeds).collect(), data_dir: data_dir.to_path_buf(), threads, ..Default::default() };
    if let Some(k) = k_max {
        opts.k_max = k;
    }
    if let Some(d) = out_dir {
        fs::create_dir_all(d).map_err(io_failure)?;
    }
    let mut all_pass = true;
    for t in tables {
        let mut hook = |s: &nrep_core::experiments::ProbeSetup, r: &nrep_core::adapt::ProbeResult<f64>| {
            if verbose {
                eprintln!("{}: d_min {:.6e} in {} iterations", s.label, r.d_min, r.trace.len());
            }
        };
        let report: TableReport = reproduce(t, &opts, Some(&mut hook)).map_err(Failure::from_core)?;
        if t == 7 && report.cells.is_empty() {
            return Err(Failure::Data(anyhow::anyhow!(
                "no FCIDUMP files under {}; missing:\n  {}",
                data_dir.join("fcidump").display(),
                report.notes.iter().filter(|n| n.starts_with("skipped")).cloned().collect::<Vec<_>>().join("\n  ")
            )));
        }
        println!("{report}");
        all_pass &= report.pass();
        if let Some(d) = out_dir {
            let mut v = serde_json::to_value(&report).map_err(io_failure)?;
            v["version"] = json!(VERSION);
            v["git"] = json!(GIT_HASH);
            v["options"] = serde_json::to_value(&opts).map_err(io_failure)?;
            let text = serde_json::to_string_pretty(&v).map_err(io_failure)?;
            fs::write(d.join(format!("table{t}.json")), text + "\n")
                .with_context(|| format!("writing report for table {t}"))
                .map_err(Failure::Data)?;
        }
    }
    Ok(if all_pass { 0 } else { exit::REPRODUCE_FAILED })
}
