use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rlad_seir::network::{generate, NetworkSidecar, PRNG_NAME};
use rlad_seir::scenario::{
    run_scenario, write_rows, write_scenario_outputs, IntegratorSpec, RunManifest, ScenarioConfig,
};
use rlad_seir::sweep::{run_sweep, SweepConfig};
use rlad_seir::validate::{
    run_validation, write_validation_outputs, NetgenConfig, ValidationConfig,
};

#[derive(Parser)]
#[command(
    name = "rlad-seir",
    version,
    about = "SEIR epidemics on adaptive clustered networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the integrator relative tolerance
    #[arg(long, global = true)]
    rtol: Option<f64>,
    /// Override the integrator absolute tolerance (persons)
    #[arg(long, global = true)]
    atol: Option<f64>,
}

impl Common {
    fn integrator(&self, spec: &mut IntegratorSpec) {
        if let Some(r) = self.rtol {
            spec.rtol = r;
        }
        if let Some(a) = self.atol {
            spec.atol = Some(a);
        }
    }

    fn threads(&self) -> usize {
        self.threads.unwrap_or_else(available_threads)
    }
}

fn available_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario: baseline plus intervention, with metrics
    Simulate { config: PathBuf },
    /// Run a policy parameter sweep
    Sweep { config: PathBuf },
    /// Compare a stochastic ensemble with the pairwise ODE
    Validate { config: PathBuf },
    /// Generate a contact network edge list
    Netgen { config: PathBuf },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn simulate(path: &Path, c: &Common) -> Result<()> {
    let mut cfg: ScenarioConfig = read_json(path)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    c.integrator(&mut cfg.integrator);
    let (prepared, result) = run_scenario(&cfg)?;
    write_scenario_outputs(&cfg, &prepared, &result, &c.out)?;
    let r = &result.report;
    println!(
        "{}: R_inf {:.2} (baseline {:.2}), RCFS {:.4}, {}",
        cfg.id,
        r.r_inf_intervention,
        r.r_inf_baseline,
        r.rcfs,
        r.classification.as_str()
    );
    Ok(())
}

fn sweep(path: &Path, c: &Common) -> Result<()> {
    let mut cfg: SweepConfig = read_json(path)?;
    if let Some(s) = c.seed {
        cfg.base.seed = s;
    }
    c.integrator(&mut cfg.base.integrator);
    if c.threads.is_some() {
        cfg.threads = c.threads;
    }
    let threads = cfg.threads.unwrap_or_else(available_threads);
    let rows = run_sweep(&cfg, Some(threads))?;
    fs::create_dir_all(&c.out)?;
    write_rows(
        &rows,
        BufWriter::new(fs::File::create(c.out.join("sweep.csv"))?),
    )?;
    let mut manifest = RunManifest::new("sweep", &cfg, cfg.base.seed, threads);
    manifest.outputs.push("sweep.csv".into());
    manifest.write(&c.out)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("{} cells, {} failed", rows.len(), failed);
    Ok(())
}

fn validate(path: &Path, c: &Common) -> Result<()> {
    let mut cfg: ValidationConfig = read_json(path)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    c.integrator(&mut cfg.integrator);
    let threads = c.threads();
    let run = run_validation(&cfg, Some(threads))?;
    write_validation_outputs(&cfg, &run, threads, &c.out)?;
    let s = &run.summary;
    println!(
        "peak {:.2} vs {:.2}, final {:.2} vs {:.2}, peak time {:.1} vs {:.1}",
        s.simulation.peak_prevalence,
        s.simple_closure.peak_prevalence,
        s.simulation.final_size,
        s.simple_closure.final_size,
        s.simulation.peak_time,
        s.simple_closure.peak_time
    );
    Ok(())
}

fn netgen(path: &Path, c: &Common) -> Result<()> {
    let mut cfg: NetgenConfig = read_json(path)?;
    if let Some(s) = c.seed {
        cfg = cfg.with_seed(s);
    }
    let spec = cfg.resolve()?;
    let graph = generate(&spec)?;
    fs::create_dir_all(&c.out)?;
    let mut w = BufWriter::new(fs::File::create(c.out.join("edges.txt"))?);
    graph.write_edge_list(&mut w)?;
    w.flush()?;
    let sidecar = NetworkSidecar::describe(&spec, &graph);
    fs::write(
        c.out.join("network.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    let mut manifest = RunManifest::new("netgen", &cfg, spec.seed, 1);
    manifest.prng = PRNG_NAME.to_string();
    manifest.outputs = vec!["edges.txt".into(), "network.json".into()];
    manifest.write(&c.out)?;
    let m = sidecar.moments;
    println!(
        "{} nodes, {} edges, <k> {:.3}, <k^2-k> {:.3}, phi {:.4}",
        sidecar.n_nodes, sidecar.n_edges, m.k_mean, m.k2k, m.phi
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let c = &cli.common;
    match &cli.command {
        Command::Simulate { config } => simulate(config, c),
        Command::Sweep { config } => sweep(config, c),
        Command::Validate { config } => validate(config, c),
        Command::Netgen { config } => netgen(config, c),
    }
}
