//! Stochastic ensemble against the pairwise ODE on one generated network.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::complex::ComplexClosureModel;
use crate::intervention::{run_policy, InterventionPolicy};
use crate::model::{NetworkMoments, Rates};
use crate::network::{
    degree_histogram, empirical_moments, generate, Graph, NetworkFamily, NetworkSpec,
};
use crate::pgf::DegreePgf;
use crate::scenario::{
    EpiSpec, InitialSpec, IntegratorSpec, RunManifest, ScenarioError, ScenarioErrorKind,
};
use crate::stochastic::{ensemble_mean, run_trials, SimConfig, SimTrace};
use crate::system::SimpleClosureModel;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    #[serde(default = "default_id")]
    pub id: String,
    /// Seeds the network; trial seeds are derived from it.
    #[serde(default)]
    pub seed: u64,
    pub network: NetworkFamily,
    #[serde(default)]
    pub epi: EpiSpec,
    /// Link rates, fixed over the whole run.
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_grid")]
    pub grid_dt: f64,
    #[serde(default)]
    pub integrator: IntegratorSpec,
}

fn default_id() -> String {
    "validation".to_string()
}

fn default_trials() -> usize {
    100
}

fn default_t_max() -> f64 {
    300.0
}

fn default_grid() -> f64 {
    0.5
}

impl ValidationConfig {
    /// `N = 500`, `M = 125`, `lambda = 4` network with the small-network
    /// link rates.
    pub fn small_network(seed: u64) -> Self {
        Self {
            id: default_id(),
            seed,
            network: NetworkFamily::BipartiteProjection {
                n_nodes: 500,
                n_locations: 125,
                lambda: 4.0,
            },
            epi: EpiSpec::default(),
            rates: Rates {
                alpha: 2.3e-5,
                omega: 3.4e-5,
            },
            initial: InitialSpec::default(),
            trials: default_trials(),
            t_max: default_t_max(),
            grid_dt: default_grid(),
            integrator: IntegratorSpec::default(),
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = (self.t_max / self.grid_dt).round() as usize;
        (0..=n).map(|i| i as f64 * self.grid_dt).collect()
    }
}

/// Peak and final size of one curve on the common grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub peak_prevalence: f64,
    pub peak_time: f64,
    pub final_size: f64,
}

impl CurveSummary {
    fn of(grid: &[f64], i: &[f64], final_size: f64) -> Self {
        let (j, &peak) =
            i.iter().enumerate().fold(
                (0, &f64::NEG_INFINITY),
                |b, c| if c.1 > b.1 { c } else { b },
            );
        Self {
            peak_prevalence: peak,
            peak_time: grid[j],
            final_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub moments: NetworkMoments,
    pub beta: f64,
    pub trials: usize,
    pub simulation: CurveSummary,
    pub simple_closure: CurveSummary,
    pub complex_closure: CurveSummary,
    /// |ODE - simulation| / simulation for the simple closure.
    pub peak_rel_error: f64,
    pub final_rel_error: f64,
    pub peak_time_error: f64,
    /// |complex - simple| / simple final size.
    pub cross_model_rel_error: f64,
}

pub struct ValidationRun {
    pub graph: Graph,
    pub grid: Vec<f64>,
    pub traces: Vec<SimTrace>,
    pub mean: Vec<[f64; 4]>,
    pub simple: Trajectory,
    pub complex: Trajectory,
    pub summary: ValidationSummary,
}

fn whole(x: f64, what: &str) -> Result<usize, ScenarioErrorKind> {
    if x >= 0.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(ScenarioErrorKind::Config(format!(
            "stochastic runs need a whole number of {what} seeds, got {x}"
        )))
    }
}

fn ode_curves(traj: &Trajectory, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    grid.iter()
        .map(|&t| (traj.prevalence(t), traj.recovered(t)))
        .unzip()
}

/// Generates the network, runs the ensemble and both closures.
pub fn run_validation(
    cfg: &ValidationConfig,
    threads: Option<usize>,
) -> Result<ValidationRun, ScenarioError> {
    let err = |k: ScenarioErrorKind| ScenarioError::new(&cfg.id, k);
    if cfg.trials == 0 || !(cfg.grid_dt > 0.0) || !(cfg.t_max > 0.0) {
        return Err(err(ScenarioErrorKind::Config(
            "need trials >= 1, grid_dt > 0 and t_max > 0".into(),
        )));
    }
    let spec = NetworkSpec {
        family: cfg.network,
        seed: cfg.seed,
    };
    let graph = generate(&spec).map_err(|e| err(e.into()))?;
    let n = graph.n_nodes();
    let moments = empirical_moments(&graph);
    let epi = cfg.epi.resolve(&moments, n).map_err(err)?;
    let init = cfg.initial;
    let e0 = whole(init.exposed, "exposed").map_err(err)?;
    let i0 = whole(init.infectious, "infectious").map_err(err)?;
    if init.recovered != 0.0 {
        return Err(err(ScenarioErrorKind::Config(
            "stochastic runs start with no recovered nodes".into(),
        )));
    }

    let mut sim = SimConfig::new(&graph, epi, cfg.rates, e0, i0, cfg.seed);
    sim.t_max = cfg.t_max;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| err(ScenarioErrorKind::Config(e.to_string())))?;
    let traces = pool
        .install(|| run_trials(&sim, cfg.trials))
        .map_err(|e| err(ScenarioErrorKind::Config(e.to_string())))?;
    let grid = cfg.grid();
    let mean =
        ensemble_mean(&traces, &grid).map_err(|e| err(ScenarioErrorKind::Config(e.to_string())))?;
    let sim_final = traces
        .iter()
        .map(|t| t.counts_at(cfg.t_max)[3] as f64)
        .sum::<f64>()
        / traces.len() as f64;

    let mut opts = cfg.integrator.run_options(n, cfg.rates);
    opts.t_max = opts.t_max.min(cfg.t_max);
    let none = InterventionPolicy::none();
    let simple_model = SimpleClosureModel::new(epi);
    let y0 = simple_model.initial_state(init.exposed, init.infectious, 0.0, moments);
    let simple = run_policy(&simple_model, &y0, &none, &opts).map_err(|e| err(e.into()))?;
    let pgf = DegreePgf::new(&degree_histogram(&graph), n).map_err(|e| err(e.into()))?;
    let complex_model = ComplexClosureModel::new(epi, pgf, (n - e0 - i0) as f64);
    let y0 = complex_model.initial_state(init.exposed, init.infectious, 0.0, moments.phi);
    let complex = run_policy(&complex_model, &y0, &none, &opts).map_err(|e| err(e.into()))?;

    let sim_i: Vec<f64> = mean.iter().map(|c| c[2]).collect();
    let simulation = CurveSummary::of(&grid, &sim_i, sim_final);
    let (si, _) = ode_curves(&simple, &grid);
    let simple_summary = CurveSummary::of(&grid, &si, simple.final_size());
    let (ci, _) = ode_curves(&complex, &grid);
    let complex_summary = CurveSummary::of(&grid, &ci, complex.final_size());
    let summary = ValidationSummary {
        n_nodes: n,
        n_edges: graph.n_edges(),
        moments,
        beta: epi.beta,
        trials: cfg.trials,
        peak_rel_error: (simple_summary.peak_prevalence - simulation.peak_prevalence).abs()
            / simulation.peak_prevalence,
        final_rel_error: (simple_summary.final_size - simulation.final_size).abs()
            / simulation.final_size,
        peak_time_error: (simple_summary.peak_time - simulation.peak_time).abs(),
        cross_model_rel_error: (complex_summary.final_size - simple_summary.final_size).abs()
            / simple_summary.final_size,
        simulation,
        simple_closure: simple_summary,
        complex_closure: complex_summary,
    };
    Ok(ValidationRun {
        graph,
        grid,
        traces,
        mean,
        simple,
        complex,
        summary,
    })
}

/// Writes `trials.csv`, `ensemble.csv`, `summary.json` and `manifest.json`.
pub fn write_validation_outputs(
    cfg: &ValidationConfig,
    run: &ValidationRun,
    threads: usize,
    dir: &Path,
) -> Result<RunManifest, ScenarioError> {
    let err = |k: ScenarioErrorKind| ScenarioError::new(&cfg.id, k);
    let io = |e: std::io::Error| err(e.into());
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut manifest = RunManifest::new("validate", cfg, cfg.seed, threads);

    let mut w = csv::Writer::from_writer(BufWriter::new(
        File::create(dir.join("trials.csv")).map_err(io)?,
    ));
    w.write_record(["trial", "t", "S", "E", "I", "R"])
        .map_err(|e| err(e.into()))?;
    for (j, tr) in run.traces.iter().enumerate() {
        for &t in &run.grid {
            let c = tr.counts_at(t);
            w.write_record([
                j.to_string(),
                t.to_string(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
                c[3].to_string(),
            ])
            .map_err(|e| err(e.into()))?;
        }
    }
    w.flush().map_err(io)?;
    manifest.outputs.push("trials.csv".into());

    let mut w = csv::Writer::from_writer(BufWriter::new(
        File::create(dir.join("ensemble.csv")).map_err(io)?,
    ));
    w.write_record([
        "t",
        "S_mean",
        "E_mean",
        "I_mean",
        "R_mean",
        "I_simple",
        "R_simple",
        "I_complex",
        "R_complex",
    ])
    .map_err(|e| err(e.into()))?;
    let (si, sr) = ode_curves(&run.simple, &run.grid);
    let (ci, cr) = ode_curves(&run.complex, &run.grid);
    for (j, &t) in run.grid.iter().enumerate() {
        let m = run.mean[j];
        let row = [t, m[0], m[1], m[2], m[3], si[j], sr[j], ci[j], cr[j]];
        w.write_record(row.iter().map(f64::to_string))
            .map_err(|e| err(e.into()))?;
    }
    w.flush().map_err(io)?;
    manifest.outputs.push("ensemble.csv".into());

    let mut f = BufWriter::new(File::create(dir.join("summary.json")).map_err(io)?);
    serde_json::to_writer_pretty(&mut f, &run.summary).map_err(|e| err(e.into()))?;
    f.flush().map_err(io)?;
    manifest.outputs.push("summary.json".into());

    let mut f = BufWriter::new(File::create(dir.join("edges.txt")).map_err(io)?);
    run.graph.write_edge_list(&mut f).map_err(io)?;
    f.flush().map_err(io)?;
    manifest.outputs.push("edges.txt".into());

    manifest.write(dir).map_err(io)?;
    Ok(manifest)
}

/// `netgen` input: an explicit network, or a clustering fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetgenConfig {
    Fit { fit: FitRequest },
    Spec(NetworkSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FitRequest {
    SmallWorld {
        n_nodes: usize,
        ring_degree: usize,
        target_phi: f64,
        #[serde(default)]
        seed: u64,
    },
    PowerlawClustered {
        n_nodes: usize,
        edges_per_node: usize,
        target_phi: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl NetgenConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            NetgenConfig::Spec(s) => s.seed = seed,
            NetgenConfig::Fit {
                fit:
                    FitRequest::SmallWorld { seed: s, .. }
                    | FitRequest::PowerlawClustered { seed: s, .. },
            } => *s = seed,
        }
        self
    }

    /// Resolves a fit request into a concrete spec.
    pub fn resolve(&self) -> Result<NetworkSpec, crate::network::NetworkError> {
        use crate::network::{fit_powerlaw_clustered, fit_small_world};
        Ok(match *self {
            NetgenConfig::Spec(s) => s,
            NetgenConfig::Fit {
                fit:
                    FitRequest::SmallWorld {
                        n_nodes,
                        ring_degree,
                        target_phi,
                        seed,
                    },
            } => fit_small_world(n_nodes, ring_degree, target_phi, seed)?.0,
            NetgenConfig::Fit {
                fit:
                    FitRequest::PowerlawClustered {
                        n_nodes,
                        edges_per_node,
                        target_phi,
                        seed,
                    },
            } => fit_powerlaw_clustered(n_nodes, edges_per_node, target_phi, seed)?.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn netgen_config_forms() {
        let spec: NetgenConfig = serde_json::from_str(
            r#"{"family": "small-world", "n_nodes": 100, "ring_degree": 6, "rewire_prob": 0.1, "seed": 4}"#,
        )
        .unwrap();
        assert!(matches!(spec, NetgenConfig::Spec(_)));
        let fit: NetgenConfig = serde_json::from_str(
            r#"{"fit": {"family": "powerlaw-clustered", "n_nodes": 300, "edges_per_node": 3, "target_phi": 0.2}}"#,
        )
        .unwrap();
        let s = fit.with_seed(9).resolve().unwrap();
        assert_eq!(s.seed, 9);
        assert!(matches!(s.family, NetworkFamily::PowerlawClustered { .. }));
    }

    #[test]
    fn small_validation_writes_outputs() {
        let mut cfg = ValidationConfig::small_network(2);
        cfg.network = NetworkFamily::BipartiteProjection {
            n_nodes: 200,
            n_locations: 50,
            lambda: 3.0,
        };
        cfg.trials = 8;
        cfg.t_max = 150.0;
        cfg.grid_dt = 1.0;
        let run = run_validation(&cfg, Some(2)).unwrap();
        assert_eq!(run.traces.len(), 8);
        assert_eq!(run.grid.len(), 151);
        let again = run_validation(&cfg, Some(1)).unwrap();
        assert_eq!(run.summary, again.summary);

        let dir = tempfile::tempdir().unwrap();
        write_validation_outputs(&cfg, &run, 2, dir.path()).unwrap();
        let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(trials.lines().count(), 1 + 8 * 151);
        let ens = std::fs::read_to_string(dir.path().join("ensemble.csv")).unwrap();
        assert!(ens
            .starts_with("t,S_mean,E_mean,I_mean,R_mean,I_simple,R_simple,I_complex,R_complex\n"));
    }

    #[test]
    fn fractional_seeds_rejected() {
        let mut cfg = ValidationConfig::small_network(0);
        cfg.initial.exposed = 2.5;
        assert!(run_validation(&cfg, Some(1)).is_err());
    }
}
