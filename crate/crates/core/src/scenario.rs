//! Scenario configuration and the baseline-plus-intervention run.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::complex::ComplexClosureModel;
use crate::intervention::{run_policy, InterventionPolicy, RunError, RunOptions};
use crate::metrics::{evaluate, MetricError, MetricReport};
use crate::model::{beta_from_r0, EpiParams, ModelError, NetworkMoments, Rates};
use crate::network::{
    analytic_degree_distribution, analytic_moments, degree_histogram, empirical_moments, generate,
    NetworkError, NetworkFamily, NetworkSpec, PRNG_NAME,
};
use crate::ode::OdeOptions;
use crate::pgf::{DegreePgf, PgfError};
use crate::system::{EpidemicModel, SimpleClosureModel};
use crate::trajectory::Trajectory;

/// Version string stamped on every output row.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum ScenarioErrorKind {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pgf(#[from] PgfError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, thiserror::Error)]
#[error("scenario {id}: {kind}")]
pub struct ScenarioError {
    pub id: String,
    pub kind: ScenarioErrorKind,
}

impl ScenarioError {
    pub fn new(id: &str, kind: impl Into<ScenarioErrorKind>) -> Self {
        Self {
            id: id.to_string(),
            kind: kind.into(),
        }
    }
}

/// Where the contact structure comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContactSpec {
    /// Realize a network (seeded by the scenario seed) and use its moments.
    Generated { network: NetworkFamily },
    /// Closed-form moments of the projected bipartite network.
    AnalyticBipartite {
        n_nodes: usize,
        n_locations: usize,
        lambda: f64,
    },
    /// Moments given directly.
    Moments {
        n_nodes: usize,
        k_mean: f64,
        k2k: f64,
        phi: f64,
    },
}

impl ContactSpec {
    pub fn n_nodes(&self) -> usize {
        match self {
            ContactSpec::Generated { network } => NetworkSpec {
                family: *network,
                seed: 0,
            }
            .n_nodes(),
            ContactSpec::AnalyticBipartite { n_nodes, .. }
            | ContactSpec::Moments { n_nodes, .. } => *n_nodes,
        }
    }
}

/// Epidemiological rates; transmission is given either as `r0` or `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_eta() -> f64 {
    0.2
}

fn default_gamma() -> f64 {
    0.1
}

impl Default for EpiSpec {
    fn default() -> Self {
        Self {
            r0: Some(2.4),
            beta: None,
            eta: default_eta(),
            gamma: default_gamma(),
        }
    }
}

impl EpiSpec {
    pub fn resolve(
        &self,
        moments: &NetworkMoments,
        n_nodes: usize,
    ) -> Result<EpiParams, ScenarioErrorKind> {
        let beta = match (self.r0, self.beta) {
            (Some(r0), None) => beta_from_r0(r0, moments, self.gamma)?,
            (None, Some(b)) => b,
            _ => {
                return Err(ScenarioErrorKind::Config(
                    "epi needs exactly one of r0 and beta".into(),
                ))
            }
        };
        Ok(EpiParams::new(beta, self.eta, self.gamma, n_nodes)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    SimpleClosure,
    ComplexClosure,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SimpleClosure => "simple-closure",
            ModelKind::ComplexClosure => "complex-closure",
        }
    }
}

/// Seeded persons at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    #[serde(default = "ten")]
    pub exposed: f64,
    #[serde(default = "ten")]
    pub infectious: f64,
    #[serde(default)]
    pub recovered: f64,
}

fn ten() -> f64 {
    10.0
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            exposed: 10.0,
            infectious: 10.0,
            recovered: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    /// Absolute tolerance in persons; `1e-10 N` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_end")]
    pub end_threshold: f64,
}

fn default_rtol() -> f64 {
    1e-8
}

fn default_t_max() -> f64 {
    crate::intervention::DEFAULT_T_MAX
}

fn default_end() -> f64 {
    1.0
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            rtol: default_rtol(),
            atol: None,
            t_max: default_t_max(),
            end_threshold: default_end(),
        }
    }
}

impl IntegratorSpec {
    pub fn run_options(&self, n_nodes: usize, background: Rates) -> RunOptions {
        RunOptions {
            ode: OdeOptions::with_tolerances(
                self.rtol,
                self.atol.unwrap_or(1e-10 * n_nodes as f64),
            ),
            t_max: self.t_max,
            end_threshold: self.end_threshold,
            background,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Sampling step of trajectory CSVs (days).
    #[serde(default = "default_dt")]
    pub trajectory_dt: f64,
}

fn default_dt() -> f64 {
    0.1
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            trajectory_dt: default_dt(),
        }
    }
}

/// One scenario: a network, an epidemic, a model and a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_id")]
    pub id: String,
    /// Seed for any generated network.
    #[serde(default)]
    pub seed: u64,
    pub contact: ContactSpec,
    #[serde(default)]
    pub epi: EpiSpec,
    #[serde(default)]
    pub model: ModelKind,
    /// Link rates in force outside intervention phases.
    #[serde(default)]
    pub background: Rates,
    #[serde(default)]
    pub policy: InterventionPolicy,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_id() -> String {
    "scenario".to_string()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl ScenarioConfig {
    /// Scenario on the large bipartite network: the
    /// analytic bipartite moments with `N = 10^4`, `M = 2500`, `lambda = 4`.
    pub fn baseline_network(policy: InterventionPolicy) -> Self {
        Self {
            id: default_id(),
            seed: 0,
            contact: ContactSpec::AnalyticBipartite {
                n_nodes: 10_000,
                n_locations: 2_500,
                lambda: 4.0,
            },
            epi: EpiSpec::default(),
            model: ModelKind::SimpleClosure,
            background: Rates::STATIC,
            policy,
            initial: InitialSpec::default(),
            integrator: IntegratorSpec::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    /// Hash of everything that determines the baseline run.
    pub fn baseline_key(&self) -> String {
        let key = serde_json::json!({
            "seed": self.seed,
            "contact": self.contact,
            "epi": self.epi,
            "model": self.model,
            "background": self.background,
            "initial": self.initial,
            "integrator": self.integrator,
        });
        sha256_hex(key.to_string().as_bytes())
    }
}

/// A scenario resolved into a model and an initial state.
pub struct Prepared {
    pub model: Box<dyn EpidemicModel + Send>,
    pub y0: Vec<f64>,
    pub opts: RunOptions,
    pub moments: NetworkMoments,
    pub epi: EpiParams,
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared, ScenarioError> {
    let err = |k: ScenarioErrorKind| ScenarioError::new(&cfg.id, k);
    let n = cfg.contact.n_nodes();
    let (moments, degrees): (NetworkMoments, Option<Vec<f64>>) = match &cfg.contact {
        ContactSpec::Generated { network } => {
            let g = generate(&NetworkSpec {
                family: *network,
                seed: cfg.seed,
            })
            .map_err(|e| err(e.into()))?;
            (empirical_moments(&g), Some(degree_histogram(&g)))
        }
        ContactSpec::AnalyticBipartite {
            n_nodes,
            n_locations,
            lambda,
        } => {
            if *n_locations == 0 || !(*lambda > 0.0) {
                return Err(err(ScenarioErrorKind::Config(
                    "analytic bipartite contact needs locations and lambda > 0".into(),
                )));
            }
            let degrees = (cfg.model == ModelKind::ComplexClosure)
                .then(|| analytic_degree_distribution(*n_nodes, *n_locations, *lambda));
            (analytic_moments(*n_nodes, *n_locations, *lambda), degrees)
        }
        ContactSpec::Moments {
            k_mean, k2k, phi, ..
        } => (
            NetworkMoments::new(*k_mean, *k2k, *phi).map_err(|e| err(e.into()))?,
            None,
        ),
    };
    let epi = cfg.epi.resolve(&moments, n).map_err(err)?;
    let init = cfg.initial;
    if init.exposed < 0.0
        || init.infectious < 0.0
        || init.recovered < 0.0
        || init.exposed + init.infectious + init.recovered > n as f64
    {
        return Err(err(ScenarioErrorKind::Config(format!(
            "initial condition {init:?} does not fit N = {n}"
        ))));
    }
    let (model, y0): (Box<dyn EpidemicModel + Send>, Vec<f64>) = match cfg.model {
        ModelKind::SimpleClosure => {
            let m = SimpleClosureModel::new(epi);
            let y0 = m.initial_state(init.exposed, init.infectious, init.recovered, moments);
            (Box::new(m), y0)
        }
        ModelKind::ComplexClosure => {
            let Some(degrees) = degrees else {
                return Err(err(ScenarioErrorKind::Config(
                    "the complex closure needs a degree distribution; use a generated or analytic-bipartite contact"
                        .into(),
                )));
            };
            let pgf = DegreePgf::new(&degrees, n).map_err(|e| err(e.into()))?;
            let pool = n as f64 - init.exposed - init.infectious - init.recovered;
            let m = ComplexClosureModel::new(epi, pgf, pool);
            let y0 = m.initial_state(init.exposed, init.infectious, init.recovered, moments.phi);
            (Box::new(m), y0)
        }
    };
    Ok(Prepared {
        model,
        y0,
        opts: cfg.integrator.run_options(n, cfg.background),
        moments,
        epi,
    })
}

/// Baseline trajectories keyed by [`ScenarioConfig::baseline_key`].
#[derive(Default)]
pub struct BaselineCache {
    inner: Mutex<HashMap<String, Arc<Trajectory>>>,
}

impl BaselineCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_run(
        &self,
        cfg: &ScenarioConfig,
        prepared: &Prepared,
    ) -> Result<Arc<Trajectory>, ScenarioError> {
        let key = cfg.baseline_key();
        if let Some(t) = self.inner.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(run_baseline(cfg, prepared)?);
        self.inner
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| Arc::clone(&t));
        Ok(t)
    }
}

pub fn run_baseline(
    cfg: &ScenarioConfig,
    prepared: &Prepared,
) -> Result<Trajectory, ScenarioError> {
    run_policy(
        prepared.model.as_ref(),
        &prepared.y0,
        &InterventionPolicy::none(),
        &prepared.opts,
    )
    .map_err(|e| ScenarioError::new(&cfg.id, e))
}

pub struct ScenarioResult {
    pub trajectory: Trajectory,
    pub baseline: Arc<Trajectory>,
    pub report: MetricReport,
}

/// Runs the intervention against a (possibly cached) baseline.
pub fn run_prepared(
    cfg: &ScenarioConfig,
    prepared: &Prepared,
    cache: &BaselineCache,
) -> Result<ScenarioResult, ScenarioError> {
    let err = |k: ScenarioErrorKind| ScenarioError::new(&cfg.id, k);
    let baseline = cache.get_or_run(cfg, prepared)?;
    let trajectory = run_policy(
        prepared.model.as_ref(),
        &prepared.y0,
        &cfg.policy,
        &prepared.opts,
    )
    .map_err(|e| err(e.into()))?;
    let report = evaluate(&trajectory, baseline.final_size()).map_err(|e| err(e.into()))?;
    Ok(ScenarioResult {
        trajectory,
        baseline,
        report,
    })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(Prepared, ScenarioResult), ScenarioError> {
    let prepared = prepare(cfg)?;
    let result = run_prepared(cfg, &prepared, &BaselineCache::new())?;
    Ok((prepared, result))
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One metrics CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub scenario_id: String,
    pub model: String,
    pub scheme: String,
    pub q: f64,
    pub p: f64,
    pub l_i: f64,
    pub l_h: f64,
    pub l_r: f64,
    pub r_inf_baseline: String,
    pub r_inf: String,
    pub rcfs: String,
    pub ciat: String,
    pub aiat: String,
    pub aiat_from_recovered: String,
    pub classification: String,
    pub n_maxima: String,
    pub n_inflections: String,
    pub n_intervals: String,
    pub triggered: String,
    pub converged: String,
    pub status: String,
    pub error: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl MetricRow {
    fn skeleton(cfg: &ScenarioConfig) -> Self {
        let pol = &cfg.policy;
        let scheme = serde_json::to_value(pol.scheme)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Self {
            scenario_id: cfg.id.clone(),
            model: cfg.model.as_str().to_string(),
            scheme,
            q: pol.q,
            p: pol.p,
            l_i: pol.l_i,
            l_h: pol.l_h,
            l_r: pol.l_r,
            r_inf_baseline: String::new(),
            r_inf: String::new(),
            rcfs: String::new(),
            ciat: String::new(),
            aiat: String::new(),
            aiat_from_recovered: String::new(),
            classification: String::new(),
            n_maxima: String::new(),
            n_inflections: String::new(),
            n_intervals: String::new(),
            triggered: String::new(),
            converged: String::new(),
            status: String::new(),
            error: String::new(),
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            version: CODE_VERSION.to_string(),
        }
    }

    pub fn success(cfg: &ScenarioConfig, res: &ScenarioResult) -> Self {
        let r = &res.report;
        Self {
            r_inf_baseline: r.r_inf_baseline.to_string(),
            r_inf: r.r_inf_intervention.to_string(),
            rcfs: r.rcfs.to_string(),
            ciat: r.ciat.to_string(),
            aiat: opt_str(r.aiat),
            aiat_from_recovered: opt_str(r.aiat_from_recovered),
            classification: r.classification.as_str().to_string(),
            n_maxima: r.n_maxima.to_string(),
            n_inflections: r.n_inflections.to_string(),
            n_intervals: r.intervals.len().to_string(),
            triggered: res.trajectory.triggered.to_string(),
            converged: (res.trajectory.converged() && res.baseline.converged()).to_string(),
            status: "ok".to_string(),
            ..Self::skeleton(cfg)
        }
    }

    pub fn failure(cfg: &ScenarioConfig, e: &ScenarioError) -> Self {
        Self {
            status: "error".to_string(),
            error: e.kind.to_string(),
            ..Self::skeleton(cfg)
        }
    }
}

pub fn write_rows<W: std::io::Write>(rows: &[MetricRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Run provenance written next to the CSV outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub prng: String,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64, threads: usize) -> Self {
        let text = serde_json::to_string(config).expect("config serializes");
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: sha256_hex(text.as_bytes()),
            seed,
            prng: PRNG_NAME.to_string(),
            threads,
            outputs: Vec::new(),
            config: serde_json::from_str(&text).expect("round trip"),
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(path)
    }
}

fn create(dir: &Path, name: &str) -> std::io::Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let f = File::create(&path)?;
    Ok((path, BufWriter::new(f)))
}

/// Writes `trajectory.csv`, `baseline.csv`, `phases.csv`, `metrics.csv`
/// and `manifest.json` into `dir`.
pub fn write_scenario_outputs(
    cfg: &ScenarioConfig,
    prepared: &Prepared,
    result: &ScenarioResult,
    dir: &Path,
) -> Result<RunManifest, ScenarioError> {
    let err = |k: ScenarioErrorKind| ScenarioError::new(&cfg.id, k);
    std::fs::create_dir_all(dir).map_err(|e| err(e.into()))?;
    let mut manifest = RunManifest::new("simulate", cfg, cfg.seed, 1);
    let dt = cfg.output.trajectory_dt;
    let model: &dyn EpidemicModel = prepared.model.as_ref();

    let mut emit = |name: &str,
                    write: &dyn Fn(BufWriter<File>) -> Result<(), ScenarioErrorKind>|
     -> Result<(), ScenarioError> {
        let (path, w) = create(dir, name).map_err(|e| err(e.into()))?;
        write(w).map_err(err)?;
        manifest
            .outputs
            .push(path.file_name().unwrap().to_string_lossy().into_owned());
        Ok(())
    };
    let tr = &result.trajectory;
    emit("trajectory.csv", &|w| {
        Ok(tr.write_csv(model, &tr.sample_times(dt), w)?)
    })?;
    let base = result.baseline.as_ref();
    emit("baseline.csv", &|w| {
        Ok(base.write_csv(model, &base.sample_times(dt), w)?)
    })?;
    emit("phases.csv", &|w| Ok(tr.phases.write_csv(w)?))?;
    emit("events.csv", &|w| {
        let mut out = csv::Writer::from_writer(w);
        for e in &tr.events {
            out.serialize(e)?;
        }
        out.flush()?;
        Ok(())
    })?;
    let row = MetricRow::success(cfg, result);
    emit("metrics.csv", &|w| {
        Ok(write_rows(std::slice::from_ref(&row), w)?)
    })?;
    manifest.write(dir).map_err(|e| err(e.into()))?;
    Ok(manifest)
}
