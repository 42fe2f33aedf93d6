//! JSON experiment configuration: schema, defaults, and resolution into
//! library values.
//!
//! Every field has a default, and the fully materialized config is embedded
//! in the run manifest so a run can be replayed byte-identically from the
//! manifest alone.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use netdyn::analysis::{ClusterSource, LaplacianVariant};
use netdyn::dynamics::{
    consensus_rhs, integrate_rk4, sample_curing_rates, sample_initial_sis, sis_rhs,
    ConsensusParams, SisParams,
};
use netdyn::graph::{self, SbmSpec};
use netdyn::predict::PipelineConfig;
use netdyn::{GraphF64, TrajectoryF64};

/// Derivation constant for the curing-rate child seed.
const DELTA_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// CLI error with the exit-code contract: 2 config, 3 numeric, 4 I/O.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Numeric(m) => write!(f, "numeric: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
        }
    }
}

impl From<netdyn::Error> for CliError {
    fn from(err: netdyn::Error) -> Self {
        use netdyn::Error as E;
        match err {
            E::Divergence { .. }
            | E::RankDeficient { .. }
            | E::Singular { .. }
            | E::NonFinite(_)
            | E::EmptyCluster { .. } => CliError::Numeric(err.to_string()),
            E::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Network source; optional so snapshot-only clustering can run from a
    /// trajectory file without any topology knowledge.
    pub graph: Option<GraphConfig>,
    pub dynamics: Option<DynamicsConfig>,
    /// Input trajectory CSV; when set, commands read it instead of
    /// simulating.
    pub trajectory: Option<PathBuf>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub surrogate: SurrogateSection,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub source: GraphSource,
    /// Multiplies every edge weight after construction.
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
}

fn default_weight_scale() -> f64 {
    1.0
}

fn default_block_sizes() -> Vec<usize> {
    vec![20, 20, 20]
}

fn default_p_intra() -> f64 {
    0.5
}

fn default_p_inter() -> f64 {
    0.05
}

fn default_edge_weight() -> f64 {
    0.02
}

fn default_directed() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    /// Stochastic block model; the defaults reproduce the stock three-block
    /// community benchmark.
    Sbm {
        #[serde(default = "default_block_sizes")]
        block_sizes: Vec<usize>,
        #[serde(default = "default_p_intra")]
        p_intra: f64,
        #[serde(default = "default_p_inter")]
        p_inter: f64,
        #[serde(default = "default_edge_weight")]
        edge_weight: f64,
        #[serde(default = "default_directed")]
        directed: bool,
        #[serde(default)]
        seed: u64,
    },
    BalancedTree {
        branching: usize,
        height: usize,
    },
    Path {
        n: usize,
    },
    Karate,
    Florentine,
    EdgeList {
        path: PathBuf,
        labels: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DynamicsConfig {
    Sis {
        #[serde(default)]
        delta: ValueSpec,
        #[serde(default)]
        x0: ValueSpec,
        #[serde(default)]
        seed: u64,
    },
    Consensus {
        #[serde(default)]
        x0: ValueSpec,
        #[serde(default)]
        seed: u64,
    },
}

impl DynamicsConfig {
    pub fn set_seed(&mut self, value: u64) {
        match self {
            DynamicsConfig::Sis { seed, .. } | DynamicsConfig::Consensus { seed, .. } => {
                *seed = value
            }
        }
    }

    pub fn is_sis(&self) -> bool {
        matches!(self, DynamicsConfig::Sis { .. })
    }
}

/// Either "sample from the seeded generator" or explicit per-node values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueSpec {
    #[default]
    Sample,
    Values {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub dt: f64,
    /// Snapshot count (columns), including the initial state.
    pub k: usize,
    pub t0: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        // 200 snapshots spanning [0, 10]
        Self { dt: 10.0 / 199.0, k: 200, t0: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub k: usize,
    pub seed: u64,
    pub sources: Vec<ClusterSource>,
    /// Laplacian flavor for the adjacency-side embedding.
    pub laplacian: LaplacianVariant,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            k: 4,
            seed: 0,
            sources: vec![ClusterSource::Adjacency, ClusterSource::Snapshot],
            laplacian: LaplacianVariant::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSection {
    pub obs_fraction: f64,
    /// Uniform penalty weight per node is `rho_scale * k_obs` unless `rho`
    /// overrides it outright.
    pub rho_scale: f64,
    pub rho: Option<f64>,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        Self { obs_fraction: 0.5, rho_scale: 1e-3, rho: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsConfig {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: vec![OutputFormat::Csv, OutputFormat::Json] }
    }
}

impl OutputsConfig {
    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }
}

/// Parses the config file; serde errors carry line/column anchors.
pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Applies `--out`, `--seed`, and `--format` on top of the parsed config.
pub fn apply_overrides(
    cfg: &mut ExperimentConfig,
    out: Option<&Path>,
    seed: Option<u64>,
    format: Option<&str>,
) {
    if let Some(dir) = out {
        cfg.outputs.dir = dir.to_path_buf();
    }
    if let Some(seed) = seed {
        if let Some(dynamics) = cfg.dynamics.as_mut() {
            dynamics.set_seed(seed);
        }
    }
    match format {
        Some("csv") => cfg.outputs.formats = vec![OutputFormat::Csv],
        Some("json") => cfg.outputs.formats = vec![OutputFormat::Json],
        _ => {}
    }
}

/// Builds the configured graph, applying the weight scale.
pub fn build_graph(cfg: &GraphConfig) -> CliResult<GraphF64> {
    let base = match &cfg.source {
        GraphSource::Sbm { block_sizes, p_intra, p_inter, edge_weight, directed, seed } => {
            graph::generate_sbm(&SbmSpec {
                block_sizes: block_sizes.clone(),
                p_intra: *p_intra,
                p_inter: *p_inter,
                edge_weight: *edge_weight,
                directed: *directed,
                seed: *seed,
            })?
        }
        GraphSource::BalancedTree { branching, height } => {
            graph::generate_balanced_tree(*branching, *height)?
        }
        GraphSource::Path { n } => graph::generate_path(*n)?,
        GraphSource::Karate => graph::karate_club(),
        GraphSource::Florentine => graph::florentine_families(),
        GraphSource::EdgeList { path, labels } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let g = graph::load_edge_list::<f64>(&text)?;
            match labels {
                None => g,
                Some(lp) => {
                    let ltext = std::fs::read_to_string(lp)
                        .map_err(|e| CliError::Io(format!("{}: {e}", lp.display())))?;
                    let names = graph::parse_labels(&ltext);
                    netdyn::graph::Graph::new(g.adjacency().clone(), g.directed(), Some(names))?
                }
            }
        }
    };
    if cfg.weight_scale == 1.0 {
        Ok(base)
    } else {
        Ok(base.scaled(cfg.weight_scale)?)
    }
}

/// Resolved dynamics, ready to integrate.
pub enum ResolvedDynamics {
    Sis { params: SisParams<f64>, x0: Array1<f64> },
    Consensus { params: ConsensusParams<f64>, x0: Array1<f64> },
}

/// Seeds actually used by a run, echoed into the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedSeeds {
    pub dynamics: u64,
    pub x0: Option<u64>,
    pub delta: Option<u64>,
}

fn resolve_values(
    spec: &ValueSpec,
    n: usize,
    what: &str,
    sample: impl Fn() -> Array1<f64>,
) -> CliResult<Array1<f64>> {
    match spec {
        ValueSpec::Sample => Ok(sample()),
        ValueSpec::Values { values } => {
            if values.len() != n {
                return Err(CliError::Config(format!(
                    "{what}: {} values for {n} nodes",
                    values.len()
                )));
            }
            Ok(Array1::from_vec(values.clone()))
        }
    }
}

/// Instantiates the dynamics on a graph. The initial state samples from the
/// dynamics seed directly; curing rates use the salted child seed.
pub fn build_dynamics(
    cfg: &DynamicsConfig,
    graph: GraphF64,
) -> CliResult<(ResolvedDynamics, ResolvedSeeds)> {
    let n = graph.n();
    match cfg {
        DynamicsConfig::Sis { delta, x0, seed } => {
            let x0_seed = *seed;
            let delta_seed = *seed ^ DELTA_SEED_SALT;
            let x0 = resolve_values(x0, n, "x0", || sample_initial_sis(n, x0_seed))?;
            let delta = resolve_values(delta, n, "delta", || sample_curing_rates(n, delta_seed))?;
            let params = SisParams::new(delta, graph)?;
            Ok((
                ResolvedDynamics::Sis { params, x0 },
                ResolvedSeeds { dynamics: *seed, x0: Some(x0_seed), delta: Some(delta_seed) },
            ))
        }
        DynamicsConfig::Consensus { x0, seed } => {
            let x0_seed = *seed;
            let x0 = resolve_values(x0, n, "x0", || sample_initial_sis(n, x0_seed))?;
            let params = ConsensusParams::new(graph)?;
            Ok((
                ResolvedDynamics::Consensus { params, x0 },
                ResolvedSeeds { dynamics: *seed, x0: Some(x0_seed), delta: None },
            ))
        }
    }
}

/// Resolves the SIS curing-rate vector without touching the graph section,
/// so surrogate fitting works from a bare trajectory file. Returns the
/// rates and the sampling seed when one was used.
pub fn resolve_sis_delta(
    cfg: &DynamicsConfig,
    n: usize,
) -> CliResult<(Array1<f64>, Option<u64>)> {
    match cfg {
        DynamicsConfig::Sis { delta, seed, .. } => {
            let delta_seed = *seed ^ DELTA_SEED_SALT;
            let values =
                resolve_values(delta, n, "delta", || sample_curing_rates(n, delta_seed))?;
            let used = matches!(delta, ValueSpec::Sample).then_some(delta_seed);
            Ok((values, used))
        }
        DynamicsConfig::Consensus { .. } => Err(CliError::Config(
            "the surrogate predictor needs SIS dynamics with known curing rates".into(),
        )),
    }
}

/// Integrates the resolved dynamics on the simulation grid. Returns the
/// trajectory and any advisory warnings.
pub fn simulate(
    dynamics: &ResolvedDynamics,
    sim: &SimulationConfig,
) -> CliResult<(TrajectoryF64, Vec<String>)> {
    if sim.k < 2 {
        return Err(CliError::Config(format!("simulation.k = {} must be at least 2", sim.k)));
    }
    let mut warnings = Vec::new();
    let traj = match dynamics {
        ResolvedDynamics::Sis { params, x0 } => {
            let bound = params.stable_dt_bound();
            if sim.dt > bound {
                warnings.push(format!(
                    "dt = {} exceeds the advisory stability bound {bound:.6}",
                    sim.dt
                ));
            }
            integrate_rk4(|x| sis_rhs(params, x).expect("validated dimensions"), x0, sim.dt, sim.k - 1)?
        }
        ResolvedDynamics::Consensus { params, x0 } => integrate_rk4(
            |x| consensus_rhs(params, x).expect("validated dimensions"),
            x0,
            sim.dt,
            sim.k - 1,
        )?,
    };
    Ok((traj.with_t0(sim.t0), warnings))
}
