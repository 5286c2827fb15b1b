//! Run configuration: built-in defaults, overridden by a JSON file, overridden
//! in turn by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agentization::{agentize, default_library, load_library, AgentAssignment, AgentizationError};
use crate::backend::{Backend, BackendConfig};
use crate::scheduler::{
    compute_schedule, execute, AggregationMode, ExecuteError, ExecuteOptions, RunTrace, Schedule, ScheduleError,
    DEFAULT_ROUNDS,
};
use crate::seed::derive_seed;
use crate::topology::{append_final_sink, from_dot, from_json, generate, reverse, Topology, TopologyError, TopologyKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Agentization(#[from] AgentizationError),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Execute(#[from] ExecuteError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kind: TopologyKind,
    pub n: usize,
    /// Root seed; topology, agentization and mock seeds are derived from it.
    pub seed: u64,
    /// Custom topology file (`.json` or `.dot`); overrides `kind`/`n`.
    pub topology_path: Option<PathBuf>,
    pub reverse: bool,
    /// Join several sinks into one fresh sink node.
    pub append_sink: bool,
    pub task: String,
    pub domain: String,
    pub library_path: Option<PathBuf>,
    pub rounds: u32,
    pub memory_control: bool,
    pub honor_approval: bool,
    pub workers: usize,
    pub aggregation: AggregationMode,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: TopologyKind::Chain,
            n: 4,
            seed: 0,
            topology_path: None,
            reverse: false,
            append_sink: true,
            task: String::new(),
            domain: "software".into(),
            library_path: None,
            rounds: DEFAULT_ROUNDS,
            memory_control: true,
            honor_approval: true,
            workers: 1,
            aggregation: AggregationMode::LeftFold,
            backend: BackendConfig::default(),
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(&read(path)?).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.task.trim().is_empty() {
            return Err(ConfigError::Invalid("task must not be empty".into()));
        }
        if self.rounds == 0 {
            return Err(ConfigError::Invalid("rounds must be positive".into()));
        }
        if self.topology_path.is_none() && self.n == 0 {
            return Err(ConfigError::Invalid("n must be at least 1".into()));
        }
        self.backend.check().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn topology_seed(&self) -> u64 {
        derive_seed(self.seed, "topology")
    }

    /// The network to run: loaded or generated, optionally reversed, and
    /// closed with a single sink when `append_sink` is set.
    pub fn topology(&self) -> Result<Topology, ConfigError> {
        let mut t = match &self.topology_path {
            Some(path) => {
                let text = read(path)?;
                if path.extension().is_some_and(|e| e == "dot") {
                    from_dot(&text)?
                } else {
                    from_json(&text)?
                }
            }
            None => generate(self.kind, self.n, self.topology_seed())?,
        };
        if self.reverse {
            t = reverse(&t);
        }
        if self.append_sink {
            t = append_final_sink(&t);
        }
        t.ensure_valid()?;
        Ok(t)
    }

    pub fn schedule(&self, t: &Topology) -> Result<Schedule, ConfigError> {
        Ok(compute_schedule(t)?.with_rounds_budget(self.rounds)?)
    }

    pub fn assignment(&self, t: &Topology) -> Result<AgentAssignment, ConfigError> {
        let library = match &self.library_path {
            Some(path) => load_library(path)?,
            None => default_library(&self.domain),
        };
        Ok(agentize(t, &library, derive_seed(self.seed, "agentization"))?)
    }

    /// Backend settings with the mock seed derived from the root seed.
    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig { mock_seed: derive_seed(self.seed, "backend"), ..self.backend.clone() }
    }

    pub fn execute_options(&self) -> ExecuteOptions {
        ExecuteOptions {
            task: self.task.clone(),
            memory_control: self.memory_control,
            honor_approval: self.honor_approval,
            workers: self.workers.max(1),
            aggregation: self.aggregation,
        }
    }

    /// Builds the network from this configuration and executes it.
    pub fn run(&self, backend: &dyn Backend) -> Result<(Topology, RunTrace), RunError> {
        self.check()?;
        let t = self.topology()?;
        let schedule = self.schedule(&t)?;
        let assignment = self.assignment(&t)?;
        let trace = execute(&schedule, &assignment, backend, &self.execute_options())?;
        Ok((t, trace))
    }
}
