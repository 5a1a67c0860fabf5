//! Run configuration, read from TOML. Every field has a default; an empty
//! file describes the circuit experiment with 500 samples per set and a
//! `4-400-400-200` network.
//!
//! ```toml
//! out = "runs/circuit"
//!
//! [system]
//! name = "circuit"
//!
//! [domain]                  # optional, defaults to the system's box
//! lower = [2e-9, 2e-9, 1e6, 1e8]
//! upper = [3e-9, 3e-9, 2e6, 2e8]
//!
//! [grid]                    # t0 and tf default to the system's time span
//! m = 200
//!
//! [tolerances]
//! rtol = 1e-4
//! atol = 1e-6
//!
//! [samples]
//! train = 500
//! validation = 500
//! test = 500
//! seed = 1
//! failure_policy = "abort"  # or "skip"
//!
//! [network]
//! hidden = [400, 400]
//! transfer = "purelin"      # tansig | hardlim | purelin
//! seed = 2
//!
//! [training]
//! method = "cg"             # cg | oss | gdx
//! max_epochs = 10000
//! patience = 6
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajnet::dataset::{FailurePolicy, Role};
use trajnet::neuralnet::{Architecture, TransferKind};
use trajnet::training::{Method, TrainConfig};
use trajnet::{Domain, Grid, Tolerances};

use crate::error::{CliError, Result};
use crate::registry::{DynSystem, Registry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory for datasets, models and reports.
    pub out: PathBuf,
    pub system: SystemConfig,
    pub domain: Option<DomainConfig>,
    pub grid: GridConfig,
    pub tolerances: Tolerances,
    pub samples: SamplesConfig,
    pub network: NetworkConfig,
    pub training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("trajnet-out"),
            system: SystemConfig::default(),
            domain: None,
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            samples: SamplesConfig::default(),
            network: NetworkConfig::default(),
            training: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { name: "circuit".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub t0: Option<f64>,
    pub tf: Option<f64>,
    pub m: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            t0: None,
            tf: None,
            m: Grid::DEFAULT_POINTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplesConfig {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
    pub failure_policy: FailurePolicy,
}

impl Default for SamplesConfig {
    fn default() -> Self {
        Self {
            train: 500,
            validation: 500,
            test: 500,
            seed: 1,
            failure_policy: FailurePolicy::Abort,
        }
    }
}

impl SamplesConfig {
    pub fn count(&self, role: Role) -> usize {
        match role {
            Role::Train => self.train,
            Role::Validation => self.validation,
            Role::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden layer widths; all hidden layers use `transfer`.
    pub hidden: Vec<usize>,
    pub transfer: TransferKind,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![400, 400],
            transfer: TransferKind::PureLin,
            seed: 2,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed_data: Option<u64>,
    pub seed_weights: Option<u64>,
    pub method: Option<Method>,
    pub transfer: Option<TransferKind>,
    pub out: Option<PathBuf>,
}

/// The system and numerical settings a config resolves to.
pub struct Resolved {
    pub system: DynSystem,
    pub domain: Domain,
    pub grid: Grid,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed_data {
            self.samples.seed = s;
        }
        if let Some(s) = o.seed_weights {
            self.network.seed = s;
        }
        if let Some(m) = o.method {
            self.training.method = m;
        }
        if let Some(t) = o.transfer {
            self.network.transfer = t;
        }
        if let Some(out) = &o.out {
            self.out.clone_from(out);
        }
    }

    pub fn resolve(&self, registry: &Registry) -> Result<Resolved> {
        let entry = registry.get(&self.system.name)?;
        let system = entry.build();
        let domain = match &self.domain {
            Some(d) => Domain::new(d.lower.clone(), d.upper.clone())?,
            None => entry.default_domain().clone(),
        };
        if domain.dim() != system.param_dim() {
            return Err(CliError::Config(format!(
                "domain has {} components but system `{}` takes {} parameters",
                domain.dim(),
                self.system.name,
                system.param_dim()
            )));
        }
        let (t0, tf) = system.time_span();
        let grid = Grid::new(self.grid.t0.unwrap_or(t0), self.grid.tf.unwrap_or(tf), self.grid.m)?;
        self.tolerances.validate()?;
        self.training.validate()?;
        Ok(Resolved {
            system,
            domain,
            grid,
            tolerances: self.tolerances,
        })
    }

    pub fn architecture(&self, q: usize, m: usize) -> Result<Architecture> {
        let mut sizes = Vec::with_capacity(self.network.hidden.len() + 2);
        sizes.push(q);
        sizes.extend(&self.network.hidden);
        sizes.push(m);
        Ok(Architecture::new(sizes, self.network.transfer)?)
    }

    pub fn dataset_path(&self, role: Role) -> PathBuf {
        self.out.join(format!("{}.bin", role.as_str()))
    }

    /// `<transfer>-<method>`, the stem shared by the model and its log.
    pub fn model_tag(&self) -> String {
        format!("{}-{}", self.network.transfer, self.training.method)
    }

    pub fn model_path(&self) -> PathBuf {
        self.out.join(format!("model-{}.bin", self.model_tag()))
    }
}
