//! Named systems the front-end can simulate.
//!
//! The built-in registry knows the voltage-doubler circuit. Other systems are
//! added in code: implement [`DynamicalSystem`] (or build an
//! [`FnSystem`](trajnet::dynsys::FnSystem)), register a factory together with
//! its default parameter box, and pass the registry to the command functions.
//!
//! ```
//! use trajnet::dynsys::FnSystem;
//! use trajnet::Domain;
//! use trajnet_cli::registry::Registry;
//!
//! let mut reg = Registry::builtin();
//! let domain = Domain::new(vec![0.5], vec![2.0]).unwrap();
//! reg.register("decay", domain, || {
//!     Box::new(
//!         FnSystem::new(1, (0.0, 1.0), |_t, x: &[f64], p: &[f64], out: &mut [f64]| {
//!             out[0] = -p[0] * x[0];
//!         })
//!         .with_param_dim(1)
//!         .with_initial_state(|_| vec![1.0])
//!         .with_name("decay"),
//!     )
//! });
//! assert!(reg.get("decay").is_ok());
//! ```

use std::collections::BTreeMap;

use trajnet::dynsys::{circuit_system, DynamicalSystem};
use trajnet::Domain;

use crate::error::{CliError, Result};

pub type DynSystem = Box<dyn DynamicalSystem<f64>>;
type Factory = Box<dyn Fn() -> DynSystem + Send + Sync>;

pub struct SystemEntry {
    factory: Factory,
    domain: Domain,
}

impl SystemEntry {
    pub fn build(&self) -> DynSystem {
        (self.factory)()
    }

    pub fn default_domain(&self) -> &Domain {
        &self.domain
    }
}

#[derive(Default)]
pub struct Registry {
    entries: BTreeMap<String, SystemEntry>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry with the built-in `circuit` system.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("circuit", Domain::circuit(), || Box::new(circuit_system::<f64>()));
        reg
    }

    /// Adds or replaces the system called `name`.
    pub fn register(
        &mut self,
        name: impl Into<String>,
        domain: Domain,
        factory: impl Fn() -> DynSystem + Send + Sync + 'static,
    ) {
        self.entries.insert(
            name.into(),
            SystemEntry {
                factory: Box::new(factory),
                domain,
            },
        );
    }

    pub fn get(&self, name: &str) -> Result<&SystemEntry> {
        self.entries.get(name).ok_or_else(|| CliError::UnknownSystem {
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}
