//! Full-batch training with validation-based early stopping.
//!
//! Each epoch is one optimizer iteration on the whole training set, after
//! which the mean squared errors of the training, validation and (optional)
//! test sets are recorded. The weights with the lowest validation error seen
//! so far are kept and returned. The test set is only ever evaluated, never
//! used for a decision.

mod optim;

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::SampleSet;
use crate::neuralnet::{Batch, NetError, NetworkParams, Normalizer};
use crate::scalar::Real;

pub use optim::{
    line_search, step_cg, step_gdx, step_oss, Objective, OptimizerState, StepOutcome, ARMIJO_C1, INITIAL_STEP_LENGTH,
};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("sample sets do not match the network: {0}")]
    ConfigMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cg")]
    ConjugateGradient,
    #[serde(rename = "oss")]
    OneStepSecant,
    #[serde(rename = "gdx")]
    GradientDescentAdaptive,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::ConjugateGradient,
        Method::OneStepSecant,
        Method::GradientDescentAdaptive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ConjugateGradient => "cg",
            Method::OneStepSecant => "oss",
            Method::GradientDescentAdaptive => "gdx",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Method::ConjugateGradient => "conjugate gradient",
            Method::OneStepSecant => "one-step secant",
            Method::GradientDescentAdaptive => "gradient descent",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown training method '{s}' (expected cg, oss or gdx)"))
    }
}

/// Optimizer settings. The learning-rate fields only affect gradient descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    /// Iteration budget; 0 returns the initial weights.
    pub max_epochs: usize,
    /// Consecutive epochs with validation error above the best before stopping.
    pub patience: usize,
    pub min_gradient: f64,
    /// Smallest trial step length `alpha |d|` the line search may try.
    pub min_step: f64,
    pub momentum: f64,
    pub lr_initial: f64,
    pub lr_up: f64,
    pub lr_down: f64,
    pub err_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::ConjugateGradient,
            max_epochs: 10_000,
            patience: 6,
            min_gradient: 1e-7,
            min_step: 1e-12,
            momentum: 0.9,
            lr_initial: 0.01,
            lr_up: 1.05,
            lr_down: 0.7,
            err_ratio: 1.04,
        }
    }
}

impl TrainConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_max_epochs(mut self, n: usize) -> Self {
        self.max_epochs = n;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        for (name, v) in [
            ("min_gradient", self.min_gradient),
            ("min_step", self.min_step),
            ("lr_initial", self.lr_initial),
            ("lr_up", self.lr_up),
            ("lr_down", self.lr_down),
            ("err_ratio", self.err_ratio),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    ValidationStop,
    MinStep,
    MinGradient,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::ValidationStop => "validation_stop",
            StopReason::MinStep => "min_step",
            StopReason::MinGradient => "min_gradient",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Errors after one epoch (epoch 0 is the initial network).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse_train: f64,
    pub mse_valid: f64,
    pub mse_test: Option<f64>,
    /// Whether the optimizer moved the weights in this epoch.
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
}

impl TrainRecord {
    pub fn elapsed_epochs(&self) -> usize {
        self.epochs.len()
    }

    /// Record of the returned weights.
    pub fn best(&self) -> &EpochRecord {
        if self.best_epoch == 0 {
            &self.initial
        } else {
            &self.epochs[self.best_epoch - 1]
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &EpochRecord> {
        std::iter::once(&self.initial).chain(&self.epochs)
    }

    /// `epoch,mse_train,mse_valid,mse_test` rows starting with epoch 0, then a
    /// `# stop_reason=...,best_epoch=...` footer. A missing test error is an
    /// empty field.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "epoch,mse_train,mse_valid,mse_test")?;
        for r in self.all() {
            let test = r.mse_test.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.epoch, r.mse_train, r.mse_valid, test)?;
        }
        writeln!(w, "# stop_reason={},best_epoch={}", self.stop_reason, self.best_epoch)
    }
}

/// Validation-error bookkeeping for early stopping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    /// Consecutive epochs above `best`.
    pub fails: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, initial: f64) -> Self {
        Self {
            patience,
            best: initial,
            best_epoch: 0,
            fails: 0,
        }
    }

    /// Registers the validation error of `epoch`; returns true when training
    /// should stop. A new minimum resets the counter, a tie leaves it alone.
    pub fn update(&mut self, epoch: usize, valid: f64) -> bool {
        if valid < self.best {
            self.best = valid;
            self.best_epoch = epoch;
            self.fails = 0;
        } else if valid > self.best {
            self.fails += 1;
        }
        self.fails >= self.patience
    }

    pub fn improved_at(&self, epoch: usize) -> bool {
        self.best_epoch == epoch
    }
}

/// Outcome of replaying a validation history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    /// Index into the history of the best value so far.
    pub best_epoch: usize,
    /// Index at which the stop was signalled, if any.
    pub stop_epoch: Option<usize>,
}

/// Replays `valid[0..]` (entry 0 being the initial network) through
/// [`EarlyStopping`].
pub fn early_stop_check(valid: &[f64], patience: usize) -> StopDecision {
    assert!(!valid.is_empty(), "at least one epoch is required");
    let mut es = EarlyStopping::new(patience, valid[0]);
    for (epoch, &v) in valid.iter().enumerate().skip(1) {
        if es.update(epoch, v) {
            return StopDecision {
                stop: true,
                best_epoch: es.best_epoch,
                stop_epoch: Some(epoch),
            };
        }
    }
    StopDecision {
        stop: false,
        best_epoch: es.best_epoch,
        stop_epoch: None,
    }
}

/// Training, validation and optional test set.
#[derive(Clone, Copy, Debug)]
pub struct Sets<'a, T> {
    pub train: &'a SampleSet<T>,
    pub valid: &'a SampleSet<T>,
    pub test: Option<&'a SampleSet<T>>,
}

fn check_sets<T: Real>(net: &NetworkParams<T>, sets: &Sets<'_, T>) -> Result<(), TrainError> {
    let all = [Some(sets.train), Some(sets.valid), sets.test];
    for set in all.into_iter().flatten() {
        if set.q() != net.input_dim() || set.m() != net.output_dim() {
            return Err(TrainError::ConfigMismatch(format!(
                "{} set is {} x ({} -> {}) but the network maps {} -> {}",
                set.role,
                set.len(),
                set.q(),
                set.m(),
                net.input_dim(),
                net.output_dim()
            )));
        }
        if set.grid != sets.train.grid {
            return Err(TrainError::ConfigMismatch(format!(
                "{} set uses a different time grid",
                set.role
            )));
        }
    }
    for set in [sets.train, sets.valid] {
        if set.is_empty() {
            return Err(TrainError::ConfigMismatch(format!("{} set is empty", set.role)));
        }
    }
    Ok(())
}

/// Trains `net` and returns the weights with the lowest validation error.
pub fn train<T: Real>(
    net: NetworkParams<T>,
    norm: &Normalizer<T>,
    sets: &Sets<'_, T>,
    cfg: &TrainConfig,
) -> Result<(NetworkParams<T>, TrainRecord), TrainError> {
    train_with_progress(net, norm, sets, cfg, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_progress<T: Real>(
    mut net: NetworkParams<T>,
    norm: &Normalizer<T>,
    sets: &Sets<'_, T>,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(NetworkParams<T>, TrainRecord), TrainError> {
    cfg.validate()?;
    check_sets(&net, sets)?;
    let arch = net.arch().clone();
    let mut train_batch = Batch::new(&arch, norm, sets.train.params(), sets.train.targets())?;
    let mut valid_batch = Batch::new(&arch, norm, sets.valid.params(), sets.valid.targets())?;
    let mut test_batch = match sets.test.filter(|s| !s.is_empty()) {
        Some(s) => Some(Batch::new(&arch, norm, s.params(), s.targets())?),
        None => None,
    };

    let mut state = OptimizerState::new(&mut train_batch, net.as_slice().to_vec(), cfg);
    let mut record_epoch =
        |epoch: usize, accepted: bool, state: &OptimizerState<T>| -> Result<EpochRecord, TrainError> {
            let w = state.weights();
            let r = EpochRecord {
                epoch,
                mse_train: state.loss().as_f64(),
                mse_valid: valid_batch.loss(w).as_f64(),
                mse_test: test_batch.as_mut().map(|b| b.loss(w).as_f64()),
                accepted,
            };
            if !(r.mse_train.is_finite() && r.mse_valid.is_finite()) {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            Ok(r)
        };

    let initial = record_epoch(0, false, &state)?;
    progress(&initial);
    let mut stopper = EarlyStopping::new(cfg.patience, initial.mse_valid);
    let mut best_weights = state.weights().to_vec();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let outcome = match cfg.method {
            Method::ConjugateGradient => step_cg(&mut train_batch, &mut state, cfg),
            Method::OneStepSecant => step_oss(&mut train_batch, &mut state, cfg),
            Method::GradientDescentAdaptive => step_gdx(&mut train_batch, &mut state, cfg),
        };
        let accepted = match outcome {
            StepOutcome::MinStep => {
                stop_reason = StopReason::MinStep;
                break;
            }
            StepOutcome::MinGradient => {
                stop_reason = StopReason::MinGradient;
                break;
            }
            StepOutcome::Accepted => true,
            StepOutcome::Rejected => false,
        };
        let r = record_epoch(epoch, accepted, &state)?;
        progress(&r);
        epochs.push(r);
        let stop = stopper.update(epoch, r.mse_valid);
        if stopper.improved_at(epoch) {
            best_weights.copy_from_slice(state.weights());
        }
        if stop {
            stop_reason = StopReason::ValidationStop;
            break;
        }
    }

    net.set_weights(&best_weights);
    Ok((
        net,
        TrainRecord {
            initial,
            epochs,
            stop_reason,
            best_epoch: stopper.best_epoch,
        },
    ))
}
