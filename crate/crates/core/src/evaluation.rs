//! Relative trajectory errors of a surrogate and their statistics.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::{Role, SampleSet};
use crate::linalg::Matrix;
use crate::neuralnet::{forward_batch, NetError, NetworkParams, Normalizer};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("zero reference value at grid index {index}{}", sample.map(|s| format!(" of sample {s}")).unwrap_or_default())]
    ZeroDenominator { sample: Option<usize>, index: usize },
    #[error("length mismatch: prediction has {pred} entries, reference has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("empty sample set")]
    EmptySet,
    #[error(transparent)]
    Net(#[from] NetError),
}

/// `E = (tf - t0) / m * sum_l |pred_l - truth_l| / |truth_l|`, a discrete L1
/// norm in time of the pointwise relative error.
pub fn l1_relative_error<T: Real>(pred: &[T], truth: &[T], t0: T, tf: T) -> Result<T, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut sum = T::zero();
    for (index, (&p, &y)) in pred.iter().zip(truth).enumerate() {
        if y == T::zero() {
            return Err(EvalError::ZeroDenominator { sample: None, index });
        }
        sum += (p - y).abs() / y.abs();
    }
    Ok((tf - t0) / T::lit(truth.len() as f64) * sum)
}

/// `sum_l |traj_l - traj_{l-1}|`.
pub fn total_variation<T: Real>(traj: &[T]) -> T {
    traj.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Mean over rows of [`total_variation`].
pub fn mean_total_variation<T: Real>(trajs: &Matrix<T>) -> f64 {
    if trajs.rows() == 0 {
        return 0.0;
    }
    trajs.row_iter().map(|r| total_variation(r).as_f64()).sum::<f64>() / trajs.rows() as f64
}

/// Mean and population standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-sample errors of one sample set and their summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub role: Role,
    pub errors: Vec<f64>,
    /// Smallest `|y(t_l)|` of each reference trajectory; small values inflate
    /// the relative error.
    pub min_abs_y: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    /// Mean squared error in target units.
    pub mse: f64,
}

impl ErrorReport {
    pub fn from_errors(role: Role, errors: Vec<f64>, min_abs_y: Vec<f64>, mse: f64) -> Self {
        let (mean, std_dev) = mean_and_std(&errors);
        Self {
            role,
            errors,
            min_abs_y,
            mean,
            std_dev,
            mse,
        }
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Errors of precomputed predictions (`k x m`, one row per sample) against a set.
pub fn report_from_predictions<T: Real>(pred: &Matrix<T>, set: &SampleSet<T>) -> Result<ErrorReport, EvalError> {
    if set.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let truth = set.targets();
    if pred.shape() != truth.shape() {
        return Err(EvalError::LengthMismatch {
            pred: pred.rows() * pred.cols(),
            truth: truth.rows() * truth.cols(),
        });
    }
    let (t0, tf) = (set.grid.t0(), set.grid.tf());
    let mut errors = Vec::with_capacity(set.len());
    let mut min_abs = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let e = l1_relative_error(pred.row(i), truth.row(i), t0, tf).map_err(|e| match e {
            EvalError::ZeroDenominator { index, .. } => EvalError::ZeroDenominator { sample: Some(i), index },
            other => other,
        })?;
        errors.push(e.as_f64());
        min_abs.push(truth.row(i).iter().fold(f64::INFINITY, |m, v| m.min(v.abs().as_f64())));
    }
    let sum: T = pred
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(&p, &y)| (p - y) * (p - y))
        .sum();
    let mse = sum * (T::one() / T::lit((truth.rows() * truth.cols()) as f64));
    Ok(ErrorReport::from_errors(set.role, errors, min_abs, mse.as_f64()))
}

/// Evaluates the network on every sample of `set`.
pub fn error_stats<T: Real>(
    net: &NetworkParams<T>,
    norm: &Normalizer<T>,
    set: &SampleSet<T>,
) -> Result<ErrorReport, EvalError> {
    if set.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let pred = forward_batch(net, norm, set.params())?;
    report_from_predictions(&pred, set)
}

fn role_label(role: Role) -> &'static str {
    match role {
        Role::Train => "training set",
        Role::Validation => "validation set",
        Role::Test => "test set",
    }
}

/// Side-by-side table of mean and standard deviation of the errors: one
/// column per model, one row per sample set, mean block first.
pub fn format_table(columns: &[(&str, &[ErrorReport])]) -> String {
    let roles: Vec<Role> = Role::ALL
        .into_iter()
        .filter(|r| columns.iter().any(|(_, reps)| reps.iter().any(|x| x.role == *r)))
        .collect();
    let width = columns.iter().map(|(name, _)| name.len()).max().unwrap_or(0).max(8) + 2;
    let mut out = String::new();
    let _ = write!(out, "{:<9}{:<16}", "", "");
    for (name, _) in columns {
        let _ = write!(out, "{name:>width$}");
    }
    out.push('\n');
    let rule = "-".repeat(25 + width * columns.len());
    out.push_str(&rule);
    out.push('\n');
    for (block, pick) in [("mean", 0usize), ("st.dev.", 1)] {
        for (i, role) in roles.iter().enumerate() {
            let label = if i == 0 { block } else { "" };
            let _ = write!(out, "{label:<9}{:<16}", role_label(*role));
            for (_, reps) in columns {
                match reps.iter().find(|r| r.role == *role) {
                    Some(r) => {
                        let v = if pick == 0 { r.mean } else { r.std_dev };
                        let _ = write!(out, "{v:>width$.3}");
                    }
                    None => {
                        let _ = write!(out, "{:>width$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out.push_str(&rule);
        out.push('\n');
    }
    out
}

/// `set,index,error,min_abs_y`, one line per sample of every report.
pub fn write_errors_csv<W: Write>(w: &mut W, reports: &[ErrorReport]) -> io::Result<()> {
    writeln!(w, "set,index,error,min_abs_y")?;
    for r in reports {
        for (i, (e, y)) in r.errors.iter().zip(&r.min_abs_y).enumerate() {
            writeln!(w, "{},{},{},{}", r.role, i, e, y)?;
        }
    }
    Ok(())
}
