//! Adaptive BDF integration of `M(p) x' = f(t, x, p)` and sampling of the
//! quantity of interest on a uniform grid.

mod bdf;
mod dense;

use serde::{Deserialize, Serialize};

use crate::dynsys::{DynamicalSystem, DynsysError};
use crate::scalar::Real;

pub use bdf::{integrate, integrate_fixed};
pub use dense::{divided_difference, lagrange_derivative_weights, lagrange_weights, resample};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrationError {
    #[error("Newton iteration diverged at t = {t} (step {h}) after repeated step halving")]
    NewtonDivergence { t: f64, h: f64 },
    #[error("step size {h} fell below the minimum at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {max_steps} steps exhausted at t = {t}")]
    StepBudgetExceeded { max_steps: usize, t: f64 },
    #[error("initial values are inconsistent: algebraic row {row} has residual {residual}")]
    InconsistentInitialValues { row: usize, residual: f64 },
    #[error("grid time {t} lies outside the integrated interval [{start}, {end}]")]
    GridOutsidePath { t: f64, start: f64, end: f64 },
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("non-finite value in trajectory at grid index {index}")]
    NonFinite { index: usize },
    #[error(transparent)]
    System(#[from] DynsysError),
}

/// Local error control and step limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceSettings<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
    pub min_step: T,
}

impl<T: Real> Default for ToleranceSettings<T> {
    fn default() -> Self {
        Self {
            rtol: T::lit(1e-4),
            atol: T::lit(1e-6),
            max_steps: 200_000,
            min_step: T::lit(1e-14),
        }
    }
}

impl<T: Real> ToleranceSettings<T> {
    pub fn with_rtol(mut self, rtol: T) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn with_atol(mut self, atol: T) -> Self {
        self.atol = atol;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |what: &str| Err(IntegrationError::InvalidSettings(what.to_string()));
        if !(self.rtol > T::zero()) {
            return bad("rtol must be positive");
        }
        if !(self.atol > T::zero()) {
            return bad("atol must be positive");
        }
        if !(self.min_step > T::zero()) {
            return bad("min_step must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        Ok(())
    }
}

/// Uniform grid `t_l = t0 + l (tf - t0) / m` for `l = 1..=m`. The initial
/// time is not a grid point; the last point is exactly `tf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    t0: T,
    tf: T,
    m: usize,
}

impl<T: Real> TimeGrid<T> {
    pub const DEFAULT_POINTS: usize = 200;

    pub fn new(t0: T, tf: T, m: usize) -> Result<Self, IntegrationError> {
        if !(tf > t0) || !t0.is_finite() || !tf.is_finite() {
            return Err(IntegrationError::InvalidSettings(format!(
                "time grid needs t0 < tf, got [{t0}, {tf}]"
            )));
        }
        if m == 0 {
            return Err(IntegrationError::InvalidSettings("time grid needs m >= 1".into()));
        }
        Ok(Self { t0, tf, m })
    }

    /// Default grid of 200 points over the system's time span.
    pub fn for_system<S: DynamicalSystem<T> + ?Sized>(sys: &S) -> Self {
        let (t0, tf) = sys.time_span();
        Self::new(t0, tf, Self::DEFAULT_POINTS).expect("system time span is an interval")
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn tf(&self) -> T {
        self.tf
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dt(&self) -> T {
        (self.tf - self.t0) / T::lit(self.m as f64)
    }

    /// The `l`-th point, `1 <= l <= m`.
    pub fn point(&self, l: usize) -> T {
        debug_assert!(l >= 1 && l <= self.m);
        if l == self.m {
            self.tf
        } else {
            self.t0 + self.dt() * T::lit(l as f64)
        }
    }

    pub fn points(&self) -> Vec<T> {
        (1..=self.m).map(|l| self.point(l)).collect()
    }
}

/// Counters collected during one integration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub newton_iterations: usize,
    pub newton_failures: usize,
    pub jacobian_evaluations: usize,
    pub factorizations: usize,
}

/// Accepted steps of an adaptive solve: times, states and derivative
/// approximations on the solver's own non-uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionPath<T> {
    dim: usize,
    times: Vec<T>,
    states: Vec<T>,
    derivatives: Vec<T>,
    differential: Vec<bool>,
    pub stats: SolverStats,
}

impl<T: Real> SolutionPath<T> {
    pub(crate) fn new(dim: usize, differential: Vec<bool>) -> Self {
        Self {
            dim,
            times: Vec::new(),
            states: Vec::new(),
            derivatives: Vec::new(),
            differential,
            stats: SolverStats::default(),
        }
    }

    /// Builds a path from explicit records, mainly for tests and for
    /// resampling externally computed solutions. Every component is treated as
    /// differential unless `differential` says otherwise.
    pub fn from_records(
        dim: usize,
        times: Vec<T>,
        states: Vec<T>,
        derivatives: Vec<T>,
        differential: Vec<bool>,
    ) -> Self {
        assert_eq!(states.len(), times.len() * dim);
        assert_eq!(derivatives.len(), times.len() * dim);
        assert_eq!(differential.len(), dim);
        Self {
            dim,
            times,
            states,
            derivatives,
            differential,
            stats: SolverStats::default(),
        }
    }

    pub(crate) fn push(&mut self, t: T, x: &[T], xdot: &[T]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.derivatives.extend_from_slice(xdot);
    }

    pub(crate) fn set_derivative(&mut self, k: usize, xdot: &[T]) {
        let n = self.dim;
        self.derivatives[k * n..(k + 1) * n].copy_from_slice(xdot);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn time(&self, k: usize) -> T {
        self.times[k]
    }

    pub fn state(&self, k: usize) -> &[T] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn derivative(&self, k: usize) -> &[T] {
        &self.derivatives[k * self.dim..(k + 1) * self.dim]
    }

    /// Components that appear differentiated (nonzero mass-matrix column).
    pub fn differential(&self) -> &[bool] {
        &self.differential
    }

    pub fn last_time(&self) -> Option<T> {
        self.times.last().copied()
    }
}

/// Quantity of interest sampled on a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T>(Vec<T>);

impl<T: Real> Trajectory<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

/// The discretized parameter-to-trajectory map: integrate, then sample the
/// quantity of interest on `grid`.
pub fn theta<T: Real, S: DynamicalSystem<T> + ?Sized>(
    sys: &S,
    p: &[T],
    grid: &TimeGrid<T>,
    tol: &ToleranceSettings<T>,
) -> Result<Trajectory<T>, IntegrationError> {
    let path = integrate(sys, p, tol)?;
    resample(&path, sys, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_excludes_start_and_ends_at_tf() {
        let g = TimeGrid::<f64>::new(0.0, 0.5, 200).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 200);
        assert_eq!(pts[199], 0.5);
        assert!((pts[0] - 0.0025).abs() < 1e-15);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!(pts[0] > g.t0());
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, f64::NAN, 3).is_err());
    }

    #[test]
    fn tolerance_validation() {
        assert!(ToleranceSettings::<f64>::default().validate().is_ok());
        assert!(ToleranceSettings::<f64>::default().with_rtol(0.0).validate().is_err());
        assert!(ToleranceSettings::<f64>::default().with_atol(-1.0).validate().is_err());
    }
}
