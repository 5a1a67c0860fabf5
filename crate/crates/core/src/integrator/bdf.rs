//! Variable-step, variable-order (1-2) BDF for linearly implicit index-1 systems.
//!
//! Every step solves `M x'(x) - f(t, x) = 0`, where `x'(x) = a0 (x - x_n) + d`
//! is the derivative at the new time of the polynomial through the new point
//! and the last `k` accepted points, written relative to the newest state
//! `x_n` so that constant solutions stay exactly constant. The local error of
//! order `k` is estimated from the `(k+1)`-st divided difference over the new
//! point and `k+1` history points.

use crate::dynsys::{DynamicalSystem, DynsysError};
use crate::linalg::{Lu, Matrix};
use crate::scalar::Real;

use super::dense::{divided_difference, lagrange_derivative_weights, lagrange_weights};
use super::{IntegrationError, SolutionPath, SolverStats, ToleranceSettings};

const MAX_NEWTON_ITERS: usize = 7;
const NEWTON_TOL: f64 = 0.33;
const MAX_HALVINGS: usize = 3;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Step ratio bound for order 2; variable-step BDF2 is zero-stable below 1 + sqrt(2).
const MAX_RATIO_BDF2: f64 = 2.0;

/// Derivative of the BDF polynomial as an affine function of the new state.
struct BdfForm<T> {
    a0: T,
    base: Vec<T>,
    offset: Vec<T>,
}

impl<T: Real> BdfForm<T> {
    fn derivative(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.base)
            .zip(&self.offset)
            .map(|((&xi, &bi), &di)| self.a0 * (xi - bi) + di)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NewtonFailure {
    Diverged,
    Domain,
    Singular,
}

struct Stepper<'a, T: Real, S: ?Sized> {
    sys: &'a S,
    p: &'a [T],
    tol: ToleranceSettings<T>,
    n: usize,
    mass: Matrix<T>,
    jac: Matrix<T>,
    jac_version: u64,
    jac_fresh: bool,
    jac_stale: bool,
    lu: Option<((T, u64), Lu<T>)>,
    stats: SolverStats,
}

impl<'a, T: Real, S: DynamicalSystem<T> + ?Sized> Stepper<'a, T, S> {
    fn new(sys: &'a S, p: &'a [T], tol: ToleranceSettings<T>) -> Result<Self, IntegrationError> {
        tol.validate()?;
        if p.len() != sys.param_dim() {
            return Err(DynsysError::DimensionMismatch {
                expected: sys.param_dim(),
                found: p.len(),
            }
            .into());
        }
        let n = sys.dim();
        let mass = sys.mass_matrix(p);
        if mass.shape() != (n, n) {
            return Err(DynsysError::DimensionMismatch {
                expected: n,
                found: mass.rows(),
            }
            .into());
        }
        Ok(Self {
            sys,
            p,
            tol,
            n,
            mass,
            jac: Matrix::zeros(n, n),
            jac_version: 0,
            jac_fresh: false,
            jac_stale: true,
            lu: None,
            stats: SolverStats::default(),
        })
    }

    fn algebraic_rows(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.mass.row(i).iter().all(|&v| v == T::zero()))
            .collect()
    }

    fn check_consistency(&self, t0: T, x0: &[T]) -> Result<(), IntegrationError> {
        let mut f = vec![T::zero(); self.n];
        self.sys.rhs(t0, x0, self.p, &mut f)?;
        for row in self.algebraic_rows() {
            if !(f[row].abs() <= self.tol.atol) {
                return Err(IntegrationError::InconsistentInitialValues {
                    row,
                    residual: f[row].as_f64(),
                });
            }
        }
        Ok(())
    }

    fn weights(&self, x_new: &[T], x_old: &[T]) -> Vec<T> {
        x_new
            .iter()
            .zip(x_old)
            .map(|(a, b)| self.tol.rtol * a.abs().max(b.abs()) + self.tol.atol)
            .collect()
    }

    fn update_jacobian(&mut self, t: T, x: &[T]) -> Result<(), DynsysError> {
        self.sys.jacobian(t, x, self.p, &mut self.jac)?;
        self.jac_version += 1;
        self.jac_fresh = true;
        self.jac_stale = false;
        self.stats.jacobian_evaluations += 1;
        Ok(())
    }

    /// `out = M x'(x) - f(t, x)`
    fn residual(&self, t: T, x: &[T], form: &BdfForm<T>, out: &mut [T]) -> Result<(), DynsysError> {
        let mut f = vec![T::zero(); self.n];
        self.sys.rhs(t, x, self.p, &mut f)?;
        let mxdot = self.mass.mat_vec(&form.derivative(x));
        for i in 0..self.n {
            out[i] = mxdot[i] - f[i];
        }
        Ok(())
    }

    fn factor_iteration_matrix(&mut self, a0: T) -> Result<(), NewtonFailure> {
        let key = (a0, self.jac_version);
        if matches!(&self.lu, Some((k, _)) if *k == key) {
            return Ok(());
        }
        let n = self.n;
        let iter = Matrix::from_fn(n, n, |i, j| a0 * self.mass[(i, j)] - self.jac[(i, j)]);
        let lu = Lu::factor(iter).map_err(|_| NewtonFailure::Singular)?;
        self.stats.factorizations += 1;
        self.lu = Some((key, lu));
        Ok(())
    }

    /// Damped simplified Newton on the step equation, starting from `x_pred`.
    fn solve_implicit(
        &mut self,
        t_new: T,
        form: &BdfForm<T>,
        x_pred: &[T],
        x_old: &[T],
    ) -> Result<Vec<T>, NewtonFailure> {
        self.factor_iteration_matrix(form.a0)?;
        let n = self.n;
        let mut x = x_pred.to_vec();
        let mut g = vec![T::zero(); n];
        self.residual(t_new, &x, form, &mut g)
            .map_err(|_| NewtonFailure::Domain)?;
        let mut g_try = vec![T::zero(); n];
        let mut x_try = vec![T::zero(); n];
        let mut prev_norm: Option<T> = None;
        let tol = T::lit(NEWTON_TOL);
        for iter in 0..MAX_NEWTON_ITERS {
            self.stats.newton_iterations += 1;
            let lu = &self.lu.as_ref().expect("factored above").1;
            let dx: Vec<T> = lu.solve(&g).into_iter().map(|v| -v).collect();
            let w = self.weights(&x, x_old);
            // halve the update while the right-hand side rejects the iterate
            let mut lambda = T::one();
            let mut accepted = false;
            for _ in 0..5 {
                for i in 0..n {
                    x_try[i] = x[i] + lambda * dx[i];
                }
                if self.residual(t_new, &x_try, form, &mut g_try).is_ok() {
                    accepted = true;
                    break;
                }
                lambda /= T::lit(2.0);
            }
            if !accepted {
                return Err(NewtonFailure::Domain);
            }
            let norm = dx
                .iter()
                .zip(&w)
                .fold(T::zero(), |m, (d, wi)| m.max((lambda * *d).abs() / *wi));
            if !norm.is_finite() {
                return Err(NewtonFailure::Diverged);
            }
            std::mem::swap(&mut x, &mut x_try);
            std::mem::swap(&mut g, &mut g_try);
            let converged = match prev_norm {
                None => norm <= tol * T::lit(0.1),
                Some(prev) => {
                    let rate = norm / prev;
                    if rate > T::lit(0.9) {
                        return Err(NewtonFailure::Diverged);
                    }
                    rate / (T::one() - rate) * norm <= tol || norm <= tol * T::lit(0.1)
                }
            };
            if converged {
                if iter >= 3 {
                    self.jac_stale = true;
                }
                return Ok(x);
            }
            prev_norm = Some(norm);
        }
        Err(NewtonFailure::Diverged)
    }

    /// BDF step from the newest `k` points of `path` to `t_new`. Returns the
    /// new state and its BDF derivative.
    fn bdf_step(&mut self, path: &SolutionPath<T>, order: usize, t_new: T) -> Result<(Vec<T>, Vec<T>), NewtonFailure> {
        let last = path.len() - 1;
        let n = self.n;
        let k = order.min(path.len());
        let mut nodes = vec![t_new];
        nodes.extend((0..k).map(|j| path.time(last - j)));
        let w = lagrange_derivative_weights(&nodes, t_new);
        let base = path.state(last).to_vec();
        // the weights sum to zero, so x_n drops out of the older terms
        let mut offset = vec![T::zero(); n];
        for (j, wj) in w.iter().enumerate().skip(2) {
            for ((oi, &xi), &bi) in offset.iter_mut().zip(path.state(last + 1 - j)).zip(&base) {
                *oi += *wj * (xi - bi);
            }
        }
        let form = BdfForm { a0: w[0], base, offset };
        // extrapolate through k + 1 history points when available
        let npred = (k + 1).min(path.len());
        let pred_nodes: Vec<T> = (0..npred).map(|j| path.time(last - j)).collect();
        let pw = lagrange_weights(&pred_nodes, t_new);
        let mut pred = form.base.clone();
        for (j, wj) in pw.iter().enumerate().skip(1) {
            for ((pi, &xi), &bi) in pred.iter_mut().zip(path.state(last - j)).zip(&form.base) {
                *pi += *wj * (xi - bi);
            }
        }
        let x = self.solve_implicit(t_new, &form, &pred, &form.base)?;
        let xdot = form.derivative(&x);
        Ok((x, xdot))
    }

    /// Weighted max-norm of the order-`k` local error estimate of the candidate
    /// `x_new` at `t_new`; needs `k + 1` history points.
    fn error_norm(&self, path: &SolutionPath<T>, k: usize, t_new: T, x_new: &[T]) -> Option<T> {
        if path.len() < k + 1 {
            return None;
        }
        let last = path.len() - 1;
        let mut nodes = vec![t_new];
        nodes.extend((0..=k).map(|j| path.time(last - j)));
        let a0 = lagrange_derivative_weights(&nodes[..=k], t_new)[0];
        let span: T = nodes[1..=k].iter().fold(T::one(), |acc, &tj| acc * (t_new - tj));
        let scale = span / a0;
        let w = self.weights(x_new, path.state(last));
        let mut vals = vec![T::zero(); k + 2];
        let mut err = T::zero();
        for i in 0..self.n {
            vals[0] = x_new[i];
            for j in 0..=k {
                vals[j + 1] = path.state(last - j)[i];
            }
            let lte = scale * divided_difference(&nodes, &vals);
            err = err.max(lte.abs() / w[i]);
        }
        Some(err)
    }

    fn growth(err: T, order: usize) -> T {
        if err <= T::zero() {
            return T::lit(MAX_FACTOR);
        }
        T::lit(SAFETY) * err.powf(-T::one() / T::lit((order + 1) as f64))
    }

    /// One backward Euler step with constant predictor, used by the start-up.
    fn euler_step(&mut self, t: T, x: &[T], h: T) -> Result<Vec<T>, NewtonFailure> {
        let form = BdfForm {
            a0: T::one() / h,
            base: x.to_vec(),
            offset: vec![T::zero(); self.n],
        };
        self.solve_implicit(t + h, &form, x, x)
    }

    /// Start-up: compares one Euler step of size `h` with two of size `h/2`,
    /// accepts the pair and fills in derivatives of the first three points.
    /// Returns the step size proposed for the next step.
    fn startup(&mut self, path: &mut SolutionPath<T>, mut h: T, tf: T) -> Result<T, IntegrationError> {
        let t0 = path.time(0);
        let x0 = path.state(0).to_vec();
        let two = T::lit(2.0);
        let mut halvings = 0;
        loop {
            if tf - t0 < h {
                h = tf - t0;
            }
            if h < self.tol.min_step {
                return Err(IntegrationError::StepUnderflow {
                    t: t0.as_f64(),
                    h: h.as_f64(),
                });
            }
            let half = h / two;
            let attempt = self.euler_step(t0, &x0, h).and_then(|full| {
                let xh = self.euler_step(t0, &x0, half)?;
                let x1 = self.euler_step(t0 + half, &xh, half)?;
                Ok((full, xh, x1))
            });
            let (full, xh, x1) = match attempt {
                Ok(v) => v,
                Err(_) => {
                    self.stats.newton_failures += 1;
                    if !self.jac_fresh {
                        self.update_jacobian(t0, &x0)?;
                        continue;
                    }
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        return Err(IntegrationError::NewtonDivergence {
                            t: t0.as_f64(),
                            h: h.as_f64(),
                        });
                    }
                    h = half;
                    continue;
                }
            };
            let w = self.weights(&x1, &x0);
            let err = full
                .iter()
                .zip(&x1)
                .zip(&w)
                .fold(T::zero(), |m, ((a, b), wi)| m.max((*a - *b).abs() / *wi));
            if err > T::one() {
                self.stats.rejected_steps += 1;
                h *= Self::growth(err, 1).max(T::lit(MIN_FACTOR));
                continue;
            }
            let t1 = if h == tf - t0 { tf } else { t0 + h };
            let nodes = [t0, t0 + half, t1];
            let states = [&x0[..], &xh[..], &x1[..]];
            let mut derivs = Vec::with_capacity(3);
            for &s in &nodes {
                let dw = lagrange_derivative_weights(&nodes, s);
                let d: Vec<T> = (0..self.n)
                    .map(|i| (0..3).map(|j| dw[j] * states[j][i]).sum())
                    .collect();
                derivs.push(d);
            }
            path.set_derivative(0, &derivs[0]);
            path.push(t0 + half, &xh, &derivs[1]);
            path.push(t1, &x1, &derivs[2]);
            self.stats.accepted_steps += 2;
            self.jac_fresh = false;
            let fac = Self::growth(err, 1).min(two).max(T::lit(MIN_FACTOR));
            return Ok(half * fac);
        }
    }
}

/// Integrates the system from `x0(p)` over its time span with adaptive step
/// size and order control.
///
/// The initial state must satisfy the algebraic equations (rows of `M(p)` that
/// are identically zero) to within `atol`.
pub fn integrate<T: Real, S: DynamicalSystem<T> + ?Sized>(
    sys: &S,
    p: &[T],
    tol: &ToleranceSettings<T>,
) -> Result<SolutionPath<T>, IntegrationError> {
    let mut st = Stepper::new(sys, p, *tol)?;
    let n = st.n;
    let (t0, tf) = sys.time_span();
    if !(tf > t0) {
        return Err(IntegrationError::InvalidSettings("empty time span".into()));
    }
    let x0 = sys.initial_state(p);
    if x0.len() != n {
        return Err(DynsysError::DimensionMismatch {
            expected: n,
            found: x0.len(),
        }
        .into());
    }
    st.check_consistency(t0, &x0)?;

    let mut path = SolutionPath::new(n, st.mass.nonzero_columns());
    path.push(t0, &x0, &vec![T::zero(); n]);
    st.update_jacobian(t0, &x0)?;

    let h0 = (tf - t0) * T::lit(1e-3) * tol.rtol.sqrt();
    let mut h = st.startup(&mut path, h0.max(tol.min_step), tf)?;
    let mut order = 2;
    let mut halvings = 0;
    let mut rejected_in_row = 0;

    while path.last_time().expect("path is non-empty") < tf {
        if st.stats.accepted_steps >= tol.max_steps {
            return Err(IntegrationError::StepBudgetExceeded {
                max_steps: tol.max_steps,
                t: path.last_time().unwrap_or(t0).as_f64(),
            });
        }
        let last = path.len() - 1;
        let t = path.time(last);
        let remaining = tf - t;
        let mut step = h;
        if t + step * T::lit(1.1) >= tf {
            step = remaining;
        }
        if step < tol.min_step {
            return Err(IntegrationError::StepUnderflow {
                t: t.as_f64(),
                h: step.as_f64(),
            });
        }
        let t_new = if step == remaining { tf } else { t + step };
        if st.jac_stale {
            let x = path.state(last).to_vec();
            st.update_jacobian(t, &x)?;
        }

        let (x_new, xdot) = match st.bdf_step(&path, order, t_new) {
            Ok(v) => v,
            Err(_) => {
                st.stats.newton_failures += 1;
                let x = path.state(last).to_vec();
                if !st.jac_fresh {
                    st.update_jacobian(t, &x)?;
                    continue;
                }
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(IntegrationError::NewtonDivergence {
                        t: t.as_f64(),
                        h: step.as_f64(),
                    });
                }
                h = step / T::lit(2.0);
                continue;
            }
        };
        halvings = 0;

        let k = order.min(path.len() - 1);
        let err = st
            .error_norm(&path, k, t_new, &x_new)
            .expect("start-up leaves enough history");
        if !(err <= T::one()) {
            st.stats.rejected_steps += 1;
            rejected_in_row += 1;
            let fac = if err.is_finite() {
                Stepper::<T, S>::growth(err, k)
                    .max(T::lit(MIN_FACTOR))
                    .min(T::lit(SAFETY))
            } else {
                T::lit(MIN_FACTOR)
            };
            h = step * fac;
            if rejected_in_row >= 3 {
                order = 1;
            }
            continue;
        }

        // candidate orders for the next step, judged on the accepted point
        let err1 = st.error_norm(&path, 1, t_new, &x_new).unwrap_or(err);
        let err2 = st.error_norm(&path, 2, t_new, &x_new);
        let fac1 = Stepper::<T, S>::growth(err1, 1);
        let (next_order, mut fac) = match err2 {
            Some(e2) if Stepper::<T, S>::growth(e2, 2) >= fac1 => (2, Stepper::<T, S>::growth(e2, 2)),
            _ => (1, fac1),
        };
        fac = fac.min(T::lit(MAX_FACTOR)).max(T::lit(MIN_FACTOR));
        if next_order == 2 {
            fac = fac.min(T::lit(MAX_RATIO_BDF2));
        }
        if rejected_in_row > 0 {
            fac = fac.min(T::one());
        }
        rejected_in_row = 0;

        path.push(t_new, &x_new, &xdot);
        st.stats.accepted_steps += 1;
        st.jac_fresh = false;
        order = next_order;
        h = step * fac;
    }
    path.stats = st.stats;
    Ok(path)
}

/// Fixed-step BDF of the given order (1 or 2) with `steps` equal steps over the
/// system's time span. Order 2 starts with one backward Euler step. No error
/// control; used for convergence studies.
pub fn integrate_fixed<T: Real, S: DynamicalSystem<T> + ?Sized>(
    sys: &S,
    p: &[T],
    steps: usize,
    order: usize,
    tol: &ToleranceSettings<T>,
) -> Result<SolutionPath<T>, IntegrationError> {
    if !(1..=2).contains(&order) || steps == 0 {
        return Err(IntegrationError::InvalidSettings(format!(
            "fixed-step BDF needs order 1 or 2 and at least one step, got order {order}, {steps} steps"
        )));
    }
    let mut st = Stepper::new(sys, p, *tol)?;
    let n = st.n;
    let (t0, tf) = sys.time_span();
    let x0 = sys.initial_state(p);
    if x0.len() != n {
        return Err(DynsysError::DimensionMismatch {
            expected: n,
            found: x0.len(),
        }
        .into());
    }
    st.check_consistency(t0, &x0)?;
    let h = (tf - t0) / T::lit(steps as f64);
    let mut path = SolutionPath::new(n, st.mass.nonzero_columns());
    path.push(t0, &x0, &vec![T::zero(); n]);
    for s in 1..=steps {
        let last = path.len() - 1;
        let t = path.time(last);
        let t_new = if s == steps { tf } else { t0 + h * T::lit(s as f64) };
        let x = path.state(last).to_vec();
        st.update_jacobian(t, &x)?;
        let (x_new, xdot) =
            st.bdf_step(&path, order.min(s), t_new)
                .map_err(|_| IntegrationError::NewtonDivergence {
                    t: t.as_f64(),
                    h: h.as_f64(),
                })?;
        path.push(t_new, &x_new, &xdot);
        st.stats.accepted_steps += 1;
    }
    path.stats = st.stats;
    Ok(path)
}
