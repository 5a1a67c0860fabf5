//! Full-batch optimizers over a flat parameter vector.

use crate::neuralnet::Batch;
use crate::scalar::Real;

use super::TrainConfig;

/// Sufficient-decrease constant of the line search.
pub const ARMIJO_C1: f64 = 1e-4;
/// Length of the first trial step when there is no previous step to scale from.
pub const INITIAL_STEP_LENGTH: f64 = 0.01;
const MAX_BACKTRACKS: usize = 60;
const MAX_EXPANSIONS: usize = 40;

/// A differentiable scalar function of a parameter vector.
pub trait Objective<T> {
    fn loss(&mut self, w: &[T]) -> T;
    /// Writes the gradient into `grad` and returns the loss.
    fn loss_and_gradient(&mut self, w: &[T], grad: &mut [T]) -> T;
}

impl<T: Real> Objective<T> for Batch<T> {
    fn loss(&mut self, w: &[T]) -> T {
        Batch::loss(self, w)
    }

    fn loss_and_gradient(&mut self, w: &[T], grad: &mut [T]) -> T {
        Batch::loss_and_gradient(self, w, grad)
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn moved<T: Real>(w: &[T], alpha: T, d: &[T], out: &mut [T]) {
    for ((o, &wi), &di) in out.iter_mut().zip(w).zip(d) {
        *o = wi + alpha * di;
    }
}

/// Result of one optimizer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// Weights moved.
    Accepted,
    /// A candidate was evaluated and discarded; weights are unchanged.
    Rejected,
    /// The line search could not find a decrease above the step floor.
    MinStep,
    /// The gradient norm is below the configured threshold.
    MinGradient,
}

/// Current iterate plus the history the three methods need.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    w: Vec<T>,
    loss: T,
    grad: Vec<T>,
    dir: Vec<T>,
    prev_grad: Vec<T>,
    step: Vec<T>,
    has_history: bool,
    prev_alpha: T,
    prev_slope: T,
    since_restart: usize,
    lr: T,
    scratch: Vec<T>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new<O: Objective<T> + ?Sized>(obj: &mut O, w: Vec<T>, cfg: &TrainConfig) -> Self {
        let n = w.len();
        let mut grad = vec![T::zero(); n];
        let loss = obj.loss_and_gradient(&w, &mut grad);
        Self {
            w,
            loss,
            grad,
            dir: vec![T::zero(); n],
            prev_grad: vec![T::zero(); n],
            step: vec![T::zero(); n],
            has_history: false,
            prev_alpha: T::zero(),
            prev_slope: T::zero(),
            since_restart: 0,
            lr: T::lit(cfg.lr_initial),
            scratch: vec![T::zero(); n],
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.w
    }

    pub fn loss(&self) -> T {
        self.loss
    }

    pub fn gradient(&self) -> &[T] {
        &self.grad
    }

    /// Search direction of the last line-search step, or the last update of
    /// gradient descent.
    pub fn direction(&self) -> &[T] {
        &self.dir
    }

    /// Current learning rate of gradient descent.
    pub fn learning_rate(&self) -> T {
        self.lr
    }

    fn small_gradient(&self, cfg: &TrainConfig) -> bool {
        !(norm(&self.grad).as_f64() >= cfg.min_gradient)
    }

    fn steepest_descent(&mut self) {
        for (d, &g) in self.dir.iter_mut().zip(&self.grad) {
            *d = -g;
        }
        self.since_restart = 0;
    }

    /// Initial trial step: keep the first-order change of the previous step.
    fn initial_alpha(&self, slope: T) -> T {
        if self.has_history && self.prev_alpha > T::zero() && slope < T::zero() {
            let a = self.prev_alpha * self.prev_slope / slope;
            if a.is_finite() && a > T::zero() {
                return a;
            }
        }
        T::lit(INITIAL_STEP_LENGTH) / norm(&self.dir)
    }

    /// Line search along `dir` and, on success, the move to the new point.
    fn search_and_move<O: Objective<T> + ?Sized>(&mut self, obj: &mut O, alpha0: T, cfg: &TrainConfig) -> StepOutcome {
        let slope = dot(&self.grad, &self.dir);
        let Some((alpha, _)) = line_search(
            obj,
            &self.w,
            self.loss,
            slope,
            &self.dir,
            alpha0,
            cfg,
            &mut self.scratch,
        ) else {
            return StepOutcome::MinStep;
        };
        for ((s, w), &d) in self.step.iter_mut().zip(self.w.iter_mut()).zip(&self.dir) {
            *s = alpha * d;
            *w += *s;
        }
        std::mem::swap(&mut self.prev_grad, &mut self.grad);
        self.loss = obj.loss_and_gradient(&self.w, &mut self.grad);
        self.prev_alpha = alpha;
        self.prev_slope = slope;
        self.has_history = true;
        self.since_restart += 1;
        StepOutcome::Accepted
    }
}

/// Backtracking line search with quadratic interpolation and expansion.
///
/// Returns the accepted step and its loss, or `None` once the trial step
/// `alpha |d|` drops below `cfg.min_step` without meeting the Armijo
/// condition `f(alpha) <= f0 + c1 alpha slope`.
///
/// When the first trial already satisfies the condition the step is doubled
/// while the loss keeps falling and the bracket is refined by one parabolic
/// fit. After backtracking, one fit through `f0`, `slope` and the accepted
/// point is tried instead. Either way the result is exact on quadratics.
#[allow(clippy::too_many_arguments)]
pub fn line_search<T: Real, O: Objective<T> + ?Sized>(
    obj: &mut O,
    w: &[T],
    f0: T,
    slope: T,
    d: &[T],
    alpha0: T,
    cfg: &TrainConfig,
    scratch: &mut [T],
) -> Option<(T, T)> {
    if !(slope < T::zero()) {
        return None;
    }
    let c1 = T::lit(ARMIJO_C1);
    let dnorm = norm(d);
    let min_step = T::lit(cfg.min_step);
    let half = T::lit(0.5);
    let armijo = |alpha: T, f: T| f.is_finite() && f <= f0 + c1 * alpha * slope;
    let mut eval = |alpha: T, scratch: &mut [T]| {
        moved(w, alpha, d, scratch);
        obj.loss(scratch)
    };

    let mut alpha = alpha0;
    let mut backtracked = false;
    let mut f = T::nan();
    for _ in 0..MAX_BACKTRACKS {
        if !(alpha * dnorm >= min_step) {
            return None;
        }
        f = eval(alpha, scratch);
        if armijo(alpha, f) {
            break;
        }
        backtracked = true;
        let next = if f.is_finite() {
            quadratic_minimizer(f0, slope, alpha, f).unwrap_or(alpha * half)
        } else {
            alpha * half
        };
        alpha = next.max(T::lit(0.1) * alpha).min(half * alpha);
    }
    if !armijo(alpha, f) {
        return None;
    }

    let mut best = (alpha, f);
    if backtracked {
        if let Some(v) = quadratic_minimizer(f0, slope, alpha, f).filter(|&v| v > T::zero() && v < alpha) {
            let fv = eval(v, scratch);
            if fv < f && armijo(v, fv) {
                best = (v, fv);
            }
        }
        return Some(best);
    }

    let (mut a0, mut fa0) = (T::zero(), f0);
    let (mut a, mut fa) = (alpha, f);
    for _ in 0..MAX_EXPANSIONS {
        let b = a + a;
        let fb = eval(b, scratch);
        if !(fb < fa) {
            best = (a, fa);
            if fb.is_finite() {
                if let Some(v) = parabola_vertex((a0, fa0), (a, fa), (b, fb)).filter(|&v| v > a0 && v < b && v != a) {
                    let fv = eval(v, scratch);
                    if fv < fa && armijo(v, fv) {
                        best = (v, fv);
                    }
                }
            }
            return Some(best);
        }
        (a0, fa0) = (a, fa);
        (a, fa) = (b, fb);
        best = (a, fa);
    }
    Some(best)
}

/// Minimizer of the parabola with value `f0` and slope `slope` at 0 and value
/// `f` at `alpha`.
fn quadratic_minimizer<T: Real>(f0: T, slope: T, alpha: T, f: T) -> Option<T> {
    let curvature = f - f0 - slope * alpha;
    if curvature > T::zero() {
        Some(-slope * alpha * alpha / (T::lit(2.0) * curvature)).filter(|v| v.is_finite())
    } else {
        None
    }
}

/// Vertex of the parabola through three points with the middle one lowest.
fn parabola_vertex<T: Real>((a, fa): (T, T), (b, fb): (T, T), (c, fc): (T, T)) -> Option<T> {
    let p = (b - a) * (fb - fc);
    let q = (b - c) * (fb - fa);
    let den = p - q;
    if den == T::zero() {
        return None;
    }
    let v = b - T::lit(0.5) * ((b - a) * p - (b - c) * q) / den;
    Some(v).filter(|v| v.is_finite())
}

/// Polak-Ribiere conjugate gradient (non-negative beta). The direction is
/// reset to steepest descent on the first iteration, every `n` iterations
/// (`n` = number of weights) and whenever it fails to be a descent direction.
pub fn step_cg<T: Real, O: Objective<T> + ?Sized>(
    obj: &mut O,
    st: &mut OptimizerState<T>,
    cfg: &TrainConfig,
) -> StepOutcome {
    if st.small_gradient(cfg) {
        return StepOutcome::MinGradient;
    }
    if !st.has_history || st.since_restart >= st.w.len() {
        st.steepest_descent();
    } else {
        let gg_prev = dot(&st.prev_grad, &st.prev_grad);
        let num: T = st.grad.iter().zip(&st.prev_grad).map(|(&g, &gp)| g * (g - gp)).sum();
        let beta = (num / gg_prev).max(T::zero());
        let beta = if beta.is_finite() { beta } else { T::zero() };
        for (d, &g) in st.dir.iter_mut().zip(&st.grad) {
            *d = -g + beta * *d;
        }
        if !(dot(&st.grad, &st.dir) < T::zero()) {
            st.steepest_descent();
        }
    }
    let alpha0 = st.initial_alpha(dot(&st.grad, &st.dir));
    st.search_and_move(obj, alpha0, cfg)
}

/// One-step secant (memoryless BFGS): `d = -g + A s + B y` with the last step
/// `s` and gradient change `y`, falling back to steepest descent when there is
/// no history, `s . y <= 0` or `d` is not a descent direction.
pub fn step_oss<T: Real, O: Objective<T> + ?Sized>(
    obj: &mut O,
    st: &mut OptimizerState<T>,
    cfg: &TrainConfig,
) -> StepOutcome {
    if st.small_gradient(cfg) {
        return StepOutcome::MinGradient;
    }
    let mut alpha0 = None;
    if st.has_history {
        // y = g - g_prev, kept in scratch
        for ((y, &g), &gp) in st.scratch.iter_mut().zip(&st.grad).zip(&st.prev_grad) {
            *y = g - gp;
        }
        let y = &st.scratch;
        let sy = dot(&st.step, y);
        if sy > T::zero() {
            let sg = dot(&st.step, &st.grad);
            let yg = dot(y, &st.grad);
            let yy = dot(y, y);
            let b = sg / sy;
            let a = -(T::one() + yy / sy) * b + yg / sy;
            for ((d, &g), (&s, &yi)) in st.dir.iter_mut().zip(&st.grad).zip(st.step.iter().zip(y)) {
                *d = -g + a * s + b * yi;
            }
            if dot(&st.grad, &st.dir) < T::zero() && st.dir.iter().all(|v| v.is_finite()) {
                alpha0 = Some(T::one());
            }
        }
    }
    if alpha0.is_none() {
        st.steepest_descent();
    }
    let alpha0 = alpha0.unwrap_or_else(|| st.initial_alpha(dot(&st.grad, &st.dir)));
    st.search_and_move(obj, alpha0, cfg)
}

/// Gradient descent with momentum and an adaptive learning rate.
///
/// The candidate `w + dw` with `dw = mu dw_prev - (1 - mu) lr g` is rejected
/// when its loss exceeds `err_ratio` times the current loss: the weights stay,
/// `lr` shrinks by `lr_down` and the momentum is cleared. Otherwise it is
/// accepted and `lr` grows by `lr_up` if the loss fell.
pub fn step_gdx<T: Real, O: Objective<T> + ?Sized>(
    obj: &mut O,
    st: &mut OptimizerState<T>,
    cfg: &TrainConfig,
) -> StepOutcome {
    if st.small_gradient(cfg) {
        return StepOutcome::MinGradient;
    }
    let mu = T::lit(cfg.momentum);
    let scale = (T::one() - mu) * st.lr;
    for ((dw, &prev), &g) in st.scratch.iter_mut().zip(&st.dir).zip(&st.grad) {
        *dw = mu * prev - scale * g;
    }
    let candidate: Vec<T> = st.w.iter().zip(&st.scratch).map(|(&w, &dw)| w + dw).collect();
    let mut grad = std::mem::take(&mut st.prev_grad);
    let f = obj.loss_and_gradient(&candidate, &mut grad);
    if !(f <= T::lit(cfg.err_ratio) * st.loss) {
        st.prev_grad = grad;
        st.lr *= T::lit(cfg.lr_down);
        st.dir.fill(T::zero());
        return StepOutcome::Rejected;
    }
    if f < st.loss {
        st.lr *= T::lit(cfg.lr_up);
    }
    std::mem::swap(&mut st.dir, &mut st.scratch);
    st.prev_grad = std::mem::replace(&mut st.grad, grad);
    st.w = candidate;
    st.loss = f;
    StepOutcome::Accepted
}
