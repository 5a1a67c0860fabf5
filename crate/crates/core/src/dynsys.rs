//! Parametric dynamical systems `M(p) x' = f(t, x, p)` with a scalar quantity
//! of interest `y = g(x)`, and the built-in voltage doubler circuit.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scalar::Real;

/// Number of physical parameters of the circuit: two capacitances, two resistances.
pub const CIRCUIT_PARAM_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynsysError {
    #[error("parameter {index} must be strictly positive, got {value}")]
    NonPositiveParameter { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter domain: {0}")]
    InvalidDomain(String),
    /// The diode exponent left the representable range, which signals a
    /// divergent Newton iterate rather than a physical state.
    #[error("diode exponent overflow at exponent argument {argument}")]
    ExponentOverflow { argument: f64 },
}

/// A point of the circuit parameter space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector<T> {
    /// capacitance [F]
    pub c1: T,
    /// capacitance [F]
    pub c2: T,
    /// resistance [Ohm]
    pub r1: T,
    /// resistance [Ohm]
    pub r2: T,
}

impl<T: Real> ParameterVector<T> {
    pub fn new(c1: T, c2: T, r1: T, r2: T) -> Result<Self, DynsysError> {
        Self::from_slice(&[c1, c2, r1, r2])
    }

    pub fn from_slice(values: &[T]) -> Result<Self, DynsysError> {
        if values.len() != CIRCUIT_PARAM_DIM {
            return Err(DynsysError::DimensionMismatch {
                expected: CIRCUIT_PARAM_DIM,
                found: values.len(),
            });
        }
        if let Some((index, v)) = values.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
            return Err(DynsysError::NonPositiveParameter {
                index,
                value: v.as_f64(),
            });
        }
        Ok(Self {
            c1: values[0],
            c2: values[1],
            r1: values[2],
            r2: values[3],
        })
    }

    pub fn to_array(self) -> [T; CIRCUIT_PARAM_DIM] {
        [self.c1, self.c2, self.r1, self.r2]
    }
}

/// Axis-aligned box of admissible parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> ParameterDomain<T> {
    /// Requires `lower <= upper` componentwise. Degenerate (flat) directions
    /// are allowed.
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, DynsysError> {
        if lower.len() != upper.len() {
            return Err(DynsysError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(DynsysError::InvalidDomain("zero-dimensional domain".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(DynsysError::InvalidDomain(format!(
                    "component {i}: bounds [{lo}, {hi}] are not an interval"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `C_j in [2e-9, 3e-9]`, `R_1 in [1e6, 2e6]`, `R_2 in [1e8, 2e8]`.
    pub fn circuit() -> Self {
        let l = [2e-9, 2e-9, 1e6, 1e8].map(T::lit).to_vec();
        let u = [3e-9, 3e-9, 2e6, 2e8].map(T::lit).to_vec();
        Self { lower: l, upper: u }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn midpoint(&self) -> Vec<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (l + u) / T::lit(2.0))
            .collect()
    }

    /// Closed-box membership.
    pub fn contains(&self, p: &[T]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v >= l && v <= u)
    }
}

impl<T: Real> Default for ParameterDomain<T> {
    fn default() -> Self {
        Self::circuit()
    }
}

/// Diode law and input source constants of the voltage doubler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitConstants<T> {
    /// Saturation coefficient of `F(u) = gamma (exp(delta u) - 1)`.
    pub gamma: T,
    pub delta: T,
    /// Input amplitude [V].
    pub amplitude: T,
    /// Input period [s].
    pub period: T,
}

impl<T: Real> Default for CircuitConstants<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(4.067e-8),
            delta: T::lit(5.634e-2),
            amplitude: T::lit(500.0),
            period: T::lit(0.1),
        }
    }
}

impl<T: Real> CircuitConstants<T> {
    fn exponent(&self, u: T) -> Result<T, DynsysError> {
        let arg = self.delta * u;
        if arg > T::max_value().ln() || arg.is_nan() {
            return Err(DynsysError::ExponentOverflow { argument: arg.as_f64() });
        }
        Ok(arg)
    }

    /// `F(u) = gamma (exp(delta u) - 1)`.
    pub fn diode_current(&self, u: T) -> Result<T, DynsysError> {
        // exp_m1 keeps F accurate around u = 0
        Ok(self.gamma * self.exponent(u)?.exp_m1())
    }

    /// `F'(u) = gamma delta exp(delta u)`.
    pub fn diode_conductance(&self, u: T) -> Result<T, DynsysError> {
        Ok(self.gamma * self.delta * self.exponent(u)?.exp())
    }

    /// `u_in(t) = A sin(2 pi t / T)`.
    pub fn input_voltage(&self, t: T) -> T {
        self.amplitude * (T::TAU() * t / self.period).sin()
    }
}

/// Diode current with the default constants.
pub fn diode_current<T: Real>(u: T) -> Result<T, DynsysError> {
    CircuitConstants::default().diode_current(u)
}

/// Input voltage with the default constants.
pub fn input_voltage<T: Real>(t: T) -> T {
    CircuitConstants::default().input_voltage(t)
}

/// A parametric IVP `M(p) x' = f(t, x, p)`, `x(t0) = x0(p)`, observed through
/// a scalar quantity of interest `g(x)`.
///
/// Implementations must be pure: the integrator evaluates them from several
/// workers at once. Systems other than the built-in circuit are plugged in by
/// implementing this trait (or by building an [`FnSystem`]).
pub trait DynamicalSystem<T: Real>: Send + Sync {
    /// State dimension `n`.
    fn dim(&self) -> usize;

    /// Parameter dimension `q`.
    fn param_dim(&self) -> usize;

    fn mass_matrix(&self, p: &[T]) -> Matrix<T>;

    fn rhs(&self, t: T, x: &[T], p: &[T], out: &mut [T]) -> Result<(), DynsysError>;

    /// `df/dx`. Defaults to central finite differences.
    fn jacobian(&self, t: T, x: &[T], p: &[T], out: &mut Matrix<T>) -> Result<(), DynsysError> {
        finite_difference_jacobian(self, t, x, p, out)
    }

    /// Quantity of interest `g(x)`; `x` has length `dim()`.
    fn qoi(&self, x: &[T]) -> T;

    fn initial_state(&self, p: &[T]) -> Vec<T>;

    fn time_span(&self) -> (T, T);

    fn name(&self) -> &str {
        "custom"
    }
}

/// `g(x)` with a length check.
pub fn qoi<T: Real, S: DynamicalSystem<T> + ?Sized>(sys: &S, x: &[T]) -> Result<T, DynsysError> {
    if x.len() != sys.dim() {
        return Err(DynsysError::DimensionMismatch {
            expected: sys.dim(),
            found: x.len(),
        });
    }
    Ok(sys.qoi(x))
}

/// Central differences with step `1e-6 * max(1, |x_j|)` per column.
pub fn finite_difference_jacobian<T: Real, S: DynamicalSystem<T> + ?Sized>(
    sys: &S,
    t: T,
    x: &[T],
    p: &[T],
    out: &mut Matrix<T>,
) -> Result<(), DynsysError> {
    let n = x.len();
    assert_eq!(out.shape(), (n, n));
    let mut xp = x.to_vec();
    let mut fp = vec![T::zero(); n];
    let mut fm = vec![T::zero(); n];
    for j in 0..n {
        let h = T::lit(1e-6) * x[j].abs().max(T::one());
        xp[j] = x[j] + h;
        sys.rhs(t, &xp, p, &mut fp)?;
        xp[j] = x[j] - h;
        sys.rhs(t, &xp, p, &mut fm)?;
        xp[j] = x[j];
        let inv = T::one() / (h + h);
        for i in 0..n {
            out[(i, j)] = (fp[i] - fm[i]) * inv;
        }
    }
    Ok(())
}

/// Voltage doubler with two diodes: three node voltages, the third equation
/// algebraic. Parameters are ordered `(C1, C2, R1, R2)`.
#[derive(Clone, Debug)]
pub struct VoltageDoubler<T> {
    pub constants: CircuitConstants<T>,
    pub t0: T,
    pub tf: T,
}

impl<T: Real> Default for VoltageDoubler<T> {
    fn default() -> Self {
        Self {
            constants: CircuitConstants::default(),
            t0: T::zero(),
            tf: T::lit(0.5),
        }
    }
}

/// The built-in reference system: voltage doubler on `[0, 0.5]`, zero initial
/// state, second node voltage as quantity of interest.
pub fn circuit_system<T: Real>() -> VoltageDoubler<T> {
    VoltageDoubler::default()
}

impl<T: Real> VoltageDoubler<T> {
    /// Residual of the algebraic (third) equation.
    pub fn algebraic_residual(&self, t: T, x: &[T], p: &[T]) -> Result<T, DynsysError> {
        let mut f = [T::zero(); 3];
        self.rhs(t, x, p, &mut f)?;
        Ok(f[2])
    }
}

impl<T: Real> DynamicalSystem<T> for VoltageDoubler<T> {
    fn dim(&self) -> usize {
        3
    }

    fn param_dim(&self) -> usize {
        CIRCUIT_PARAM_DIM
    }

    fn mass_matrix(&self, p: &[T]) -> Matrix<T> {
        Matrix::from_diagonal(&[p[0], p[1], T::zero()])
    }

    fn rhs(&self, t: T, x: &[T], p: &[T], out: &mut [T]) -> Result<(), DynsysError> {
        let (r1, r2) = (p[2], p[3]);
        let c = &self.constants;
        let through_r1 = -(x[1] + x[2] + c.input_voltage(t)) / r1;
        let d1 = c.diode_current(-(x[0] + x[2]))?;
        let d2 = c.diode_current(x[2])?;
        out[0] = -x[0] / r2 + d1;
        out[1] = through_r1;
        out[2] = through_r1 + d1 - d2;
        Ok(())
    }

    fn jacobian(&self, _t: T, x: &[T], p: &[T], out: &mut Matrix<T>) -> Result<(), DynsysError> {
        let (r1, r2) = (p[2], p[3]);
        let g1 = self.constants.diode_conductance(-(x[0] + x[2]))?;
        let g2 = self.constants.diode_conductance(x[2])?;
        let inv_r1 = T::one() / r1;
        let z = T::zero();
        let rows = [
            [-T::one() / r2 - g1, z, -g1],
            [z, -inv_r1, -inv_r1],
            [-g1, -inv_r1, -inv_r1 - g1 - g2],
        ];
        for (i, row) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(row);
        }
        Ok(())
    }

    fn qoi(&self, x: &[T]) -> T {
        x[1]
    }

    fn initial_state(&self, _p: &[T]) -> Vec<T> {
        vec![T::zero(); 3]
    }

    fn time_span(&self) -> (T, T) {
        (self.t0, self.tf)
    }

    fn name(&self) -> &str {
        "circuit"
    }
}

type MassFn<T> = dyn Fn(&[T]) -> Matrix<T> + Send + Sync;
type RhsFn<T> = dyn Fn(T, &[T], &[T], &mut [T]) + Send + Sync;
type JacFn<T> = dyn Fn(T, &[T], &[T], &mut Matrix<T>) + Send + Sync;
type QoiFn<T> = dyn Fn(&[T]) -> T + Send + Sync;
type InitFn<T> = dyn Fn(&[T]) -> Vec<T> + Send + Sync;

/// A system assembled from closures. Defaults: identity mass matrix, zero
/// initial state, first component as quantity of interest, no parameters.
pub struct FnSystem<T> {
    dim: usize,
    param_dim: usize,
    span: (T, T),
    mass: Box<MassFn<T>>,
    rhs: Box<RhsFn<T>>,
    jac: Option<Box<JacFn<T>>>,
    qoi: Box<QoiFn<T>>,
    init: Box<InitFn<T>>,
    name: String,
}

impl<T: Real> FnSystem<T> {
    pub fn new(dim: usize, span: (T, T), rhs: impl Fn(T, &[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        Self {
            dim,
            param_dim: 0,
            span,
            mass: Box::new(move |_| Matrix::identity(dim)),
            rhs: Box::new(rhs),
            jac: None,
            qoi: Box::new(|x| x[0]),
            init: Box::new(move |_| vec![T::zero(); dim]),
            name: "custom".into(),
        }
    }

    pub fn with_mass_matrix(mut self, f: impl Fn(&[T]) -> Matrix<T> + Send + Sync + 'static) -> Self {
        self.mass = Box::new(f);
        self
    }

    pub fn with_jacobian(mut self, f: impl Fn(T, &[T], &[T], &mut Matrix<T>) + Send + Sync + 'static) -> Self {
        self.jac = Some(Box::new(f));
        self
    }

    pub fn with_qoi(mut self, f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        self.qoi = Box::new(f);
        self
    }

    pub fn with_initial_state(mut self, f: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        self.init = Box::new(f);
        self
    }

    pub fn with_param_dim(mut self, q: usize) -> Self {
        self.param_dim = q;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl<T: Real> DynamicalSystem<T> for FnSystem<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn mass_matrix(&self, p: &[T]) -> Matrix<T> {
        (self.mass)(p)
    }

    fn rhs(&self, t: T, x: &[T], p: &[T], out: &mut [T]) -> Result<(), DynsysError> {
        (self.rhs)(t, x, p, out);
        Ok(())
    }

    fn jacobian(&self, t: T, x: &[T], p: &[T], out: &mut Matrix<T>) -> Result<(), DynsysError> {
        match &self.jac {
            Some(j) => {
                j(t, x, p, out);
                Ok(())
            }
            None => finite_difference_jacobian(self, t, x, p, out),
        }
    }

    fn qoi(&self, x: &[T]) -> T {
        (self.qoi)(x)
    }

    fn initial_state(&self, p: &[T]) -> Vec<T> {
        (self.init)(p)
    }

    fn time_span(&self) -> (T, T) {
        self.span
    }

    fn name(&self) -> &str {
        &self.name
    }
}
