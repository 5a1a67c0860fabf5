//! Feedforward networks `Psi = T_J o rho o T_{J-1} o ... o rho o T_1` with
//! affine layers `T_j(z) = A_j z + b_j`, a componentwise transfer `rho` after
//! every hidden layer and a purely affine output layer.
//!
//! All weights live in one flat vector, layer by layer, each layer as its
//! row-major `N_j x N_{j-1}` matrix followed by its bias. Optimizers work
//! directly on that vector and gradients use the same layout.
//!
//! Inputs and outputs are min-max scaled to `[-1, 1]`; the scaling is part of
//! the forward map, so losses and predictions are in original units.

mod batch;
mod io;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::RngSeed;
use crate::linalg::Matrix;
use crate::scalar::Real;

pub use batch::Batch;
pub use io::{ModelMeta, Surrogate};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("empty sample set")]
    EmptySet,
    #[error("invalid layer sizes: {0}")]
    InvalidSizes(String),
    #[error("non-finite weight at index {0}")]
    NonFinite(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
}

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<(), NetError> {
    if expected == found {
        Ok(())
    } else {
        Err(NetError::DimensionMismatch { what, expected, found })
    }
}

/// Componentwise transfer function applied after each hidden layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferKind {
    /// `2 / (1 + exp(-2x)) - 1`, i.e. `tanh`.
    TanSig,
    /// `0` for `x < 0`, `1` for `x >= 0`. Its derivative is taken as zero
    /// everywhere, so gradient training never moves the hidden layers of a
    /// hard-limit network: only the output layer learns.
    HardLim,
    /// Identity.
    PureLin,
}

impl TransferKind {
    pub const ALL: [TransferKind; 3] = [TransferKind::TanSig, TransferKind::HardLim, TransferKind::PureLin];

    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            TransferKind::TanSig => x.tanh(),
            TransferKind::HardLim => {
                if x < T::zero() {
                    T::zero()
                } else {
                    T::one()
                }
            }
            TransferKind::PureLin => x,
        }
    }

    /// Derivative expressed through the output `y = apply(x)`.
    pub fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            TransferKind::TanSig => T::one() - y * y,
            TransferKind::HardLim => T::zero(),
            TransferKind::PureLin => T::one(),
        }
    }

    /// Whether the derivative vanishes identically.
    pub fn is_flat(self) -> bool {
        self == TransferKind::HardLim
    }

    /// Whether the function saturates (bounded range).
    pub fn is_saturating(self) -> bool {
        self != TransferKind::PureLin
    }

    pub fn tag(self) -> u32 {
        match self {
            TransferKind::TanSig => 0,
            TransferKind::HardLim => 1,
            TransferKind::PureLin => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransferKind::TanSig => "tansig",
            TransferKind::HardLim => "hardlim",
            TransferKind::PureLin => "purelin",
        }
    }
}

impl fmt::Display for TransferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransferKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown transfer function '{s}' (expected tansig, hardlim or purelin)"))
    }
}

/// Scalar transfer evaluation.
pub fn transfer<T: Real>(kind: TransferKind, x: T) -> T {
    kind.apply(x)
}

/// Per-component map `z -> 2 (z - min) / (max - min) - 1`. Components with
/// `max == min` map to 0 and back to the constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    from = "RangeRepr<T>",
    into = "RangeRepr<T>",
    bound = "T: Real + Serialize + for<'a> Deserialize<'a>"
)]
pub struct RangeMap<T> {
    min: Vec<T>,
    max: Vec<T>,
    center: Vec<T>,
    half: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct RangeRepr<T> {
    min: Vec<T>,
    max: Vec<T>,
}

impl<T: Real> From<RangeRepr<T>> for RangeMap<T> {
    fn from(r: RangeRepr<T>) -> Self {
        Self::from_bounds(r.min, r.max)
    }
}

impl<T: Real> From<RangeMap<T>> for RangeRepr<T> {
    fn from(r: RangeMap<T>) -> Self {
        RangeRepr { min: r.min, max: r.max }
    }
}

impl<T: Real> RangeMap<T> {
    /// Panics if the lengths differ; `max < min` is treated like `max == min`.
    pub fn from_bounds(min: Vec<T>, max: Vec<T>) -> Self {
        assert_eq!(min.len(), max.len());
        let two = T::lit(2.0);
        let (center, half) = min
            .iter()
            .zip(&max)
            .map(|(&lo, &hi)| {
                if hi > lo {
                    ((lo + hi) / two, (hi - lo) / two)
                } else {
                    (lo, T::zero())
                }
            })
            .unzip();
        Self { min, max, center, half }
    }

    /// The map that leaves `[-1, 1]` unchanged.
    pub fn identity(n: usize) -> Self {
        Self::from_bounds(vec![-T::one(); n], vec![T::one(); n])
    }

    /// Column ranges of `data`. An empty matrix gives the identity map.
    pub fn fit(data: &Matrix<T>) -> Self {
        if data.rows() == 0 {
            return Self::identity(data.cols());
        }
        let mut min = data.row(0).to_vec();
        let mut max = min.clone();
        for row in data.row_iter() {
            for ((lo, hi), &v) in min.iter_mut().zip(max.iter_mut()).zip(row) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        Self::from_bounds(min, max)
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn min(&self) -> &[T] {
        &self.min
    }

    pub fn max(&self) -> &[T] {
        &self.max
    }

    /// `(max - min) / 2`, the derivative of `denormalize`; 0 for constants.
    pub fn half_width(&self) -> &[T] {
        &self.half
    }

    pub fn center(&self) -> &[T] {
        &self.center
    }

    pub fn normalize(&self, v: &mut [T]) {
        for ((x, &c), &h) in v.iter_mut().zip(&self.center).zip(&self.half) {
            *x = if h > T::zero() { (*x - c) / h } else { T::zero() };
        }
    }

    pub fn denormalize(&self, v: &mut [T]) {
        for ((x, &c), &h) in v.iter_mut().zip(&self.center).zip(&self.half) {
            *x = c + h * *x;
        }
    }
}

/// Input and output scaling of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct Normalizer<T> {
    pub input: RangeMap<T>,
    pub output: RangeMap<T>,
}

impl<T: Real> Normalizer<T> {
    /// Ranges taken from a training set.
    pub fn fit(params: &Matrix<T>, targets: &Matrix<T>) -> Self {
        Self {
            input: RangeMap::fit(params),
            output: RangeMap::fit(targets),
        }
    }

    pub fn identity(q: usize, m: usize) -> Self {
        Self {
            input: RangeMap::identity(q),
            output: RangeMap::identity(m),
        }
    }
}

/// Layer sizes and transfer kind: everything about a network except its weights.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    sizes: Vec<usize>,
    transfer: TransferKind,
}

impl Architecture {
    /// `sizes = [N_0, ..., N_J]`, `J >= 1`, all positive.
    pub fn new(sizes: Vec<usize>, transfer: TransferKind) -> Result<Self, NetError> {
        if sizes.len() < 2 {
            return Err(NetError::InvalidSizes(
                "need at least an input and an output size".into(),
            ));
        }
        if sizes.contains(&0) {
            return Err(NetError::InvalidSizes(format!(
                "layer sizes must be positive, got {sizes:?}"
            )));
        }
        Ok(Self { sizes, transfer })
    }

    /// `q - 400 - 400 - m`.
    pub fn default_for(q: usize, m: usize, transfer: TransferKind) -> Result<Self, NetError> {
        Self::new(vec![q, 400, 400, m], transfer)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn transfer(&self) -> TransferKind {
        self.transfer
    }

    /// Number of affine layers `J`.
    pub fn depth(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    /// Offset of layer `j` (1-based) in the flat weight vector.
    pub fn offset(&self, j: usize) -> usize {
        (1..j).map(|i| self.layer_len(i)).sum()
    }

    /// `N_j N_{j-1} + N_j`.
    pub fn layer_len(&self, j: usize) -> usize {
        self.sizes[j] * (self.sizes[j - 1] + 1)
    }

    pub fn n_weights(&self) -> usize {
        self.offset(self.depth() + 1)
    }

    /// Length of the prefix holding the hidden layers `1..J-1`.
    pub fn hidden_len(&self) -> usize {
        self.offset(self.depth())
    }
}

/// Architecture plus the flat weight vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams<T> {
    arch: Architecture,
    weights: Vec<T>,
}

impl<T: Real> NetworkParams<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.n_weights();
        Self {
            arch,
            weights: vec![T::zero(); n],
        }
    }

    pub fn from_flat(arch: Architecture, weights: Vec<T>) -> Result<Self, NetError> {
        check_dim("weight vector", arch.n_weights(), weights.len())?;
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(NetError::NonFinite(i));
        }
        Ok(Self { arch, weights })
    }

    /// Builds a network from `(A_j, b_j)` pairs.
    pub fn from_layers(transfer: TransferKind, layers: &[(Matrix<T>, Vec<T>)]) -> Result<Self, NetError> {
        let mut sizes = vec![layers.first().map_or(0, |(a, _)| a.cols())];
        let mut weights = Vec::new();
        for (a, b) in layers {
            check_dim("layer input", *sizes.last().expect("nonempty"), a.cols())?;
            check_dim("bias", a.rows(), b.len())?;
            sizes.push(a.rows());
            weights.extend_from_slice(a.as_slice());
            weights.extend_from_slice(b);
        }
        Self::from_flat(Architecture::new(sizes, transfer)?, weights)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn sizes(&self) -> &[usize] {
        self.arch.sizes()
    }

    pub fn transfer(&self) -> TransferKind {
        self.arch.transfer
    }

    pub fn depth(&self) -> usize {
        self.arch.depth()
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    pub fn n_weights(&self) -> usize {
        self.weights.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn set_weights(&mut self, w: &[T]) {
        self.weights.copy_from_slice(w);
    }

    /// `(A_j, b_j)` of layer `j` in `1..=J`, `A_j` row-major.
    pub fn layer(&self, j: usize) -> (&[T], &[T]) {
        split_layer(&self.arch, &self.weights, j)
    }

    pub fn layer_mut(&mut self, j: usize) -> (&mut [T], &mut [T]) {
        let off = self.arch.offset(j);
        let (rows, cols) = (self.arch.sizes[j], self.arch.sizes[j - 1]);
        let slab = &mut self.weights[off..off + rows * (cols + 1)];
        slab.split_at_mut(rows * cols)
    }

    pub fn layer_matrix(&self, j: usize) -> Matrix<T> {
        let (a, _) = self.layer(j);
        Matrix::from_vec(self.arch.sizes[j], self.arch.sizes[j - 1], a.to_vec())
    }
}

pub(crate) fn split_layer<'a, T>(arch: &Architecture, w: &'a [T], j: usize) -> (&'a [T], &'a [T]) {
    let off = arch.offset(j);
    let (rows, cols) = (arch.sizes[j], arch.sizes[j - 1]);
    w[off..off + rows * (cols + 1)].split_at(rows * cols)
}

/// Random initial weights.
///
/// Hidden layers followed by a saturating transfer use Nguyen-Widrow scaling:
/// each row of `A_j` is a random direction of length
/// `beta = 0.7 N_j^(1 / N_{j-1})` and biases are uniform in `[-beta, beta]`.
/// Every other layer draws weights uniformly from `[-s, s]` with
/// `s = sqrt(6 / (N_{j-1} + N_j))` and starts with zero bias. So all weights
/// are bounded by [`init_bound`].
pub fn init_weights<T: Real>(arch: Architecture, seed: RngSeed) -> NetworkParams<T> {
    let mut rng = seed.rng();
    let mut net = NetworkParams::zeros(arch.clone());
    let depth = arch.depth();
    for j in 1..=depth {
        let (n_in, n_out) = (arch.sizes[j - 1], arch.sizes[j]);
        let nguyen_widrow = j < depth && arch.transfer.is_saturating();
        let bound = init_bound(&arch, j);
        let (a, b) = net.layer_mut(j);
        let mut uniform = |s: f64| T::lit(s * (2.0 * rng.random::<f64>() - 1.0));
        if nguyen_widrow {
            for row in a.chunks_exact_mut(n_in) {
                row.iter_mut().for_each(|w| *w = uniform(1.0));
                let norm = row.iter().map(|&w| w * w).sum::<T>().sqrt();
                let scale = if norm > T::zero() {
                    T::lit(bound) / norm
                } else {
                    T::zero()
                };
                row.iter_mut().for_each(|w| *w *= scale);
            }
            b.iter_mut().for_each(|v| *v = uniform(bound));
        } else {
            a.iter_mut().for_each(|w| *w = uniform(bound));
        }
        debug_assert_eq!(b.len(), n_out);
    }
    net
}

/// Largest magnitude [`init_weights`] can produce for a weight of layer `j`.
pub fn init_bound(arch: &Architecture, j: usize) -> f64 {
    let (n_in, n_out) = (arch.sizes[j - 1] as f64, arch.sizes[j] as f64);
    if j < arch.depth() && arch.transfer.is_saturating() {
        0.7 * n_out.powf(1.0 / n_in)
    } else {
        (6.0 / (n_in + n_out)).sqrt()
    }
}

/// `Psi(p)` for a single parameter vector.
pub fn forward<T: Real>(net: &NetworkParams<T>, norm: &Normalizer<T>, p: &[T]) -> Result<Vec<T>, NetError> {
    check_dim("parameter vector", net.input_dim(), p.len())?;
    let x = Matrix::from_vec(1, p.len(), p.to_vec());
    Ok(forward_batch(net, norm, &x)?.into_vec())
}

/// `Psi` applied to every row of `params`.
pub fn forward_batch<T: Real>(
    net: &NetworkParams<T>,
    norm: &Normalizer<T>,
    params: &Matrix<T>,
) -> Result<Matrix<T>, NetError> {
    let mut batch = Batch::inputs_only(net.arch(), norm, params)?;
    Ok(batch.predict(net.as_slice()))
}

/// Mean of the squared differences over all `k m` entries, in target units.
pub fn loss_mse<T: Real>(
    net: &NetworkParams<T>,
    norm: &Normalizer<T>,
    params: &Matrix<T>,
    targets: &Matrix<T>,
) -> Result<T, NetError> {
    let mut batch = Batch::new(net.arch(), norm, params, targets)?;
    Ok(batch.loss(net.as_slice()))
}

/// Exact gradient of [`loss_mse`] with respect to the flat weight vector.
pub fn gradient<T: Real>(
    net: &NetworkParams<T>,
    norm: &Normalizer<T>,
    params: &Matrix<T>,
    targets: &Matrix<T>,
) -> Result<Vec<T>, NetError> {
    let mut batch = Batch::new(net.arch(), norm, params, targets)?;
    let mut grad = vec![T::zero(); net.n_weights()];
    batch.loss_and_gradient(net.as_slice(), &mut grad);
    Ok(grad)
}

#[cfg(test)]
mod tests;
