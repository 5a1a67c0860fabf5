use crate::linalg::{gemm, Matrix, Op};
use crate::scalar::Real;

use super::{check_dim, split_layer, Architecture, NetError, Normalizer};

/// A fixed sample set prepared for repeated evaluation under changing weights.
///
/// Inputs are normalized once. Hidden-layer activations are kept together
/// with a copy of the hidden weights that produced them and reused while
/// those weights stay unchanged, which is the common case for hard-limit
/// networks whose hidden layers never receive a gradient.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    arch: Architecture,
    center: Vec<T>,
    half: Vec<T>,
    x: Matrix<T>,
    y: Matrix<T>,
    acts: Vec<Matrix<T>>,
    hidden_key: Option<Vec<T>>,
}

impl<T: Real> Batch<T> {
    /// Prepares `params` (`k x q`) and `targets` (`k x m`), `k >= 1`.
    pub fn new(
        arch: &Architecture,
        norm: &Normalizer<T>,
        params: &Matrix<T>,
        targets: &Matrix<T>,
    ) -> Result<Self, NetError> {
        if params.rows() == 0 {
            return Err(NetError::EmptySet);
        }
        check_dim("target rows", params.rows(), targets.rows())?;
        check_dim("target columns", arch.output_dim(), targets.cols())?;
        let mut batch = Self::inputs_only(arch, norm, params)?;
        batch.y = targets.clone();
        Ok(batch)
    }

    /// Prepares inputs for prediction only; `loss` must not be called.
    pub fn inputs_only(arch: &Architecture, norm: &Normalizer<T>, params: &Matrix<T>) -> Result<Self, NetError> {
        check_dim("parameter columns", arch.input_dim(), params.cols())?;
        check_dim("input normalizer", arch.input_dim(), norm.input.len())?;
        check_dim("output normalizer", arch.output_dim(), norm.output.len())?;
        let mut x = params.clone();
        for i in 0..x.rows() {
            norm.input.normalize(x.row_mut(i));
        }
        let k = x.rows();
        let acts = (1..arch.depth()).map(|j| Matrix::zeros(k, arch.sizes()[j])).collect();
        Ok(Self {
            arch: arch.clone(),
            center: norm.output.center().to_vec(),
            half: norm.output.half_width().to_vec(),
            x,
            y: Matrix::zeros(0, 0),
            acts,
            hidden_key: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn targets(&self) -> &Matrix<T> {
        &self.y
    }

    /// Drops cached hidden activations.
    pub fn invalidate(&mut self) {
        self.hidden_key = None;
    }

    fn update_hidden(&mut self, w: &[T]) {
        assert_eq!(w.len(), self.arch.n_weights(), "weight vector length");
        let hidden = &w[..self.arch.hidden_len()];
        if self.hidden_key.as_deref() == Some(hidden) {
            return;
        }
        let k = self.x.rows();
        let transfer = self.arch.transfer();
        for j in 1..self.arch.depth() {
            let (a, b) = split_layer(&self.arch, w, j);
            let (n_in, n_out) = (self.arch.sizes()[j - 1], self.arch.sizes()[j]);
            let (before, rest) = self.acts.split_at_mut(j - 1);
            let input = if j == 1 { &self.x } else { &before[j - 2] };
            let out = &mut rest[0];
            for i in 0..k {
                out.row_mut(i).copy_from_slice(b);
            }
            gemm(
                T::one(),
                (input.as_slice(), k, n_in),
                Op::N,
                (a, n_out, n_in),
                Op::T,
                T::one(),
                (out.as_mut_slice(), k, n_out),
            );
            out.as_mut_slice().iter_mut().for_each(|v| *v = transfer.apply(*v));
        }
        self.hidden_key = Some(hidden.to_vec());
    }

    fn last_hidden(&self) -> &Matrix<T> {
        self.acts.last().unwrap_or(&self.x)
    }

    /// Network output in original units, `k x m`.
    pub fn predict(&mut self, w: &[T]) -> Matrix<T> {
        self.update_hidden(w);
        let depth = self.arch.depth();
        let (n_in, m) = (self.arch.sizes()[depth - 1], self.arch.output_dim());
        let k = self.x.rows();
        let (a, b) = split_layer(&self.arch, w, depth);
        let mut out = Matrix::zeros(k, m);
        for i in 0..k {
            out.row_mut(i).copy_from_slice(b);
        }
        gemm(
            T::one(),
            (self.last_hidden().as_slice(), k, n_in),
            Op::N,
            (a, m, n_in),
            Op::T,
            T::one(),
            (out.as_mut_slice(), k, m),
        );
        for i in 0..k {
            for ((v, &c), &h) in out.row_mut(i).iter_mut().zip(&self.center).zip(&self.half) {
                *v = c + h * *v;
            }
        }
        out
    }

    fn scale(&self) -> T {
        T::one() / T::lit((self.y.rows() * self.y.cols()) as f64)
    }

    /// Mean squared error over all entries.
    pub fn loss(&mut self, w: &[T]) -> T {
        assert!(self.y.rows() > 0, "batch has no targets");
        let out = self.predict(w);
        let sum: T = out
            .as_slice()
            .iter()
            .zip(self.y.as_slice())
            .map(|(&p, &y)| (p - y) * (p - y))
            .sum();
        sum * self.scale()
    }

    /// Loss and its gradient, written into `grad` (same layout as `w`).
    pub fn loss_and_gradient(&mut self, w: &[T], grad: &mut [T]) -> T {
        assert!(self.y.rows() > 0, "batch has no targets");
        assert_eq!(grad.len(), w.len(), "gradient length");
        let out = self.predict(w);
        let k = self.x.rows();
        let m = self.arch.output_dim();
        let scale = self.scale();
        let two_scale = T::lit(2.0) * scale;
        let mut sum = T::zero();
        let mut delta = Matrix::zeros(k, m);
        for i in 0..k {
            let (o, y) = (out.row(i), self.y.row(i));
            for (l, d) in delta.row_mut(i).iter_mut().enumerate() {
                let r = o[l] - y[l];
                sum += r * r;
                *d = two_scale * r * self.half[l];
            }
        }

        let transfer = self.arch.transfer();
        let sizes = self.arch.sizes().to_vec();
        for j in (1..=self.arch.depth()).rev() {
            let (n_in, n_out) = (sizes[j - 1], sizes[j]);
            let input = if j == 1 { &self.x } else { &self.acts[j - 2] };
            let off = self.arch.offset(j);
            let (ga, gb) = grad[off..off + n_out * (n_in + 1)].split_at_mut(n_out * n_in);
            gemm(
                T::one(),
                (delta.as_slice(), k, n_out),
                Op::T,
                (input.as_slice(), k, n_in),
                Op::N,
                T::zero(),
                (ga, n_out, n_in),
            );
            gb.fill(T::zero());
            for row in delta.row_iter() {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if j == 1 {
                break;
            }
            if transfer.is_flat() {
                grad[..off].fill(T::zero());
                break;
            }
            let (a, _) = split_layer(&self.arch, w, j);
            let mut next = Matrix::zeros(k, n_in);
            gemm(
                T::one(),
                (delta.as_slice(), k, n_out),
                Op::N,
                (a, n_out, n_in),
                Op::N,
                T::zero(),
                (next.as_mut_slice(), k, n_in),
            );
            for (d, &h) in next.as_mut_slice().iter_mut().zip(input.as_slice()) {
                *d *= transfer.derivative_from_output(h);
            }
            delta = next;
        }
        sum * scale
    }
}
