//! Row-major dense matrices and the few kernels the crate needs.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Whether an operand enters a product as stored or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Wraps a row-major buffer. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact panics on a zero chunk size
        let c = self.cols.max(1);
        self.data.chunks_exact(c).take(self.rows)
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Resizes to `rows x cols`, reusing the allocation. Contents are unspecified.
    pub fn reshape_uninit(&mut self, rows: usize, cols: usize) {
        self.rows = rows;
        self.cols = cols;
        self.data.resize(rows * cols, T::zero());
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mat_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        self.row_iter()
            .map(|r| r.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn nonzero_columns(&self) -> Vec<bool> {
        (0..self.cols)
            .map(|j| (0..self.rows).any(|i| self[(i, j)] != T::zero()))
            .collect()
    }

    /// `out <- alpha * op(self) * op(other) + beta * out`.
    pub fn matmul_into(&self, op_a: Op, other: &Matrix<T>, op_b: Op, alpha: T, beta: T, out: &mut Matrix<T>) {
        let (rows, cols) = out.shape();
        gemm(
            alpha,
            (&self.data, self.rows, self.cols),
            op_a,
            (&other.data, other.rows, other.cols),
            op_b,
            beta,
            (&mut out.data, rows, cols),
        );
    }

    pub fn matmul(&self, op_a: Op, other: &Matrix<T>, op_b: Op) -> Matrix<T> {
        let m = if op_a == Op::N { self.rows } else { self.cols };
        let n = if op_b == Op::N { other.cols } else { other.rows };
        let mut out = Matrix::zeros(m, n);
        self.matmul_into(op_a, other, op_b, T::one(), T::zero(), &mut out);
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `c <- alpha * op(a) * op(b) + beta * c` on row-major slices given as
/// `(data, rows, cols)`. With `beta == 0` the old contents of `c` are ignored.
pub fn gemm<T: Real>(
    alpha: T,
    a: (&[T], usize, usize),
    op_a: Op,
    b: (&[T], usize, usize),
    op_b: Op,
    beta: T,
    c: (&mut [T], usize, usize),
) {
    let (a, ar, ac) = a;
    let (b, br, bc) = b;
    let (c, cr, cc) = c;
    assert_eq!(a.len(), ar * ac, "left operand has wrong length");
    assert_eq!(b.len(), br * bc, "right operand has wrong length");
    assert_eq!(c.len(), cr * cc, "output has wrong length");
    let (m, k, rsa, csa) = match op_a {
        Op::N => (ar, ac, ac as isize, 1),
        Op::T => (ac, ar, 1, ac as isize),
    };
    let (k2, n, rsb, csb) = match op_b {
        Op::N => (br, bc, bc as isize, 1),
        Op::T => (bc, br, 1, bc as isize),
    };
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!((cr, cc), (m, n), "output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v = if beta == T::zero() { T::zero() } else { beta * *v };
        }
        return;
    }
    // SAFETY: dimensions and strides were checked against each buffer above.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Returned when a pivot vanishes during factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is singular to working precision")]
pub struct Singular;

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(mut a: Matrix<T>) -> Result<Self, Singular> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        let tiny = scale * T::epsilon() * T::lit(n.max(1) as f64);
        for col in 0..n {
            let (piv, piv_val) = (col..n)
                .map(|r| (r, a[(r, col)].abs()))
                .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(piv_val > tiny) {
                return Err(Singular);
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(col * n + j, piv * n + j);
                }
                perm.swap(col, piv);
            }
            let d = a[(col, col)];
            for r in col + 1..n {
                let factor = a[(r, col)] / d;
                a[(r, col)] = factor;
                if factor != T::zero() {
                    for j in col + 1..n {
                        let v = a[(col, j)];
                        a[(r, j)] -= factor * v;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_respect_transposition() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let ab = a.matmul(Op::N, &b, Op::N);
        assert_eq!(ab.as_slice(), &[4.0, 5.0, 10.0, 11.0]);
        let ata = a.matmul(Op::T, &a, Op::N);
        assert_eq!(ata, a.transpose().matmul(Op::N, &a, Op::N));
        let abt = a.matmul(Op::N, &b.transpose(), Op::T);
        assert_eq!(abt, ab);
    }

    #[test]
    fn lu_solves_pivoted_system() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]]);
        let x_true = [1.0f64, -2.0, 0.5];
        let b = a.mat_vec(&x_true);
        let lu = Lu::factor(a).unwrap();
        let x = lu.solve(&b);
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn lu_reports_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert_eq!(Lu::factor(a).unwrap_err(), Singular);
    }
}
