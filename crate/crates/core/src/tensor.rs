//! Dense row-major matrices and the handful of linear-algebra kernels the
//! solver needs: products, damped Gram matrices, Cholesky factor-and-solve,
//! column norms and elementwise operations.
//!
//! All reductions run in a fixed row-major order, so results are bitwise
//! reproducible for identical inputs.

use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}) [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "\n  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        if self.rows > 8 || self.cols > 8 {
            write!(f, "\n  ...")?;
        }
        write!(f, "\n]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::DataLength {
                len: data.len(),
                rows,
                cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged or empty input;
    /// meant for literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(
            rows.iter().all(|r| r.as_ref().len() == cols),
            "ragged rows"
        );
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data).expect("non-empty rows")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix by evaluating `f(row, col)` in row-major order.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Fails with [`Error::NonFinite`] on the first NaN or infinite entry.
    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { what, index }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    /// Multiplies row `i` by `factors[i]`.
    pub fn scale_rows(&self, factors: &[f64]) -> Result<Matrix> {
        if factors.len() != self.rows {
            return Err(Error::shape(
                "scale_rows",
                format!("{} factors for {} rows", factors.len(), self.rows),
            ));
        }
        let mut out = self.clone();
        for (i, &f) in factors.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        Ok(out)
    }

    /// Divides column `j` by `divisors[j]`.
    pub fn div_cols(&self, divisors: &[f64]) -> Result<Matrix> {
        if divisors.len() != self.cols {
            return Err(Error::shape(
                "div_cols",
                format!("{} divisors for {} columns", divisors.len(), self.cols),
            ));
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (v, &d) in out.row_mut(r).iter_mut().zip(divisors) {
                *v /= d;
            }
        }
        Ok(out)
    }

    /// Divides row `i` by `divisors[i]`.
    pub fn div_rows(&self, divisors: &[f64]) -> Result<Matrix> {
        if divisors.len() != self.rows {
            return Err(Error::shape(
                "div_rows",
                format!("{} divisors for {} rows", divisors.len(), self.rows),
            ));
        }
        let mut out = self.clone();
        for (i, &d) in divisors.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v /= d);
        }
        Ok(out)
    }

    /// Adds `value` to every diagonal entry of a square matrix.
    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += value;
        }
    }

    /// Sum of squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }
}

/// `out += a * x`, elementwise.
#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Dot product with four interleaved accumulators, combined in a fixed order.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Inner-dimension block size for [`matmul`]; keeps a slab of `b` in cache.
const K_BLOCK: usize = 128;

/// Matrix product `a * b`.
///
/// For each output entry the inner sum runs over `k` in increasing order,
/// so the result is identical to a naive triple loop.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (n, inner, m) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(n, m);
    for k0 in (0..inner).step_by(K_BLOCK) {
        let k1 = (k0 + K_BLOCK).min(inner);
        for i in 0..n {
            let arow = &a.data[i * inner..(i + 1) * inner];
            let orow = &mut out.data[i * m..(i + 1) * m];
            for (k, &aik) in arow.iter().enumerate().take(k1).skip(k0) {
                axpy(orow, aik, &b.data[k * m..(k + 1) * m]);
            }
        }
    }
    Ok(out)
}

/// Damped Gram matrix `x^T x + lambda * I`.
///
/// Only the upper triangle is accumulated; the lower triangle is mirrored
/// from it, so the result is exactly symmetric.
pub fn gram(x: &Matrix, lambda: f64) -> Matrix {
    let m = x.cols;
    let xt = x.transpose();
    let mut g = Matrix::zeros(m, m);
    for i in 0..m {
        let xi = xt.row(i);
        for j in i..m {
            g.data[i * m + j] = dot(xi, xt.row(j));
        }
    }
    for i in 0..m {
        for j in 0..i {
            g.data[i * m + j] = g.data[j * m + i];
        }
        g.data[i * m + i] += lambda;
    }
    g
}

/// Euclidean norm of every column plus `eps`.
pub fn column_norms(x: &Matrix, eps: f64) -> Vec<f64> {
    let mut sq = vec![0.0; x.cols];
    for r in 0..x.rows {
        for (s, &v) in sq.iter_mut().zip(x.row(r)) {
            *s += v * v;
        }
    }
    sq.into_iter().map(|s| s.sqrt() + eps).collect()
}

/// Cholesky factor `L` (lower triangular, `A = L L^T`) of a symmetric
/// positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    dim: usize,
    lower: Matrix,
    /// `L^T`, kept so the backward substitution walks contiguous rows.
    upper: Matrix,
}

/// Relative tolerance for the symmetry precondition of [`spd_factor`].
const SYMMETRY_TOL: f64 = 1e-9;

/// Factors a symmetric positive-definite matrix.
pub fn spd_factor(a: &Matrix) -> Result<SpdFactor> {
    if a.rows != a.cols {
        return Err(Error::shape("spd_factor", format!("{:?} is not square", a.shape())));
    }
    a.check_finite("spd_factor input")?;
    let n = a.rows;
    let scale = a.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (a.get(i, j) - a.get(j, i)).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }

    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
            let v = a.data[i * n + j] - s;
            if i == j {
                if v <= 0.0 || !v.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: v });
                }
                l.data[i * n + i] = v.sqrt();
            } else {
                l.data[i * n + j] = v / l.data[j * n + j];
            }
        }
    }
    let upper = l.transpose();
    Ok(SpdFactor {
        dim: n,
        lower: l,
        upper,
    })
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Solves `A X = B` for every column of `b`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows != self.dim {
            return Err(Error::shape(
                "solve",
                format!("factor is {0}x{0}, right-hand side {1:?}", self.dim, b.shape()),
            ));
        }
        let n = self.dim;
        let w = b.cols;
        let mut y = b.clone();

        // L Y = B
        for i in 0..n {
            let lrow = self.lower.row(i);
            let (done, rest) = y.data.split_at_mut(i * w);
            let yi = &mut rest[..w];
            for (k, &lik) in lrow[..i].iter().enumerate() {
                if lik != 0.0 {
                    axpy(yi, -lik, &done[k * w..(k + 1) * w]);
                }
            }
            let d = lrow[i];
            yi.iter_mut().for_each(|v| *v /= d);
        }

        // L^T X = Y
        for i in (0..n).rev() {
            let urow = self.upper.row(i);
            let (head, tail) = y.data.split_at_mut((i + 1) * w);
            let xi = &mut head[i * w..];
            for (off, &uik) in urow[i + 1..].iter().enumerate() {
                if uik != 0.0 {
                    axpy(xi, -uik, &tail[off * w..(off + 1) * w]);
                }
            }
            let d = urow[i];
            xi.iter_mut().for_each(|v| *v /= d);
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
    fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
        let n = a.rows();
        let mut m = a.clone();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += m.get(p, q).powi(2);
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = m.get(k, p);
                        let akq = m.get(k, q);
                        m.set(k, p, c * akp - s * akq);
                        m.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = m.get(p, k);
                        let aqk = m.get(q, k);
                        m.set(p, k, c * apk - s * aqk);
                        m.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        (0..n).map(|i| m.get(i, i)).collect()
    }

    #[test]
    fn matmul_identity_and_hand_products() {
        let id = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let b = Matrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        assert_eq!(matmul(&id, &b).unwrap(), b);

        let a = Matrix::from_rows(&[[1.0, 2.0]]);
        let c = Matrix::from_rows(&[[3.0], [4.0]]);
        assert_eq!(matmul(&a, &c).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(r, k, c) in &[(8, 8, 8), (32, 32, 32), (5, 300, 3), (1, 1, 1)] {
            let a = random(r, k, &mut rng);
            let b = random(k, c, &mut rng);
            let fast = matmul(&a, &b).unwrap();
            let slow = naive_matmul(&a, &b);
            let err = fast.sub(&slow).unwrap().frobenius();
            assert!(err <= 1e-12 * slow.frobenius(), "{r}x{k}x{c}: {err}");
        }
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            matmul(&a, &a),
            Err(Error::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn gram_examples() {
        let g = gram(&Matrix::identity(2), 0.1);
        assert_eq!(g, Matrix::from_rows(&[[1.1, 0.0], [0.0, 1.1]]));
        assert_eq!(gram(&Matrix::from_rows(&[[3.0]]), 0.0).data(), &[9.0]);
    }

    #[test]
    fn gram_is_symmetric_with_eigenvalues_above_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(16, 4, &mut rng);
        let lambda = 0.25;
        let g = gram(&x, lambda);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
            }
        }
        let reference = naive_matmul(&x.transpose(), &x);
        for i in 0..4 {
            for j in 0..4 {
                let expect = reference.get(i, j) + if i == j { lambda } else { 0.0 };
                assert!((g.get(i, j) - expect).abs() < 1e-12);
            }
        }
        let min_eig = jacobi_eigenvalues(&g)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= lambda - 1e-10, "{min_eig}");
    }

    #[test]
    fn factor_and_solve() {
        let f = spd_factor(&Matrix::from_rows(&[[4.0]])).unwrap();
        assert_eq!(f.solve(&Matrix::from_rows(&[[8.0]])).unwrap().data(), &[2.0]);

        let f = spd_factor(&Matrix::identity(3)).unwrap();
        let b = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn solve_residual_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 6, 33] {
            let g = random(n + 3, n, &mut rng);
            let mut a = matmul(&g.transpose(), &g).unwrap();
            a.add_diagonal(1.0);
            let b = random(n, 5, &mut rng);
            let x = spd_factor(&a).unwrap().solve(&b).unwrap();
            let resid = matmul(&a, &x).unwrap().sub(&b).unwrap().frobenius();
            assert!(resid <= 1e-9 * b.frobenius(), "n={n}: {resid}");
        }
    }

    #[test]
    fn non_spd_names_pivot() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]);
        match spd_factor(&a) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("{other:?}"),
        }
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(spd_factor(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn column_norm_examples() {
        let x = Matrix::from_rows(&[[3.0, 0.0], [4.0, 0.0]]);
        assert_eq!(column_norms(&x, 0.0), vec![5.0, 0.0]);
        assert_eq!(column_norms(&x, 1e-8), vec![5.0 + 1e-8, 1e-8]);
        assert_eq!(column_norms(&Matrix::zeros(3, 4), 1e-8), vec![1e-8; 4]);
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(Matrix::from_rows(&[[3.0, 4.0]]).frobenius_sq(), 25.0);
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let m = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(
            a.hadamard(&m).unwrap(),
            Matrix::from_rows(&[[0.0, 2.0], [3.0, 0.0]])
        );
        let ones = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(
            ones.scale_rows(&[3.0, 4.0]).unwrap(),
            Matrix::from_rows(&[[3.0, 3.0], [4.0, 4.0]])
        );
        assert!(a.add(&Matrix::zeros(1, 2)).is_err());
        assert!(a.scale_rows(&[1.0]).is_err());
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        assert!(matches!(Matrix::new(0, 2, vec![]), Err(Error::EmptyMatrix { .. })));
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0; 3]),
            Err(Error::DataLength { .. })
        ));
    }
}
