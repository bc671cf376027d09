//! Small dense linear algebra over complex and real matrices.
//!
//! Everything here is sized for the space-time coding problems in this crate
//! (at most a few dozen rows), so matrices are plain row-major `Vec`s and the
//! algorithms are the textbook ones: column stacking, Kronecker products, the
//! real embedding `check(A) = [Re(A); Im(A)]`, a Householder thin QR and an
//! LU determinant.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Relative tolerance used by [`thin_qr`] to declare a column dependent.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is rank deficient: column {column} has orthogonalized norm {norm:e}")]
    RankDeficient { column: usize, norm: f64 },
    #[error("thin QR needs rows >= cols, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Column vector from a slice.
    pub fn column_vector(entries: &[Complex64]) -> Self {
        let mut m = Self::zeros(entries.len(), 1);
        m.data.copy_from_slice(entries);
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * alpha).collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * alpha;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> Complex64 {
        assert!(self.is_square(), "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = Complex64::new(1.0, 0.0);
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&p, &q| a[p * n + k].norm_sqr().total_cmp(&a[q * n + k].norm_sqr()))
                .unwrap_or(k);
            let p = a[pivot * n + k];
            if p.norm_sqr() == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            if pivot != k {
                for j in 0..n {
                    a.swap(k * n + j, pivot * n + j);
                }
                det = -det;
            }
            det *= p;
            for i in k + 1..n {
                let f = a[i * n + k] / p;
                if f.norm_sqr() == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let v = a[k * n + j];
                    a[i * n + j] -= f * v;
                }
            }
        }
        det
    }
}

impl Index<(usize, usize)> for ComplexMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMat {
    type Output = ComplexMat;
    fn mul(self, rhs: &ComplexMat) -> ComplexMat {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = ComplexMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMat {
    type Output = ComplexMat;
    fn add(self, rhs: &ComplexMat) -> ComplexMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMat {
    type Output = ComplexMat;
    fn sub(self, rhs: &ComplexMat) -> ComplexMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for ComplexMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, " ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, " {:+.4}{:+.4}j", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Dense real matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct RealMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_fn(rows.len(), c, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `selfᵀ · x`
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len());
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self[(i, j)] * xi;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for RealMat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RealMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &RealMat {
    type Output = RealMat;
    fn mul(self, rhs: &RealMat) -> RealMat {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = RealMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Sub for &RealMat {
    type Output = RealMat;
    fn sub(self, rhs: &RealMat) -> RealMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        RealMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for RealMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, " ")?;
            for j in 0..self.cols {
                write!(f, " {:+.5}", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Stacks the columns of `m` into one column vector.
pub fn vec(m: &ComplexMat) -> ComplexMat {
    let mut out = ComplexMat::zeros(m.rows * m.cols, 1);
    for j in 0..m.cols {
        for i in 0..m.rows {
            out.data[j * m.rows + i] = m[(i, j)];
        }
    }
    out
}

pub fn kron(a: &ComplexMat, b: &ComplexMat) -> ComplexMat {
    ComplexMat::from_fn(a.rows * b.rows, a.cols * b.cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    })
}

/// Real embedding: real parts stacked above imaginary parts.
///
/// For a column vector this is `[Re(a); Im(a)]`; for a matrix it is
/// `[Re(A); Im(A)]`, so that `check(A s) = check(A) s` for real `s`.
pub fn check(m: &ComplexMat) -> RealMat {
    let r = m.rows;
    RealMat::from_fn(2 * r, m.cols, |i, j| {
        if i < r {
            m[(i, j)].re
        } else {
            m[(i - r, j)].im
        }
    })
}

/// Householder thin QR of a tall matrix: `a = q1 · r` with `q1` having
/// orthonormal columns and `r` upper triangular with nonnegative diagonal.
pub fn thin_qr(a: &RealMat) -> Result<(RealMat, RealMat), LinalgError> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(LinalgError::Shape { rows: m, cols: n });
    }
    let largest = (0..n)
        .map(|j| (0..m).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let tol = RANK_TOL * largest;

    let mut work = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let norm = (k..m).map(|i| work[(i, k)] * work[(i, k)]).sum::<f64>().sqrt();
        if norm <= tol || norm == 0.0 {
            return Err(LinalgError::RankDeficient { column: k, norm });
        }
        let x0 = work[(k, k)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        // v = x - alpha e1, normalized; H = I - 2 v vᵀ maps x to alpha e1
        let mut v: Vec<f64> = (k..m).map(|i| work[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        v.iter_mut().for_each(|t| *t /= vnorm);
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * work[(i, j)]).sum();
            for i in k..m {
                work[(i, j)] -= 2.0 * v[i - k] * dot;
            }
        }
        reflectors.push(v);
    }

    let mut r = RealMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r[(i, j)] = work[(i, j)];
        }
    }

    // Q1 = H_0 H_1 ... H_{n-1} [I_n; 0]
    let mut q = RealMat::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for (k, v) in reflectors.iter().enumerate().rev() {
        for j in 0..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * q[(i, j)]).sum();
            for i in k..m {
                q[(i, j)] -= 2.0 * v[i - k] * dot;
            }
        }
    }

    // flip signs so that diag(r) >= 0
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            for j in k..n {
                r[(k, j)] = -r[(k, j)];
            }
            for i in 0..m {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    Ok((q, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_complex(rng: &mut ChaCha8Rng, r: usize, cl: usize) -> ComplexMat {
        ComplexMat::from_fn(r, cl, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_real(rng: &mut ChaCha8Rng, r: usize, cl: usize) -> RealMat {
        RealMat::from_fn(r, cl, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn vec_stacks_columns() {
        let i2 = ComplexMat::identity(2);
        assert_eq!(vec(&i2).as_slice(), &[c(1., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]);

        let one = ComplexMat::from_rows(&[vec![c(3., -1.)]]);
        assert_eq!(vec(&one), one);

        let (a, b, cc, d) = (c(1., 1.), c(2., 0.), c(0., 3.), c(4., -4.));
        let m = ComplexMat::from_rows(&[vec![a, b], vec![cc, d]]);
        let v = vec(&m);
        assert_eq!((v.rows(), v.cols()), (4, 1));
        assert_eq!(v.as_slice(), &[a, cc, b, d]);
    }

    #[test]
    fn kron_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_complex(&mut rng, 2, 3);
        assert_eq!(kron(&ComplexMat::identity(1), &b), b);

        let k = kron(&ComplexMat::identity(2), &b);
        assert_eq!((k.rows(), k.cols()), (4, 6));
        for i in 0..4 {
            for j in 0..6 {
                let expect = if i / 2 == j / 3 { b[(i % 2, j % 3)] } else { c(0., 0.) };
                assert_eq!(k[(i, j)], expect);
            }
        }
    }

    #[test]
    fn kron_matches_block_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = random_complex(&mut rng, 2, 2);
            let b = random_complex(&mut rng, 2, 2);
            let k = kron(&a, &b);
            // four blocks a_pq * b
            for p in 0..2 {
                for q in 0..2 {
                    let block = b.scale(a[(p, q)]);
                    for i in 0..2 {
                        for j in 0..2 {
                            assert!((k[(2 * p + i, 2 * q + j)] - block[(i, j)]).norm() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn kron_vec_compatibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_complex(&mut rng, 2, 3);
            let b = random_complex(&mut rng, 3, 2);
            let x = random_complex(&mut rng, 2, 3);
            let lhs = vec(&(&(&b * &x) * &a.transpose()));
            let rhs = &kron(&a, &b) * &vec(&x);
            assert!((&lhs - &rhs).frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn check_of_vectors() {
        let v = ComplexMat::column_vector(&[c(1., 2.), c(3., 0.)]);
        assert_eq!(check(&v).as_slice(), &[1., 3., 2., 0.]);

        let real = ComplexMat::column_vector(&[c(5., 0.), c(-2., 0.), c(0.5, 0.)]);
        assert!(check(&real).as_slice()[3..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn check_commutes_with_real_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let h = random_complex(&mut rng, 8, 5);
            let w = random_complex(&mut rng, 8, 1);
            let s: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s_c = ComplexMat::column_vector(&s.iter().map(|&x| c(x, 0.)).collect::<Vec<_>>());
            let lhs = check(&(&(&h * &s_c) + &w));
            let hs = check(&h).mul_vec(&s);
            let cw = check(&w);
            for i in 0..16 {
                assert!((lhs[(i, 0)] - hs[i] - cw[(i, 0)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn check_is_real_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_complex(&mut rng, 3, 4);
        let b = random_complex(&mut rng, 3, 4);
        let (alpha, beta) = (1.7, -0.3);
        let mut comb = a.scale(c(alpha, 0.));
        comb.axpy(beta, &b);
        let lhs = check(&comb);
        let ca = check(&a);
        let cb = check(&b);
        let rhs = RealMat::from_fn(6, 4, |i, j| alpha * ca[(i, j)] + beta * cb[(i, j)]);
        assert!((&lhs - &rhs).max_abs() < 1e-15);
    }

    #[test]
    fn qr_of_identity_and_scaled_identity() {
        let (q, r) = thin_qr(&RealMat::identity(4)).unwrap();
        assert!((&q - &RealMat::identity(4)).max_abs() < 1e-15);
        assert!((&r - &RealMat::identity(4)).max_abs() < 1e-15);

        let two = RealMat::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.0 });
        let (q, r) = thin_qr(&two).unwrap();
        assert!((&q - &RealMat::identity(4)).max_abs() < 1e-15);
        assert!((&r - &two).max_abs() < 1e-15);
    }

    #[test]
    fn qr_reconstructs_tall_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let a = random_real(&mut rng, 16, 10);
            let (q, r) = thin_qr(&a).unwrap();
            let err = (&(&q * &r) - &a).frobenius_norm() / a.frobenius_norm();
            assert!(err <= 1e-10, "reconstruction error {err}");
            let qtq = &q.transpose() * &q;
            assert!((&qtq - &RealMat::identity(10)).max_abs() <= 1e-10);
            for i in 0..10 {
                assert!(r[(i, i)] >= 0.0);
                for j in 0..i {
                    assert_eq!(r[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn qr_rejects_dependent_columns() {
        let a = RealMat::from_rows(&[
            vec![1.0, 2.0, 0.0],
            vec![2.0, 4.0, 1.0],
            vec![3.0, 6.0, 0.0],
            vec![4.0, 8.0, 1.0],
        ]);
        assert!(matches!(thin_qr(&a), Err(LinalgError::RankDeficient { column: 1, .. })));
        assert!(matches!(thin_qr(&RealMat::zeros(2, 3)), Err(LinalgError::Shape { .. })));
    }

    #[test]
    fn det_small_cases() {
        assert_eq!(ComplexMat::identity(4).det(), c(1., 0.));
        let m = ComplexMat::from_rows(&[vec![c(0., 1.), c(2., 0.)], vec![c(1., 0.), c(0., 0.)]]);
        // i*0 - 2*1
        assert!((m.det() - c(-2., 0.)).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_complex(&mut rng, 3, 3);
        let b = random_complex(&mut rng, 3, 3);
        let lhs = (&a * &b).det();
        let rhs = a.det() * b.det();
        assert!((lhs - rhs).norm() < 1e-12);
    }
}
