//! Small dense linear algebra for the per-row ridge systems.
//!
//! Everything here works on `d x d` systems where `d` is the embedding
//! dimension, so plain O(d^3) routines are enough: Cholesky (with an LU
//! fallback) for solves and cyclic Jacobi for symmetric eigendecomposition.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Off-diagonal convergence tolerance for the Jacobi eigensolver, relative to
/// the Frobenius norm of the input.
const JACOBI_TOLERANCE: f64 = f64::EPSILON;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative tolerance used when deciding that a pivot is zero.
const PIVOT_TOLERANCE: f64 = 1e-13;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn set_row(&mut self, i: usize, values: &[f64]) {
        self.row_mut(i).copy_from_slice(values);
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a zero-column matrix has no meaningful rows.
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matrix-vector dimension mismatch");
        self.row_iter().map(|r| dot(r, x)).collect()
    }

    /// Adds `scale * I` in place.
    pub fn add_diagonal(&mut self, scale: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += scale;
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &DenseMatrix, scale: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// `self += weight * x x^T`, filling the upper triangle only.
    ///
    /// Call [`DenseMatrix::mirror_upper`] once accumulation is done.
    pub fn add_outer_upper(&mut self, x: &[f64], weight: f64) {
        let d = self.rows;
        debug_assert_eq!(d, x.len());
        for a in 0..d {
            let wa = weight * x[a];
            let row = &mut self.data[a * d..(a + 1) * d];
            for b in a..d {
                row[b] += wa * x[b];
            }
        }
    }

    /// Copies the upper triangle onto the lower one.
    pub fn mirror_upper(&mut self) {
        let d = self.rows;
        for a in 0..d {
            for b in (a + 1)..d {
                self.data[b * d + a] = self.data[a * d + b];
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0_f64;
        for a in 0..self.rows {
            for b in (a + 1)..self.cols {
                worst = worst.max((self[(a, b)] - self[(b, a)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.max_asymmetry() == 0.0
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// `self^T self`, the Gramian of the rows.
    pub fn gramian(&self) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.cols, self.cols);
        for r in self.row_iter() {
            g.add_outer_upper(r, 1.0);
        }
        g.mirror_upper();
        g
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `self += scale * x`.
    pub fn add_scaled(&mut self, x: &[f64], scale: f64) {
        for (a, &b) in self.0.iter_mut().zip(x) {
            *a += scale * b;
        }
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(a + reg * I) x = b` for symmetric `a`.
///
/// Uses Cholesky when the shifted matrix is positive definite and falls back
/// to partially pivoted LU otherwise; one step of iterative refinement is
/// applied in both cases.
pub fn ridge_solve(a: &DenseMatrix, b: &[f64], reg: f64) -> Result<DenseVector> {
    let d = a.rows();
    if a.cols() != d || b.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "ridge system {}x{} with rhs of length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    if reg.is_nan() || reg < 0.0 {
        return Err(Error::InvalidParameter {
            name: "reg",
            reason: format!("must be nonnegative, got {reg}"),
        });
    }
    let mut system = a.clone();
    system.add_diagonal(reg);
    if !system.is_finite() || b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("ridge system".into()));
    }
    let factor = match Cholesky::factor(&system) {
        Some(c) => Factor::Cholesky(c),
        None => Factor::Lu(Lu::factor(&system).ok_or(Error::SingularSystem { dim: d })?),
    };
    let mut x = factor.solve(b);
    let ax = system.mul_vec(&x);
    let residual: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let correction = factor.solve(&residual);
    for (xi, ci) in x.iter_mut().zip(&correction) {
        *xi += ci;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { dim: d });
    }
    Ok(DenseVector(x))
}

enum Factor {
    Cholesky(Cholesky),
    Lu(Lu),
}

impl Factor {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Lu(l) => l.solve(b),
        }
    }
}

struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    fn factor(a: &DenseMatrix) -> Option<Self> {
        let d = a.rows();
        let scale = (0..d).fold(0.0_f64, |m, i| m.max(a[(i, i)].abs()));
        if scale == 0.0 && d > 0 {
            return None;
        }
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if diag.is_nan() || diag <= PIVOT_TOLERANCE * scale {
                return None;
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Some(Self { dim: d, lower: l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * d + k] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= l[k * d + i] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        y
    }
}

struct Lu {
    dim: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &DenseMatrix) -> Option<Self> {
        let d = a.rows();
        let scale = a.max_abs();
        if scale == 0.0 && d > 0 {
            return None;
        }
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..d).collect();
        for k in 0..d {
            let (p, pivot) = (k..d)
                .map(|r| (r, lu[r * d + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot.is_nan() || pivot <= PIVOT_TOLERANCE * scale {
                return None;
            }
            if p != k {
                for c in 0..d {
                    lu.swap(k * d + c, p * d + c);
                }
                perm.swap(k, p);
            }
            let pkk = lu[k * d + k];
            for r in (k + 1)..d {
                let f = lu[r * d + k] / pkk;
                lu[r * d + k] = f;
                for c in (k + 1)..d {
                    lu[r * d + c] -= f * lu[k * d + c];
                }
            }
        }
        Some(Self { dim: d, lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let lu = &self.lu;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..d {
            for k in 0..i {
                y[i] -= lu[i * d + k] * y[k];
            }
        }
        for i in (0..d).rev() {
            for k in (i + 1)..d {
                y[i] -= lu[i * d + k] * y[k];
            }
            y[i] /= lu[i * d + i];
        }
        y
    }
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns, matching the order of `values`.
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    /// Rebuilds `Q diag(values) Q^T`, exactly symmetric.
    pub fn reconstruct(&self, values: &[f64]) -> DenseMatrix {
        let d = self.values.len();
        let q = &self.vectors;
        let mut out = DenseMatrix::zeros(d, d);
        for a in 0..d {
            for b in a..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += q[(a, k)] * values[k] * q[(b, k)];
                }
                out[(a, b)] = s;
            }
        }
        out.mirror_upper();
        out
    }
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.max_asymmetry();
    if asym > 1e-12 * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    if !a.is_finite() {
        return Err(Error::NonFinite("eigendecomposition input".into()));
    }
    let d = a.rows();
    let mut m = a.clone();
    // Work on the exactly symmetric part.
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut q = DenseMatrix::identity(d);
    let threshold = JACOBI_TOLERANCE * m.frobenius_norm();
    let mut prev_off = f64::INFINITY;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .map(|(i, j)| 2.0 * m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        // Stop at the tolerance, or once roundoff keeps a sweep from helping.
        if off <= threshold || off >= prev_off {
            break;
        }
        prev_off = off;
        for p in 0..d {
            for r in (p + 1)..d {
                let apr = m[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let arr = m[(r, r)];
                let theta = (arr - app) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..d {
                    let mkp = m[(k, p)];
                    let mkr = m[(k, r)];
                    m[(k, p)] = c * mkp - s * mkr;
                    m[(k, r)] = s * mkp + c * mkr;
                }
                for k in 0..d {
                    let mpk = m[(p, k)];
                    let mrk = m[(r, k)];
                    m[(p, k)] = c * mpk - s * mrk;
                    m[(r, k)] = s * mpk + c * mrk;
                }
                m[(p, r)] = 0.0;
                m[(r, p)] = 0.0;

                for k in 0..d {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| m[(x, x)].total_cmp(&m[(y, y)]));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(d, d);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..d {
            vectors[(k, new)] = q[(k, old)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Frobenius-nearest positive semidefinite matrix: negative eigenvalues are
/// clamped to zero.
pub fn project_psd(a: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = symmetric_eigen(a)?;
    if eig.values.iter().all(|&v| v >= 0.0) {
        // Already PSD; skip the round trip through the eigenbasis so the
        // projection is exactly idempotent on its own output.
        let mut out = a.clone();
        let d = out.rows();
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        return Ok(out);
    }
    let clamped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    Ok(eig.reconstruct(&clamped))
}
