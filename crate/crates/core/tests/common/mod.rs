#![allow(dead_code, clippy::needless_range_loop)]

use dpcmf::dataset::{Entry, FeatureDataset, RatingDataset};
use dpcmf::linalg::DenseMatrix;
use dpcmf::rng::{Domain, RngStream, StreamRng};

pub fn rng(seed: u64, row: u32) -> StreamRng {
    RngStream::new(seed, Domain::Test, 0, row).draws()
}

pub fn uniform(r: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.next_f64()
}

pub fn gaussian_matrix(rows: usize, cols: usize, scale: f64, r: &mut StreamRng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| scale * r.next_normal()).collect();
    DenseMatrix::from_row_major(rows, cols, data).unwrap()
}

/// Each cell observed independently with probability `density`, values in `[lo, hi]`.
pub fn random_ratings(m: usize, n: usize, density: f64, lo: f64, hi: f64, seed: u64) -> RatingDataset {
    let mut r = rng(seed, 1);
    let mut entries = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if r.next_f64() < density {
                entries.push(Entry::new(i, j, uniform(&mut r, lo, hi)));
            }
        }
    }
    RatingDataset::from_entries(m, n, entries).unwrap()
}

pub fn random_features(s: usize, n: usize, density: f64, seed: u64) -> FeatureDataset {
    let mut r = rng(seed, 2);
    let mut entries = Vec::new();
    for k in 0..s {
        for j in 0..n {
            if r.next_f64() < density {
                entries.push(Entry::new(k, j, uniform(&mut r, -1.0, 2.0)));
            }
        }
    }
    FeatureDataset::from_entries(s, n, entries).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn bits(m: &DenseMatrix) -> Vec<u64> {
    m.as_slice().iter().map(|x| x.to_bits()).collect()
}

/// Plain Gaussian elimination with partial pivoting, kept independent of the
/// library's solver.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn to_nalgebra(m: &DenseMatrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Eigendecompose with nalgebra, clamp negative eigenvalues, rebuild.
pub fn psd_oracle(m: &DenseMatrix) -> nalgebra::DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(to_nalgebra(m));
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

pub fn min_eigenvalue(m: &DenseMatrix) -> f64 {
    nalgebra::SymmetricEigen::new(to_nalgebra(m)).eigenvalues.min()
}
