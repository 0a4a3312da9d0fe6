//! Sensitivity and noise calculus for the private item update.
//!
//! User-level (epsilon, delta)-DP holds when every user's squared weights sum
//! to at most `beta = epsilon^2 / (4 T (ln(1/delta) + epsilon))`, ratings lie
//! in `[0, rating_cap]` and user embeddings have norm at most `user_cap`. The
//! item statistics then receive symmetric Gaussian noise of scale
//! `user_cap^2` and vector noise of scale `user_cap * rating_cap`.
//! Feature statistics depend only on public data and on already-released
//! item embeddings, so they are used without noise.

use serde::{Deserialize, Serialize};

use crate::cmf::WeightAssignment;
use crate::dataset::{FeatureDataset, RatingDataset};
use crate::error::{Error, Result};
use crate::linalg::{project_psd, DenseMatrix, DenseVector};
use crate::rng::{sample_gaussian_vector, sample_symmetric_gaussian, Domain, RngStream};

/// Slack allowed on clip bounds when checking inputs of the noisy statistics.
const SENSITIVITY_SLACK: f64 = 1e-9;

/// `(epsilon, delta, T)` and the derived squared-weight cap `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub iterations: usize,
    pub beta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, iterations: usize) -> Result<Self> {
        Ok(Self {
            epsilon,
            delta,
            iterations,
            beta: compute_beta(epsilon, delta, iterations)?,
        })
    }
}

/// `epsilon^2 / (4 T (ln(1/delta) + epsilon))`, natural log.
pub fn compute_beta(epsilon: f64, delta: f64, iterations: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must be positive and finite, got {epsilon}"),
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("must lie in (0, 1), got {delta}"),
        });
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter {
            name: "iterations",
            reason: "must be at least 1".into(),
        });
    }
    // Divide the single-iteration value last so beta(T) == beta(1) / T exactly.
    let single = epsilon * epsilon / (4.0 * ((1.0 / delta).ln() + epsilon));
    Ok(single / iterations as f64)
}

/// `W_ij = sqrt(beta / |R_i|)`: every user spends exactly `beta`.
pub fn uniform_weights(ratings: &RatingDataset, beta: f64) -> Result<WeightAssignment> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("must be finite and nonnegative, got {beta}"),
        });
    }
    let mut w = vec![0.0; ratings.len()];
    for user in 0..ratings.num_users() {
        let idx = ratings.user_indices(user);
        if idx.is_empty() {
            continue;
        }
        let value = (beta / idx.len() as f64).sqrt();
        for &r in idx {
            w[r] = value;
        }
    }
    WeightAssignment::new(w)
}

/// Per-user outcome of the squared-weight check.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub beta: f64,
    pub squared_sums: Vec<f64>,
    pub failing_users: Vec<usize>,
}

impl WeightReport {
    pub fn passed(&self) -> bool {
        self.failing_users.is_empty()
    }

    /// Turns a failing report into [`Error::WeightCapExceeded`].
    pub fn into_result(self) -> Result<Self> {
        match self.failing_users.first() {
            None => Ok(self),
            Some(&first) => Err(Error::WeightCapExceeded {
                count: self.failing_users.len(),
                first,
            }),
        }
    }
}

/// Flags every user whose `sum_j W_ij^2` exceeds `beta` by more than a
/// relative `1e-12`.
pub fn validate_weights(
    weights: &WeightAssignment,
    ratings: &RatingDataset,
    beta: f64,
) -> Result<WeightReport> {
    weights.check_aligned(ratings)?;
    let squared_sums: Vec<f64> = (0..ratings.num_users())
        .map(|u| {
            ratings
                .user_indices(u)
                .iter()
                .map(|&r| weights.get(r).powi(2))
                .sum()
        })
        .collect();
    let limit = beta * (1.0 + 1e-12);
    let failing_users = squared_sums
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > limit)
        .map(|(u, _)| u)
        .collect();
    Ok(WeightReport {
        beta,
        squared_sums,
        failing_users,
    })
}

/// Clip bounds on rating magnitude and user-embedding norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipParams {
    pub rating_cap: f64,
    pub user_norm_cap: f64,
}

impl ClipParams {
    pub fn new(rating_cap: f64, user_norm_cap: f64) -> Result<Self> {
        for (name, v) in [("gamma_m", rating_cap), ("gamma_u", user_norm_cap)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        Ok(Self {
            rating_cap,
            user_norm_cap,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ClippedRatings {
    pub ratings: RatingDataset,
    /// Ratings below zero that were raised to zero.
    pub negative_clamped: usize,
}

/// Clamps every rating to `[0, cap]`.
pub fn clip_ratings(ratings: &RatingDataset, cap: f64) -> ClippedRatings {
    let negative_clamped = ratings.entries().iter().filter(|e| e.value < 0.0).count();
    ClippedRatings {
        ratings: ratings.map_values(|v| v.clamp(0.0, cap)),
        negative_clamped,
    }
}

/// `u * min(1, cap / |u|)`.
pub fn clip_user_embedding(u: &[f64], cap: f64) -> DenseVector {
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out = DenseVector::from(u.to_vec());
    if norm > cap {
        for x in out.iter_mut() {
            *x = *x * cap / norm;
        }
    }
    out
}

/// Clips every row of a user embedding matrix.
pub fn clip_user_embeddings(users: &DenseMatrix, cap: f64) -> DenseMatrix {
    let mut out = users.clone();
    for r in 0..users.rows() {
        let clipped = clip_user_embedding(users.row(r), cap);
        out.set_row(r, &clipped);
    }
    out
}

/// Source of the Gaussian perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// Counter-based Gaussian noise keyed by `(seed, iteration, item)`.
    Gaussian { seed: u64 },
    /// No noise. For testing the degenerate mechanism only; releases made
    /// with it carry no privacy guarantee.
    Zero,
}

/// Draws `(G_j, g_j)` for one item: `G_j ~ cap_u^2 N^{dxd}` (symmetric, i.i.d.
/// upper triangle including the diagonal) and `g_j ~ cap_u cap_m N^d`.
pub fn draw_item_noise(
    noise: Noise,
    dim: usize,
    clip: &ClipParams,
    iteration: u32,
    item: usize,
) -> (DenseMatrix, DenseVector) {
    match noise {
        Noise::Zero => (DenseMatrix::zeros(dim, dim), DenseVector::zeros(dim)),
        Noise::Gaussian { seed } => {
            // The matrix and vector come from one stream so they never share draws.
            let stream = RngStream::new(seed, Domain::PrivacyNoise, iteration, item as u32);
            let mut rng = stream.draws();
            let matrix_scale = clip.user_norm_cap * clip.user_norm_cap;
            let vector_scale = clip.user_norm_cap * clip.rating_cap;
            let mut g = DenseMatrix::zeros(dim, dim);
            for a in 0..dim {
                for b in a..dim {
                    g[(a, b)] = matrix_scale * rng.next_normal();
                }
            }
            g.mirror_upper();
            let v: Vec<f64> = (0..dim).map(|_| vector_scale * rng.next_normal()).collect();
            (g, v.into())
        }
    }
}

/// PSD-projected noisy Gramian (with `lambda I` inside the projection) and
/// noisy moment vector for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyStatistics {
    pub a_hat: DenseMatrix,
    pub b_hat: DenseVector,
}

/// Exact feature-side statistics for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactStatistics {
    pub a_prime: DenseMatrix,
    pub b_prime: DenseVector,
}

/// Noisy sufficient statistics of item `item`.
///
/// Inputs must already be clipped: any contributing user row with norm above
/// `user_norm_cap` or rating outside `[0, rating_cap]` is a hard error.
#[allow(clippy::too_many_arguments)]
pub fn noisy_item_statistics(
    item: usize,
    users_clipped: &DenseMatrix,
    ratings_clipped: &RatingDataset,
    weights: &WeightAssignment,
    lambda: f64,
    clip: &ClipParams,
    noise: Noise,
    iteration: u32,
) -> Result<NoisyStatistics> {
    let d = users_clipped.cols();
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = DenseVector::zeros(d);
    for &r in ratings_clipped.item_indices(item) {
        let e = &ratings_clipped.entries()[r];
        let u = users_clipped.row(e.row);
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > clip.user_norm_cap + SENSITIVITY_SLACK {
            return Err(Error::SensitivityViolation(format!(
                "user {} has embedding norm {norm} above cap {}",
                e.row, clip.user_norm_cap
            )));
        }
        if e.value < 0.0 || e.value > clip.rating_cap + SENSITIVITY_SLACK {
            return Err(Error::SensitivityViolation(format!(
                "rating ({}, {}) = {} outside [0, {}]",
                e.row, e.col, e.value, clip.rating_cap
            )));
        }
        let w = weights.get(r);
        a.add_outer_upper(u, w);
        b.add_scaled(u, w * e.value);
    }
    a.mirror_upper();
    let (g_mat, g_vec) = draw_item_noise(noise, d, clip, iteration, item);
    a.add_scaled(&g_mat, 1.0);
    a.add_diagonal(lambda);
    b.add_scaled(&g_vec, 1.0);
    Ok(NoisyStatistics {
        a_hat: project_psd(&a)?,
        b_hat: b,
    })
}

/// `A'_j = sum f_k f_k^T + lambda_f I`, `b'_j = sum S_kj f_k` over the
/// features of item `item`.
pub fn exact_feature_statistics(
    item: usize,
    feature_emb: &DenseMatrix,
    features: &FeatureDataset,
    lambda_f: f64,
) -> ExactStatistics {
    let d = feature_emb.cols();
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = DenseVector::zeros(d);
    for e in features.item_entries(item) {
        let f = feature_emb.row(e.row);
        a.add_outer_upper(f, 1.0);
        b.add_scaled(f, e.value);
    }
    a.mirror_upper();
    a.add_diagonal(lambda_f);
    ExactStatistics {
        a_prime: a,
        b_prime: b,
    }
}

/// Samples one symmetric noise matrix of the calibrated scale; exposed for
/// calibration checks.
pub fn sample_matrix_noise(dim: usize, clip: &ClipParams, stream: RngStream) -> DenseMatrix {
    sample_symmetric_gaussian(dim, clip.user_norm_cap * clip.user_norm_cap, stream)
}

/// Samples one noise vector of the calibrated scale.
pub fn sample_vector_noise(dim: usize, clip: &ClipParams, stream: RngStream) -> DenseVector {
    sample_gaussian_vector(dim, clip.user_norm_cap * clip.rating_cap, stream)
}
