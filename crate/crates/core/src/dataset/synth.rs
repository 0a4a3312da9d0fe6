//! Synthetic low-rank ratings with a partially informative feature matrix.

use std::collections::BTreeSet;

use super::{Entry, FeatureDataset, RatingDataset};
use crate::cmf::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::rng::{Domain, RngStream, StreamRng};

// Sub-streams of the synthetic domain, packed into the iteration slot.
const USER_TRUTH: u32 = 0;
const ITEM_TRUTH: u32 = 1;
const FEATURE_TRUTH: u32 = 2;
const RATING_SAMPLES: u32 = 3;
const FEATURE_SAMPLES: u32 = 4;
const FEATURE_COINS: u32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub num_features: usize,
    pub dim: usize,
    /// Constant added to every rating, e.g. to make ratings nonnegative.
    pub rating_offset: f64,
    /// Multiplier on the low-rank part of the ratings.
    pub rating_scale: f64,
    /// Standard deviation of the additive rating noise.
    pub rating_noise: f64,
    /// Constant added to every feature value.
    pub feature_offset: f64,
    /// Standard deviation of the additive noise on informative feature rows.
    pub feature_noise: f64,
    /// Probability that a feature row is a noisy linear probe of the true
    /// item embeddings rather than pure noise.
    pub feature_informativeness: f64,
    /// Distinct items rated by each user; `None` observes the full matrix.
    pub ratings_per_user: Option<usize>,
    /// Distinct items carrying each feature; `None` for every item.
    pub items_per_feature: Option<usize>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_users: 200,
            num_items: 100,
            num_features: 50,
            dim: 8,
            rating_offset: 0.0,
            rating_scale: 1.0,
            rating_noise: 0.0,
            feature_offset: 0.0,
            feature_noise: 0.0,
            feature_informativeness: 1.0,
            ratings_per_user: None,
            items_per_feature: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub ratings: RatingDataset,
    pub features: FeatureDataset,
    /// Ground-truth embeddings in the generator's index space.
    pub truth: EmbeddingSet,
    /// Which feature rows are informative probes.
    pub informative: Vec<bool>,
}

fn gaussian_rows(rows: usize, dim: usize, seed: u64, stream: u32) -> DenseMatrix {
    let scale = 1.0 / (dim as f64).sqrt();
    let mut m = DenseMatrix::zeros(rows, dim);
    for r in 0..rows {
        let mut rng = RngStream::new(seed, Domain::Synthetic, stream, r as u32).draws();
        for x in m.row_mut(r) {
            *x = scale * rng.next_normal();
        }
    }
    m
}

/// `k` distinct indices from `0..n`, uniformly (Floyd's algorithm), ascending.
fn choose_distinct(rng: &mut StreamRng, n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut chosen = BTreeSet::new();
    for upper in (n - k)..n {
        let t = rng.next_index(upper + 1);
        if !chosen.insert(t) {
            chosen.insert(upper);
        }
    }
    chosen.into_iter().collect()
}

/// Draws ground truth `U*`, `V*`, `F*` with i.i.d. `N(0, 1/d)` entries, then
/// ratings `offset + scale <u*_i, v*_j> + noise` on a per-user uniform sample of items, and
/// feature rows that are either noisy probes `<f*_k, v*_j> + noise` or noise
/// of matching marginal scale.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.num_users == 0 || spec.num_items == 0 || spec.dim == 0 {
        return Err(Error::InvalidParameter {
            name: "synthetic",
            reason: "users, items and dim must be at least 1".into(),
        });
    }
    if !(0.0..=1.0).contains(&spec.feature_informativeness) {
        return Err(Error::InvalidParameter {
            name: "feature_informativeness",
            reason: format!("{} outside [0, 1]", spec.feature_informativeness),
        });
    }
    if !(spec.rating_offset.is_finite() && spec.rating_scale.is_finite() && spec.feature_offset.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "rating_offset",
            reason: "must be finite".into(),
        });
    }
    if spec.rating_noise < 0.0 || spec.feature_noise < 0.0 {
        return Err(Error::InvalidParameter {
            name: "noise",
            reason: "standard deviations must be nonnegative".into(),
        });
    }
    let (m, n, s, d) = (spec.num_users, spec.num_items, spec.num_features, spec.dim);
    let users = gaussian_rows(m, d, spec.seed, USER_TRUTH);
    let items = gaussian_rows(n, d, spec.seed, ITEM_TRUTH);
    let features = gaussian_rows(s, d, spec.seed, FEATURE_TRUTH);

    let per_user = spec.ratings_per_user.unwrap_or(n);
    let mut rating_entries = Vec::with_capacity(m * per_user.min(n));
    for i in 0..m {
        let mut rng = RngStream::new(spec.seed, Domain::Synthetic, RATING_SAMPLES, i as u32).draws();
        for j in choose_distinct(&mut rng, n, per_user) {
            let noise = if spec.rating_noise > 0.0 {
                spec.rating_noise * rng.next_normal()
            } else {
                0.0
            };
            rating_entries.push(Entry::new(
                i,
                j,
                spec.rating_offset + spec.rating_scale * dot(users.row(i), items.row(j)) + noise,
            ));
        }
    }

    let pure_noise_scale = (1.0 / d as f64 + spec.feature_noise * spec.feature_noise).sqrt();
    let per_feature = spec.items_per_feature.unwrap_or(n);
    let mut informative = Vec::with_capacity(s);
    let mut feature_entries = Vec::new();
    for k in 0..s {
        let mut coin = RngStream::new(spec.seed, Domain::Synthetic, FEATURE_COINS, k as u32).draws();
        let is_probe = coin.next_f64() < spec.feature_informativeness;
        informative.push(is_probe);
        let mut rng = RngStream::new(spec.seed, Domain::Synthetic, FEATURE_SAMPLES, k as u32).draws();
        for j in choose_distinct(&mut rng, n, per_feature) {
            let value = if is_probe {
                let noise = if spec.feature_noise > 0.0 {
                    spec.feature_noise * rng.next_normal()
                } else {
                    0.0
                };
                spec.feature_offset + dot(features.row(k), items.row(j)) + noise
            } else {
                spec.feature_offset + pure_noise_scale * rng.next_normal()
            };
            feature_entries.push(Entry::new(k, j, value));
        }
    }

    Ok(SyntheticData {
        ratings: RatingDataset::from_entries(m, n, rating_entries)?,
        features: FeatureDataset::from_entries(s, n, feature_entries)?,
        truth: EmbeddingSet {
            users,
            items,
            features,
        },
        informative,
    })
}
