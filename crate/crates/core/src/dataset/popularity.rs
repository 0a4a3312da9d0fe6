//! Popularity buckets and the feature-bias diagnostics built on them.

use super::{FeatureDataset, RatingDataset};
use crate::error::{Error, Result};

/// Equal-item-count partition of items by descending training popularity.
/// Bucket 0 holds the most popular items.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityBuckets {
    assignment: Vec<usize>,
    sizes: Vec<usize>,
    rating_counts: Vec<usize>,
}

impl PopularityBuckets {
    pub fn num_buckets(&self) -> usize {
        self.sizes.len()
    }

    pub fn bucket_of(&self, item: usize) -> usize {
        self.assignment[item]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Training ratings falling in each bucket.
    pub fn rating_counts(&self) -> &[usize] {
        &self.rating_counts
    }

    /// Fraction of training ratings held by each bucket (all zero when there
    /// are no ratings).
    pub fn rating_shares(&self) -> Vec<f64> {
        let total: usize = self.rating_counts.iter().sum();
        self.rating_counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }
}

/// Sorts items by descending rating count (ties: ascending index) and cuts
/// the order into `num_buckets` contiguous groups whose sizes differ by at
/// most one. Items without ratings sort last and still get a bucket.
pub fn popularity_buckets(train: &RatingDataset, num_buckets: usize) -> Result<PopularityBuckets> {
    if num_buckets == 0 {
        return Err(Error::InvalidParameter {
            name: "num_buckets",
            reason: "must be at least 1".into(),
        });
    }
    let n = train.num_items();
    let counts: Vec<usize> = (0..n).map(|j| train.item_indices(j).len()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));

    let base = n / num_buckets;
    let extra = n % num_buckets;
    let sizes: Vec<usize> = (0..num_buckets).map(|b| base + usize::from(b < extra)).collect();

    let mut assignment = vec![0usize; n];
    let mut rating_counts = vec![0usize; num_buckets];
    let mut pos = 0;
    for (b, &size) in sizes.iter().enumerate() {
        for &item in &order[pos..pos + size] {
            assignment[item] = b;
            rating_counts[b] += counts[item];
        }
        pos += size;
    }
    Ok(PopularityBuckets {
        assignment,
        sizes,
        rating_counts,
    })
}

fn check_coverage(features: &FeatureDataset, buckets: &PopularityBuckets) -> Result<()> {
    if features.num_items() > buckets.assignment.len() {
        return Err(Error::DimensionMismatch(format!(
            "feature matrix covers {} items, buckets cover {}",
            features.num_items(),
            buckets.assignment.len()
        )));
    }
    Ok(())
}

/// Fraction of feature-item observations whose item falls in each bucket.
/// Sums to 1 unless the feature matrix is empty, in which case all zeros.
pub fn feature_density_by_bucket(
    features: &FeatureDataset,
    buckets: &PopularityBuckets,
) -> Result<Vec<f64>> {
    check_coverage(features, buckets)?;
    let mut counts = vec![0usize; buckets.num_buckets()];
    for e in features.entries() {
        counts[buckets.bucket_of(e.col)] += 1;
    }
    let total = features.len();
    Ok(counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect())
}

/// Per-feature share of occurrences in the top bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePopularity {
    /// `(feature index, occurrences, fraction in bucket 0)` for features with
    /// at least one occurrence.
    pub rows: Vec<(usize, usize, f64)>,
    /// Features with no occurrences, left out of `rows`.
    pub excluded: Vec<usize>,
}

pub fn fraction_popular_per_feature(
    features: &FeatureDataset,
    buckets: &PopularityBuckets,
) -> Result<FeaturePopularity> {
    check_coverage(features, buckets)?;
    let mut out = FeaturePopularity {
        rows: Vec::new(),
        excluded: Vec::new(),
    };
    for k in 0..features.num_features() {
        let (total, top) = features
            .feature_entries(k)
            .fold((0usize, 0usize), |(t, p), e| {
                (t + 1, p + usize::from(buckets.bucket_of(e.col) == 0))
            });
        if total == 0 {
            out.excluded.push(k);
        } else {
            out.rows.push((k, total, top as f64 / total as f64));
        }
    }
    Ok(out)
}
