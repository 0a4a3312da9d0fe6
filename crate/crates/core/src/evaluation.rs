//! Prediction-error metrics.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dataset::{PopularityBuckets, RatingDataset};
use crate::error::{Error, Result};
use crate::experiment::{scoring_users, ExperimentData};
use crate::linalg::{dot, DenseMatrix};
use crate::trainer::{train, TrainConfig};

fn check_dims(users: &DenseMatrix, items: &DenseMatrix, test: &RatingDataset) -> Result<()> {
    if users.rows() < test.num_users() || items.rows() < test.num_items() || users.cols() != items.cols() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings {}x{} / {}x{} for a {}x{} test matrix",
            users.rows(),
            users.cols(),
            items.rows(),
            items.cols(),
            test.num_users(),
            test.num_items()
        )));
    }
    Ok(())
}

/// Root mean squared error of raw inner-product predictions.
pub fn rmse(users: &DenseMatrix, items: &DenseMatrix, test: &RatingDataset) -> Result<f64> {
    rmse_with_clamp(users, items, test, None)
}

/// [`rmse`] with predictions optionally clamped to `[lo, hi]`.
pub fn rmse_with_clamp(
    users: &DenseMatrix,
    items: &DenseMatrix,
    test: &RatingDataset,
    clamp: Option<(f64, f64)>,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyMetric("rmse"));
    }
    check_dims(users, items, test)?;
    let sse: f64 = test
        .entries()
        .iter()
        .map(|e| {
            let mut p = dot(users.row(e.row), items.row(e.col));
            if let Some((lo, hi)) = clamp {
                p = p.clamp(lo, hi);
            }
            (e.value - p).powi(2)
        })
        .sum();
    Ok((sse / test.len() as f64).sqrt())
}

/// RMSE restricted to each popularity bucket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlicedRmse {
    /// `None` for buckets without test entries.
    pub rmse: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl SlicedRmse {
    /// `sqrt(sum_b count_b rmse_b^2 / sum_b count_b)`, which equals the global RMSE.
    pub fn recombined(&self) -> Option<f64> {
        let total: usize = self.counts.iter().sum();
        if total == 0 {
            return None;
        }
        let sse: f64 = self
            .rmse
            .iter()
            .zip(&self.counts)
            .filter_map(|(r, &c)| r.map(|r| c as f64 * r * r))
            .sum();
        Some((sse / total as f64).sqrt())
    }
}

pub fn sliced_rmse(
    users: &DenseMatrix,
    items: &DenseMatrix,
    test: &RatingDataset,
    buckets: &PopularityBuckets,
) -> Result<SlicedRmse> {
    check_dims(users, items, test)?;
    if buckets.assignment().len() < test.num_items() {
        return Err(Error::DimensionMismatch("test items without a bucket".into()));
    }
    let b = buckets.num_buckets();
    let mut sse = vec![0.0; b];
    let mut counts = vec![0usize; b];
    for e in test.entries() {
        let k = buckets.bucket_of(e.col);
        sse[k] += (e.value - dot(users.row(e.row), items.row(e.col))).powi(2);
        counts[k] += 1;
    }
    let rmse = sse
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| (s / c as f64).sqrt()))
        .collect();
    Ok(SlicedRmse { rmse, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetFingerprint {
    pub name: String,
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub hash: String,
}

impl DatasetFingerprint {
    pub fn of(name: &str, ds: &RatingDataset) -> Self {
        Self {
            name: name.to_owned(),
            users: ds.num_users(),
            items: ds.num_items(),
            ratings: ds.len(),
            hash: format!("{:016x}", ds.fingerprint()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub global_rmse: f64,
    pub sliced: SlicedRmse,
    pub test_size: usize,
    /// Test entries whose user has no training ratings (predicted as 0).
    pub cold_user_entries: usize,
    pub config: Option<TrainConfig>,
    pub datasets: Vec<DatasetFingerprint>,
}

/// Allowed gap between the global RMSE and the recombined bucket RMSEs.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// Global and sliced RMSE of `(users, items)` on `test`. Fails if the
/// buckets do not recombine to the global value.
pub fn evaluate(
    users: &DenseMatrix,
    items: &DenseMatrix,
    train: &RatingDataset,
    test: &RatingDataset,
    buckets: &PopularityBuckets,
    config: Option<&TrainConfig>,
) -> Result<MetricReport> {
    let global_rmse = rmse(users, items, test)?;
    if !global_rmse.is_finite() {
        return Err(Error::NonFinite("test rmse".into()));
    }
    let sliced = sliced_rmse(users, items, test, buckets)?;
    let recombined = sliced.recombined().unwrap_or(f64::NAN);
    if (recombined - global_rmse).abs() > IDENTITY_TOLERANCE * global_rmse.max(1.0) {
        return Err(Error::MetricInconsistency(format!(
            "global {global_rmse}, recombined buckets {recombined}"
        )));
    }
    let cold_user_entries = test
        .entries()
        .iter()
        .filter(|e| train.user_indices(e.row).is_empty())
        .count();
    Ok(MetricReport {
        global_rmse,
        sliced,
        test_size: test.len(),
        cold_user_entries,
        config: config.cloned(),
        datasets: vec![
            DatasetFingerprint::of("train", train),
            DatasetFingerprint::of("test", test),
        ],
    })
}

fn format_value(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => "none".to_owned(),
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `key=value` pairs for every field of a config, defaults expanded.
pub fn config_pairs(config: &TrainConfig) -> Vec<(String, String)> {
    let value = serde_json::to_value(config).expect("config serializes");
    value
        .as_object()
        .expect("config is a struct")
        .iter()
        .map(|(k, v)| (k.clone(), format_value(v)))
        .collect()
}

impl MetricReport {
    /// One self-describing `key=value` record per line.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "record=global rmse={} count={} cold_user_entries={}",
            self.global_rmse, self.test_size, self.cold_user_entries
        )
        .unwrap();
        for (b, (r, c)) in self.sliced.rmse.iter().zip(&self.sliced.counts).enumerate() {
            let r = r.map_or_else(|| "absent".to_owned(), |r| r.to_string());
            writeln!(out, "record=bucket bucket={b} rmse={r} count={c}").unwrap();
        }
        for d in &self.datasets {
            writeln!(
                out,
                "record=dataset name={} users={} items={} ratings={} hash={}",
                d.name, d.users, d.items, d.ratings, d.hash
            )
            .unwrap();
        }
        if let Some(cfg) = &self.config {
            let pairs: Vec<String> = config_pairs(cfg).into_iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(out, "record=config {}", pairs.join(" ")).unwrap();
        }
        out
    }

    /// `slice,count,rmse` table; absent buckets have an empty rmse field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slice,count,rmse\n");
        writeln!(out, "all,{},{}", self.test_size, self.global_rmse).unwrap();
        for (b, (r, c)) in self.sliced.rmse.iter().zip(&self.sliced.counts).enumerate() {
            let r = r.map(|r| r.to_string()).unwrap_or_default();
            writeln!(out, "{b},{c},{r}").unwrap();
        }
        out
    }
}

/// One row of a privacy-utility table; `epsilon = None` is the non-private
/// reference (printed as `inf`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub epsilon: Option<f64>,
    pub test_rmse: f64,
}

/// Trains one model per epsilon (all other settings from `base`) plus the
/// non-private reference, and reports test RMSE for each.
///
/// Private runs are scored with user embeddings recomputed from the
/// training ratings against the released items.
pub fn privacy_utility_curve(
    base: &TrainConfig,
    epsilons: &[f64],
    data: &ExperimentData,
) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::with_capacity(epsilons.len() + 1);
    for &eps in epsilons {
        let cfg = TrainConfig {
            epsilon: Some(eps),
            ..base.clone()
        };
        out.push(CurvePoint {
            epsilon: Some(eps),
            test_rmse: test_rmse(&cfg, data)?,
        });
    }
    out.push(CurvePoint {
        epsilon: None,
        test_rmse: test_rmse(&base.nonprivate_reference(), data)?,
    });
    Ok(out)
}

fn test_rmse(cfg: &TrainConfig, data: &ExperimentData) -> Result<f64> {
    let report = train(cfg, &data.train, None, data.features.as_ref())?;
    let users = scoring_users(&report, &data.train)?;
    rmse(&users, &report.items, &data.test)
}

/// Formats a curve as `epsilon,test_rmse` CSV.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("epsilon,test_rmse\n");
    for p in points {
        let eps = p.epsilon.map_or_else(|| "inf".to_owned(), |e| e.to_string());
        writeln!(out, "{eps},{}", p.test_rmse).unwrap();
    }
    out
}
