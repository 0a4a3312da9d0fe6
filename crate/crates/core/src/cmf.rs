//! Collective matrix factorization: the joint loss and its closed-form
//! alternating updates.
//!
//! The loss is
//!
//! ```text
//! L(U, V, F) = sum_{(i,j) in R} W_ij (<u_i, v_j> - M_ij)^2
//!            + alpha * sum_{(k,j) in S} (<f_k, v_j> - S_kj)^2
//!            + lambda (|U|^2 + |V|^2) + lambda_f |F|^2
//! ```
//!
//! In implicit mode (`implicit_weight = w0 > 0`) both matrices are treated as
//! zero-filled, and `w0 * (|U V^T - M~|^2 + |F V^T - S~|^2)` is added. Observed
//! entries then carry weight `W_ij + w0` toward their value and every
//! unobserved entry carries `w0` toward zero. The updates use the Gramian
//! trick: the global Gramian of the opposing side, scaled by `w0`, is added to
//! each row system instead of materializing the unobserved entries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureDataset, RatingDataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, ridge_solve, DenseMatrix, DenseVector};

/// User, item and feature embeddings, one row per entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub users: DenseMatrix,
    pub items: DenseMatrix,
    pub features: DenseMatrix,
}

impl EmbeddingSet {
    pub fn zeros(num_users: usize, num_items: usize, num_features: usize, dim: usize) -> Self {
        Self {
            users: DenseMatrix::zeros(num_users, dim),
            items: DenseMatrix::zeros(num_items, dim),
            features: DenseMatrix::zeros(num_features, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.items.cols()
    }
}

/// Per-rating weights, aligned with `RatingDataset::entries()`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAssignment(Vec<f64>);

impl WeightAssignment {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: format!("weights must be finite and nonnegative, found {w}"),
            });
        }
        Ok(Self(weights))
    }

    /// `W_ij = 1` everywhere.
    pub fn unweighted(ratings: &RatingDataset) -> Self {
        Self(vec![1.0; ratings.len()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, rating_index: usize) -> f64 {
        self.0[rating_index]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|w| w * factor).collect())
    }

    pub fn check_aligned(&self, ratings: &RatingDataset) -> Result<()> {
        if self.0.len() != ratings.len() {
            return Err(Error::MisalignedWeights {
                expected: ratings.len(),
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmfHyperparams {
    /// Ridge weight on user and item embeddings.
    pub lambda: f64,
    /// Ridge weight on feature embeddings.
    pub lambda_f: f64,
    /// Weight of the feature-fit term relative to the rating fit.
    pub alpha: f64,
    /// Weight on unobserved entries; 0 selects explicit mode.
    pub implicit_weight: f64,
}

impl Default for CmfHyperparams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lambda_f: 1.0,
            alpha: 0.0,
            implicit_weight: 0.0,
        }
    }
}

impl CmfHyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda_f", self.lambda_f),
            ("alpha", self.alpha),
            ("implicit_weight", self.implicit_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and nonnegative, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn is_implicit(&self) -> bool {
        self.implicit_weight > 0.0
    }
}

/// Global Gramian `X^T X` of an embedding matrix, used by the implicit-mode
/// updates.
pub fn implicit_gramian(embeddings: &DenseMatrix) -> DenseMatrix {
    embeddings.gramian()
}

fn squared_norm(m: &DenseMatrix) -> f64 {
    m.as_slice().iter().map(|x| x * x).sum()
}

/// `|A B^T|_F^2` via `<A^T A, B^T B>`.
fn product_norm_sq(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let ga = a.gramian();
    let gb = b.gramian();
    dot(ga.as_slice(), gb.as_slice())
}

/// Evaluates the collective loss (see module docs).
pub fn cmf_loss(
    emb: &EmbeddingSet,
    ratings: &RatingDataset,
    features: &FeatureDataset,
    weights: &WeightAssignment,
    hp: &CmfHyperparams,
) -> Result<f64> {
    weights.check_aligned(ratings)?;
    check_shapes(emb, ratings, features)?;
    let w0 = hp.implicit_weight;

    let mut rating_fit = 0.0;
    let mut observed_pred_sq = 0.0;
    let mut observed_resid_sq = 0.0;
    for (idx, e) in ratings.entries().iter().enumerate() {
        let p = dot(emb.users.row(e.row), emb.items.row(e.col));
        let r = p - e.value;
        rating_fit += weights.get(idx) * r * r;
        observed_pred_sq += p * p;
        observed_resid_sq += r * r;
    }

    let mut feature_fit = 0.0;
    let mut observed_fpred_sq = 0.0;
    for e in features.entries() {
        let q = dot(emb.features.row(e.row), emb.items.row(e.col));
        let r = q - e.value;
        feature_fit += r * r;
        observed_fpred_sq += q * q;
    }

    let mut loss = rating_fit
        + hp.alpha * feature_fit
        + hp.lambda * (squared_norm(&emb.users) + squared_norm(&emb.items))
        + hp.lambda_f * squared_norm(&emb.features);

    if w0 > 0.0 {
        let users_side =
            product_norm_sq(&emb.users, &emb.items) - observed_pred_sq + observed_resid_sq;
        let features_side =
            product_norm_sq(&emb.features, &emb.items) - observed_fpred_sq + feature_fit;
        loss += w0 * (users_side + features_side);
    }
    Ok(loss)
}

fn check_shapes(emb: &EmbeddingSet, ratings: &RatingDataset, features: &FeatureDataset) -> Result<()> {
    let d = emb.dim();
    let ok = emb.users.rows() == ratings.num_users()
        && emb.items.rows() == ratings.num_items()
        && emb.features.rows() == features.num_features()
        && features.num_items() == ratings.num_items()
        && emb.users.cols() == d
        && emb.features.cols() == d;
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "embeddings ({}, {}, {}) x {d} vs ratings {}x{} and features {}x{}",
            emb.users.rows(),
            emb.items.rows(),
            emb.features.rows(),
            ratings.num_users(),
            ratings.num_items(),
            features.num_features(),
            features.num_items()
        )))
    }
}

/// Client-side user update: unweighted ridge regression of the user's
/// ratings on the item embeddings.
pub fn user_update(
    user: usize,
    items: &DenseMatrix,
    ratings: &RatingDataset,
    lambda: f64,
) -> Result<DenseVector> {
    let d = items.cols();
    if ratings.user_indices(user).is_empty() {
        return Ok(DenseVector::zeros(d));
    }
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = DenseVector::zeros(d);
    for e in ratings.user_ratings(user) {
        let v = items.row(e.col);
        a.add_outer_upper(v, 1.0);
        b.add_scaled(v, e.value);
    }
    a.mirror_upper();
    ridge_solve(&a, &b, lambda)
}

/// Exact minimizer of the loss over one user row, with weights and (when
/// `item_gramian` is given with `implicit_weight > 0`) the implicit term.
pub fn weighted_user_update(
    user: usize,
    items: &DenseMatrix,
    ratings: &RatingDataset,
    weights: &WeightAssignment,
    hp: &CmfHyperparams,
    item_gramian: Option<&DenseMatrix>,
) -> Result<DenseVector> {
    let d = items.cols();
    let idx = ratings.user_indices(user);
    if idx.is_empty() {
        return Ok(DenseVector::zeros(d));
    }
    let w0 = hp.implicit_weight;
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = DenseVector::zeros(d);
    for &r in idx {
        let e = &ratings.entries()[r];
        let v = items.row(e.col);
        let w = weights.get(r);
        a.add_outer_upper(v, w);
        b.add_scaled(v, (w + w0) * e.value);
    }
    a.mirror_upper();
    if w0 > 0.0 {
        a.add_scaled(implicit_term(item_gramian)?, w0);
    }
    ridge_solve(&a, &b, hp.lambda)
}

fn implicit_term(g: Option<&DenseMatrix>) -> Result<&DenseMatrix> {
    g.ok_or_else(|| Error::InvalidParameter {
        name: "implicit_weight",
        reason: "implicit mode needs the opposing-side Gramian".into(),
    })
}

/// Server-side feature update in its printed form:
/// `f_k = [sum v_j v_j^T + lambda_f I]^{-1} [sum S_kj v_j]`.
pub fn feature_update(
    feature: usize,
    items: &DenseMatrix,
    features: &FeatureDataset,
    lambda_f: f64,
) -> Result<DenseVector> {
    let d = items.cols();
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = DenseVector::zeros(d);
    let mut any = false;
    for e in features.feature_entries(feature) {
        let v = items.row(e.col);
        a.add_outer_upper(v, 1.0);
        b.add_scaled(v, e.value);
        any = true;
    }
    if !any {
        return Ok(DenseVector::zeros(d));
    }
    a.mirror_upper();
    ridge_solve(&a, &b, lambda_f)
}

/// Exact minimizer of the loss over one feature row:
/// `[alpha sum v v^T + w0 V^T V + lambda_f I] f = (alpha + w0) sum S_kj v_j`.
///
/// Differs from [`feature_update`] only by the `alpha` scaling of the fit
/// term (and the implicit term); the two agree when `alpha = 1`, `w0 = 0`.
pub fn collective_feature_update(
    feature: usize,
    items: &DenseMatrix,
    features: &FeatureDataset,
    hp: &CmfHyperparams,
    item_gramian: Option<&DenseMatrix>,
) -> Result<DenseVector> {
    let d = items.cols();
    let w0 = hp.implicit_weight;
    let mut any = false;
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = DenseVector::zeros(d);
    for e in features.feature_entries(feature) {
        let v = items.row(e.col);
        a.add_outer_upper(v, hp.alpha);
        b.add_scaled(v, (hp.alpha + w0) * e.value);
        any = true;
    }
    // With no fit term the loss only sees lambda_f |f|^2.
    if !any || hp.alpha + w0 == 0.0 {
        return Ok(DenseVector::zeros(d));
    }
    a.mirror_upper();
    if w0 > 0.0 {
        a.add_scaled(implicit_term(item_gramian)?, w0);
    }
    ridge_solve(&a, &b, hp.lambda_f)
}

/// Gramians of the user and feature embeddings for implicit item updates.
#[derive(Debug, Clone)]
pub struct ItemSideGramians {
    pub users: DenseMatrix,
    pub features: DenseMatrix,
}

/// Exact minimizer of the loss over one item row:
/// `[sum W u u^T + alpha sum f f^T + lambda I]^{-1} [sum W M u + alpha sum S f]`,
/// plus the implicit terms when enabled.
#[allow(clippy::too_many_arguments)]
pub fn item_update_nonprivate(
    item: usize,
    users: &DenseMatrix,
    feature_emb: &DenseMatrix,
    ratings: &RatingDataset,
    features: &FeatureDataset,
    weights: &WeightAssignment,
    hp: &CmfHyperparams,
    gramians: Option<&ItemSideGramians>,
) -> Result<DenseVector> {
    let d = users.cols();
    let w0 = hp.implicit_weight;
    let rating_idx = ratings.item_indices(item);
    let has_features = features.item_entries(item).next().is_some();
    if rating_idx.is_empty() && !has_features {
        return Ok(DenseVector::zeros(d));
    }
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = DenseVector::zeros(d);
    for &r in rating_idx {
        let e = &ratings.entries()[r];
        let u = users.row(e.row);
        let w = weights.get(r);
        a.add_outer_upper(u, w);
        b.add_scaled(u, (w + w0) * e.value);
    }
    for e in features.item_entries(item) {
        let f = feature_emb.row(e.row);
        a.add_outer_upper(f, hp.alpha);
        b.add_scaled(f, (hp.alpha + w0) * e.value);
    }
    a.mirror_upper();
    if w0 > 0.0 {
        let g = gramians.ok_or_else(|| Error::InvalidParameter {
            name: "implicit_weight",
            reason: "implicit mode needs user and feature Gramians".into(),
        })?;
        a.add_scaled(&g.users, w0);
        a.add_scaled(&g.features, w0);
    }
    ridge_solve(&a, &b, hp.lambda)
}

/// Solves `rows` independent row problems in parallel and stacks the results.
/// Output does not depend on the number of workers.
pub(crate) fn solve_rows<F>(rows: usize, dim: usize, solve: F) -> Result<DenseMatrix>
where
    F: Fn(usize) -> Result<DenseVector> + Sync + Send,
{
    let solved: Vec<DenseVector> = (0..rows).into_par_iter().map(solve).collect::<Result<_>>()?;
    let mut out = DenseMatrix::zeros(rows, dim);
    for (r, v) in solved.iter().enumerate() {
        out.set_row(r, v);
    }
    Ok(out)
}

/// One full non-private sweep: users and features from the current items
/// (independently), then items from the new users and features.
pub fn als_sweep(
    emb: &mut EmbeddingSet,
    ratings: &RatingDataset,
    features: &FeatureDataset,
    weights: &WeightAssignment,
    hp: &CmfHyperparams,
) -> Result<()> {
    hp.validate()?;
    weights.check_aligned(ratings)?;
    check_shapes(emb, ratings, features)?;
    let d = emb.dim();
    let item_gram = hp.is_implicit().then(|| implicit_gramian(&emb.items));

    let items = &emb.items;
    let (users, feats) = rayon::join(
        || {
            solve_rows(ratings.num_users(), d, |i| {
                weighted_user_update(i, items, ratings, weights, hp, item_gram.as_ref())
            })
        },
        || {
            solve_rows(features.num_features(), d, |k| {
                collective_feature_update(k, items, features, hp, item_gram.as_ref())
            })
        },
    );
    emb.users = users?;
    emb.features = feats?;

    let gramians = hp.is_implicit().then(|| ItemSideGramians {
        users: implicit_gramian(&emb.users),
        features: implicit_gramian(&emb.features),
    });
    let (u, f) = (&emb.users, &emb.features);
    emb.items = solve_rows(ratings.num_items(), d, |j| {
        item_update_nonprivate(j, u, f, ratings, features, weights, hp, gramians.as_ref())
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Entry;

    fn toy() -> (RatingDataset, FeatureDataset) {
        let r = RatingDataset::from_entries(
            2,
            2,
            vec![Entry::new(0, 0, 3.0), Entry::new(0, 1, 1.0), Entry::new(1, 1, 2.0)],
        )
        .unwrap();
        let f = FeatureDataset::from_entries(1, 2, vec![Entry::new(0, 0, 1.0), Entry::new(0, 1, -1.0)])
            .unwrap();
        (r, f)
    }

    #[test]
    fn zero_embeddings_loss_is_weighted_square_sum() {
        let (r, f) = toy();
        let emb = EmbeddingSet::zeros(2, 2, 1, 3);
        let w = WeightAssignment::new(vec![0.5, 2.0, 1.0]).unwrap();
        let hp = CmfHyperparams {
            lambda: 0.0,
            lambda_f: 0.0,
            alpha: 0.0,
            implicit_weight: 0.0,
        };
        let loss = cmf_loss(&emb, &r, &f, &w, &hp).unwrap();
        assert_eq!(loss, 0.5 * 9.0 + 2.0 * 1.0 + 1.0 * 4.0);
    }

    #[test]
    fn user_update_examples() {
        let r = RatingDataset::from_entries(2, 1, vec![Entry::new(0, 0, 4.0)]).unwrap();
        let items = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let u = user_update(0, &items, &r, 1.0).unwrap();
        assert_eq!(&*u, &[2.0, 0.0]);
        assert_eq!(&*user_update(1, &items, &r, 0.0).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn feature_update_examples() {
        let f = FeatureDataset::from_entries(
            3,
            1,
            vec![Entry::new(0, 0, 1.0), Entry::new(2, 0, 1.0)],
        )
        .unwrap();
        let items = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(&*feature_update(0, &items, &f, 1.0).unwrap(), &[0.5, 0.0]);
        assert_eq!(&*feature_update(1, &items, &f, 1.0).unwrap(), &[0.0, 0.0]);
        assert_eq!(
            feature_update(0, &items, &f, 1.0).unwrap(),
            feature_update(2, &items, &f, 1.0).unwrap()
        );
    }

    #[test]
    fn cold_item_learns_from_features_only() {
        let r = RatingDataset::from_entries(1, 2, vec![Entry::new(0, 0, 1.0)]).unwrap();
        let f = FeatureDataset::from_entries(1, 2, vec![Entry::new(0, 1, 2.0)]).unwrap();
        let users = DenseMatrix::from_rows(&[[0.3, 0.1]]).unwrap();
        let feats = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let w = WeightAssignment::unweighted(&r);
        let hp = CmfHyperparams {
            lambda: 1.0,
            lambda_f: 1.0,
            alpha: 1.0,
            implicit_weight: 0.0,
        };
        let v = item_update_nonprivate(1, &users, &feats, &r, &f, &w, &hp, None).unwrap();
        assert_eq!(&*v, &[1.0, 0.0]);

        let empty = FeatureDataset::empty(2);
        let r2 = RatingDataset::from_entries(1, 2, vec![Entry::new(0, 0, 1.0)]).unwrap();
        let v = item_update_nonprivate(1, &users, &DenseMatrix::zeros(0, 2), &r2, &empty, &w, &hp, None)
            .unwrap();
        assert_eq!(&*v, &[0.0, 0.0]);
    }

    #[test]
    fn implicit_off_matches_explicit_bitwise() {
        let (r, f) = toy();
        let items = DenseMatrix::from_rows(&[[0.2, -0.4], [1.1, 0.3]]).unwrap();
        let w = WeightAssignment::new(vec![0.7, 1.3, 0.4]).unwrap();
        let hp = CmfHyperparams {
            lambda: 0.5,
            lambda_f: 0.2,
            alpha: 0.8,
            implicit_weight: 0.0,
        };
        let g = implicit_gramian(&items);
        for i in 0..2 {
            assert_eq!(
                weighted_user_update(i, &items, &r, &w, &hp, None).unwrap(),
                weighted_user_update(i, &items, &r, &w, &hp, Some(&g)).unwrap()
            );
        }
        assert_eq!(
            collective_feature_update(0, &items, &f, &hp, None).unwrap(),
            collective_feature_update(0, &items, &f, &hp, Some(&g)).unwrap()
        );
    }
}
