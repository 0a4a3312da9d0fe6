//! Training loop for the private and non-private factorization modes.
//!
//! Each iteration broadcasts the current item embeddings, recomputes users
//! (client-side) and features (server-side, public data only) from them, and
//! then updates the items. In the private modes the item update goes through
//! [`dp_item_update`]; only item and feature embeddings leave the trainer.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::cmf::{
    als_sweep, cmf_loss, feature_update, solve_rows, user_update, CmfHyperparams, EmbeddingSet,
    WeightAssignment,
};
use crate::dataset::{FeatureDataset, RatingDataset};
use crate::error::{Error, Result};
use crate::evaluation::rmse;
use crate::linalg::{ridge_solve, DenseMatrix};
use crate::privacy::{
    clip_ratings, clip_user_embeddings, exact_feature_statistics, noisy_item_statistics,
    uniform_weights, validate_weights, ClipParams, Noise, PrivacyBudget,
};
use crate::rng::{Domain, RngStream};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "DPCMF_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NonprivateAls,
    NonprivateCmf,
    Dpals,
    Dpcmf,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::NonprivateAls, Mode::NonprivateCmf, Mode::Dpals, Mode::Dpcmf];

    pub fn is_private(self) -> bool {
        matches!(self, Mode::Dpals | Mode::Dpcmf)
    }

    pub fn uses_features(self) -> bool {
        matches!(self, Mode::NonprivateCmf | Mode::Dpcmf)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NonprivateAls => "nonprivate-als",
            Mode::NonprivateCmf => "nonprivate-cmf",
            Mode::Dpals => "dpals",
            Mode::Dpcmf => "dpcmf",
        }
    }

    /// The non-private mode with the same use of features.
    pub fn nonprivate_counterpart(self) -> Mode {
        if self.uses_features() {
            Mode::NonprivateCmf
        } else {
            Mode::NonprivateAls
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config {
                reason: "invalid-mode",
                detail: format!("unknown mode {s:?}"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `W_ij = sqrt(beta / |R_i|)`; `beta` comes from the budget in private
    /// modes and is 1 otherwise.
    Uniform,
    /// `W_ij = 1`. Non-private modes only.
    Unweighted,
}

/// All training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub dim: usize,
    pub iters: usize,
    pub lambda: f64,
    pub lambda_f: f64,
    pub alpha: f64,
    pub gamma_m: Option<f64>,
    pub gamma_u: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub seed: u64,
    /// Defaults to uniform in private modes and unweighted otherwise.
    pub weighting: Option<Weighting>,
    pub implicit_weight: f64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::NonprivateCmf,
            dim: 16,
            iters: 10,
            lambda: 1.0,
            lambda_f: 1.0,
            alpha: 1.0,
            gamma_m: None,
            gamma_u: None,
            epsilon: None,
            delta: None,
            seed: 0,
            weighting: None,
            implicit_weight: 0.0,
            init_scale: 1.0,
        }
    }
}

fn config_error(reason: &'static str, detail: impl Into<String>) -> Error {
    Error::Config {
        reason,
        detail: detail.into(),
    }
}

impl TrainConfig {
    /// Private-mode config with the given budget and clip bounds.
    pub fn private(mode: Mode, epsilon: f64, delta: f64, gamma_m: f64, gamma_u: f64) -> Self {
        Self {
            mode,
            epsilon: Some(epsilon),
            delta: Some(delta),
            gamma_m: Some(gamma_m),
            gamma_u: Some(gamma_u),
            ..Self::default()
        }
    }

    /// Same hyperparameters, non-private counterpart mode, privacy fields cleared.
    pub fn nonprivate_reference(&self) -> Self {
        Self {
            mode: self.mode.nonprivate_counterpart(),
            epsilon: None,
            delta: None,
            gamma_m: None,
            gamma_u: None,
            weighting: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(config_error("invalid-iterations", "iters must be at least 1"));
        }
        if self.dim == 0 {
            return Err(config_error("invalid-dimension", "dim must be at least 1"));
        }
        self.hyperparams()
            .validate()
            .map_err(|e| config_error("invalid-hyperparameter", e.to_string()))?;
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(config_error("invalid-hyperparameter", "init_scale must be nonnegative"));
        }
        let privacy_fields = [
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("gamma_m", self.gamma_m),
            ("gamma_u", self.gamma_u),
        ];
        if self.mode.is_private() {
            if let Some((name, _)) = privacy_fields.iter().find(|(_, v)| v.is_none()) {
                return Err(config_error(
                    "missing-privacy-parameter",
                    format!("mode {} requires {name}", self.mode),
                ));
            }
            self.budget()
                .map_err(|e| config_error("invalid-privacy-parameter", e.to_string()))?;
            self.clip_params()
                .map_err(|e| config_error("invalid-privacy-parameter", e.to_string()))?;
            if self.weighting == Some(Weighting::Unweighted) {
                return Err(config_error(
                    "unweighted-private-mode",
                    "private modes use uniform weights",
                ));
            }
            if self.implicit_weight > 0.0 {
                return Err(config_error(
                    "implicit-private-mode",
                    "implicit mode is only available without privacy",
                ));
            }
        } else if let Some((name, _)) = privacy_fields.iter().find(|(_, v)| v.is_some()) {
            return Err(config_error(
                "unexpected-privacy-parameter",
                format!("{name} is only meaningful in private modes"),
            ));
        }
        Ok(())
    }

    /// Non-fatal observations about the config.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.init_scale == 0.0 {
            w.push("init_scale is 0: initial item embeddings are all zero".to_owned());
        }
        if self.mode == Mode::Dpcmf && self.alpha == 0.0 {
            w.push("dpcmf with alpha = 0 ignores the feature matrix".to_owned());
        }
        w
    }

    pub fn hyperparams(&self) -> CmfHyperparams {
        CmfHyperparams {
            lambda: self.lambda,
            lambda_f: self.lambda_f,
            alpha: if self.mode.uses_features() { self.alpha } else { 0.0 },
            implicit_weight: self.implicit_weight,
        }
    }

    pub fn weighting(&self) -> Weighting {
        if self.mode.is_private() {
            Weighting::Uniform
        } else {
            self.weighting.unwrap_or(Weighting::Unweighted)
        }
    }

    pub fn budget(&self) -> Result<PrivacyBudget> {
        let epsilon = self.epsilon.ok_or_else(|| config_error("missing-privacy-parameter", "epsilon"))?;
        let delta = self.delta.ok_or_else(|| config_error("missing-privacy-parameter", "delta"))?;
        PrivacyBudget::new(epsilon, delta, self.iters)
    }

    pub fn clip_params(&self) -> Result<ClipParams> {
        let gm = self.gamma_m.ok_or_else(|| config_error("missing-privacy-parameter", "gamma_m"))?;
        let gu = self.gamma_u.ok_or_else(|| config_error("missing-privacy-parameter", "gamma_u"))?;
        ClipParams::new(gm, gu)
    }
}

/// Zero users and features; item rows i.i.d. `N(0, init_scale^2 / d)`.
pub fn init_embeddings(
    num_users: usize,
    num_items: usize,
    num_features: usize,
    dim: usize,
    init_scale: f64,
    seed: u64,
) -> EmbeddingSet {
    let mut emb = EmbeddingSet::zeros(num_users, num_items, num_features, dim);
    if init_scale == 0.0 {
        return emb;
    }
    let sd = init_scale / (dim as f64).sqrt();
    for j in 0..num_items {
        let mut rng = RngStream::new(seed, Domain::Initialization, 0, j as u32).draws();
        for x in emb.items.row_mut(j) {
            *x = sd * rng.next_normal();
        }
    }
    emb
}

/// Private item update.
///
/// Clips ratings to `[0, rating_cap]` and user rows to norm `user_norm_cap`,
/// then sets each `v_j = [A^_j + alpha A'_j]^{-1} [b^_j + alpha b'_j]` from the
/// noisy rating statistics and the exact feature statistics. With
/// `alpha = 0` the feature terms are dropped entirely.
#[allow(clippy::too_many_arguments)]
pub fn dp_item_update(
    ratings: &RatingDataset,
    users: &DenseMatrix,
    feature_emb: &DenseMatrix,
    features: &FeatureDataset,
    weights: &WeightAssignment,
    hp: &CmfHyperparams,
    clip: &ClipParams,
    noise: Noise,
    iteration: u32,
) -> Result<DenseMatrix> {
    weights.check_aligned(ratings)?;
    let clipped = clip_ratings(ratings, clip.rating_cap).ratings;
    let users = clip_user_embeddings(users, clip.user_norm_cap);
    let d = users.cols();
    solve_rows(ratings.num_items(), d, |j| {
        let noisy = noisy_item_statistics(j, &users, &clipped, weights, hp.lambda, clip, noise, iteration)?;
        if hp.alpha == 0.0 {
            return ridge_solve(&noisy.a_hat, &noisy.b_hat, 0.0);
        }
        let exact = exact_feature_statistics(j, feature_emb, features, hp.lambda_f);
        let mut a = noisy.a_hat;
        a.add_scaled(&exact.a_prime, hp.alpha);
        let mut b = noisy.b_hat;
        b.add_scaled(&exact.b_prime, hp.alpha);
        ridge_solve(&a, &b, 0.0)
    })
}

/// Each user's embedding recomputed from their own training ratings against
/// released item embeddings (client-side, no clipping or noise).
pub fn evaluate_user_embeddings(items: &DenseMatrix, train: &RatingDataset, lambda: f64) -> Result<DenseMatrix> {
    solve_rows(train.num_users(), items.cols(), |i| user_update(i, items, train, lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Training loss; only reported in non-private modes.
    pub train_loss: Option<f64>,
    pub validation_rmse: Option<f64>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub budget: Option<PrivacyBudget>,
    pub records: Vec<IterationRecord>,
    /// Iteration the run started from (0 unless resumed).
    pub start_iteration: usize,
    /// Last completed iteration; `config.iters` unless stopped early.
    pub end_iteration: usize,
    pub items: DenseMatrix,
    pub features: DenseMatrix,
    /// Only present in non-private modes.
    pub users: Option<DenseMatrix>,
    pub negative_ratings_clamped: usize,
    pub warnings: Vec<String>,
}

impl TrainReport {
    /// Checks the release rules: no user embeddings in private modes and one
    /// record per iteration.
    pub fn audit(&self) -> Result<()> {
        if self.config.mode.is_private() && self.users.is_some() {
            return Err(Error::SensitivityViolation(
                "private report carries user embeddings".into(),
            ));
        }
        if self.config.mode.is_private() && self.records.iter().any(|r| r.train_loss.is_some()) {
            return Err(Error::SensitivityViolation(
                "private report carries a noise-free training loss".into(),
            ));
        }
        if self.records.len() != self.end_iteration - self.start_iteration {
            return Err(Error::InvalidDataset(format!(
                "{} records for iterations {}..{}",
                self.records.len(),
                self.start_iteration,
                self.end_iteration
            )));
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.config.clone(),
            self.end_iteration,
            self.items.clone(),
            self.features.clone(),
            self.users.clone(),
        )
    }
}

/// Knobs that do not change the math of a run.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Overrides the noise source. `Some(Noise::Zero)` disables the privacy
    /// mechanism and is meant for tests only.
    pub noise: Option<Noise>,
    /// Worker cap; falls back to `DPCMF_THREADS`, then rayon's default.
    pub threads: Option<usize>,
    /// Continue from a saved state instead of a fresh initialization.
    pub resume: Option<Checkpoint>,
    /// Stop after this iteration (still under the full `iters` budget), e.g.
    /// to checkpoint and continue later.
    pub stop_after: Option<usize>,
}

/// Worker cap from `DPCMF_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

pub(crate) fn with_workers<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads.or_else(threads_from_env) {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| config_error("invalid-threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

pub fn train(
    config: &TrainConfig,
    train: &RatingDataset,
    validation: Option<&RatingDataset>,
    features: Option<&FeatureDataset>,
) -> Result<TrainReport> {
    train_with(config, train, validation, features, &TrainOptions::default())
}

pub fn train_with(
    config: &TrainConfig,
    train: &RatingDataset,
    validation: Option<&RatingDataset>,
    features: Option<&FeatureDataset>,
    options: &TrainOptions,
) -> Result<TrainReport> {
    config.validate()?;
    let empty;
    let features = match features {
        Some(f) if config.mode.uses_features() => f,
        _ => {
            empty = FeatureDataset::empty(train.num_items());
            &empty
        }
    };
    if features.num_items() != train.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "features cover {} items, ratings {}",
            features.num_items(),
            train.num_items()
        )));
    }
    if let Some(v) = validation {
        if (v.num_users(), v.num_items()) != (train.num_users(), train.num_items()) {
            return Err(Error::DimensionMismatch(
                "validation ratings do not share the training vocabulary".into(),
            ));
        }
    }
    with_workers(options.threads, || run(config, train, validation, features, options))?
}

fn run(
    config: &TrainConfig,
    train: &RatingDataset,
    validation: Option<&RatingDataset>,
    features: &FeatureDataset,
    options: &TrainOptions,
) -> Result<TrainReport> {
    let hp = config.hyperparams();
    let private = config.mode.is_private();
    let d = config.dim;

    let budget = if private { Some(config.budget()?) } else { None };
    let weights = match config.weighting() {
        Weighting::Unweighted => WeightAssignment::unweighted(train),
        Weighting::Uniform => uniform_weights(train, budget.map_or(1.0, |b| b.beta))?,
    };
    if let Some(b) = &budget {
        validate_weights(&weights, train, b.beta)?.into_result()?;
    }
    let clip = if private { Some(config.clip_params()?) } else { None };
    let noise = options.noise.unwrap_or(Noise::Gaussian { seed: config.seed });

    let mut emb = init_embeddings(
        train.num_users(),
        train.num_items(),
        features.num_features(),
        d,
        config.init_scale,
        config.seed,
    );
    let start = match &options.resume {
        None => 0,
        Some(ck) => {
            ck.check_compatible(config, train.num_items())?;
            emb.items = ck.items.clone();
            ck.iteration
        }
    };

    let negative_ratings_clamped = if private {
        train.entries().iter().filter(|e| e.value < 0.0).count()
    } else {
        0
    };

    let end = options.stop_after.map_or(config.iters, |s| s.min(config.iters)).max(start);
    let mut records = Vec::with_capacity(end - start);
    for t in (start + 1)..=end {
        let began = Instant::now();
        if private {
            let items = &emb.items;
            let (users, feats) = rayon::join(
                || evaluate_user_embeddings(items, train, hp.lambda),
                || {
                    solve_rows(features.num_features(), d, |k| {
                        feature_update(k, items, features, hp.lambda_f)
                    })
                },
            );
            emb.users = users?;
            emb.features = feats?;
            let clip = clip.as_ref().expect("private modes carry clip params");
            emb.items = dp_item_update(
                train,
                &emb.users,
                &emb.features,
                features,
                &weights,
                &hp,
                clip,
                noise,
                t as u32,
            )?;
        } else {
            als_sweep(&mut emb, train, features, &weights, &hp)?;
        }

        let train_loss = if private {
            None
        } else {
            Some(cmf_loss(&emb, train, features, &weights, &hp)?)
        };
        let validation_rmse = match validation {
            Some(v) if !v.is_empty() => {
                let users = if private {
                    evaluate_user_embeddings(&emb.items, train, hp.lambda)?
                } else {
                    emb.users.clone()
                };
                Some(rmse(&users, &emb.items, v)?)
            }
            _ => None,
        };
        records.push(IterationRecord {
            iteration: t,
            train_loss,
            validation_rmse,
            wall_time_secs: began.elapsed().as_secs_f64(),
        });
    }

    let report = TrainReport {
        config: config.clone(),
        budget,
        records,
        start_iteration: start,
        end_iteration: end,
        items: emb.items,
        features: emb.features,
        users: (!private).then_some(emb.users),
        negative_ratings_clamped,
        warnings: config.warnings(),
    };
    report.audit()?;
    Ok(report)
}
