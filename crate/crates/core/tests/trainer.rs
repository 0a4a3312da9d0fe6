mod common;

use common::*;
use dpcmf::checkpoint::Checkpoint;
use dpcmf::cmf::{item_update_nonprivate, CmfHyperparams, WeightAssignment};
use dpcmf::dataset::{generate_synthetic, Entry, RatingDataset, SyntheticSpec};
use dpcmf::linalg::DenseMatrix;
use dpcmf::privacy::{clip_user_embeddings, exact_feature_statistics, uniform_weights, ClipParams, Noise};
use dpcmf::trainer::{
    dp_item_update, evaluate_user_embeddings, train, train_with, Mode, TrainConfig, TrainOptions,
};
use dpcmf::{Error, ErrorKind};

/// Users already inside the norm ball, ratings inside `[0, cap]`: clipping is a no-op.
fn zero_noise_fixture(seed: u64) -> (RatingDataset, DenseMatrix, dpcmf::FeatureDataset, DenseMatrix, WeightAssignment) {
    let ratings = random_ratings(10, 5, 0.6, 0.0, 5.0, seed);
    let mut r = rng(seed, 11);
    let users = clip_user_embeddings(&gaussian_matrix(10, 3, 0.5, &mut r), 1.0);
    let features = random_features(3, 5, 0.6, seed);
    let feature_emb = gaussian_matrix(3, 3, 1.0, &mut r);
    let weights = uniform_weights(&ratings, 0.7).unwrap();
    (ratings, users, features, feature_emb, weights)
}

#[test]
fn zero_noise_item_update_matches_nonprivate() {
    let clip = ClipParams::new(5.0, 1.0).unwrap();
    for seed in 0..20 {
        let (ratings, users, features, feature_emb, weights) = zero_noise_fixture(seed);
        for (alpha, lambda_f) in [(0.0, 1.0), (0.8, 0.0), (0.8, 0.6), (3.0, 2.0)] {
            let hp = CmfHyperparams { lambda: 0.4, lambda_f, alpha, implicit_weight: 0.0 };
            let private =
                dp_item_update(&ratings, &users, &feature_emb, &features, &weights, &hp, &clip, Noise::Zero, 1)
                    .unwrap();
            // The feature ridge term enters the item system through alpha * lambda_f.
            let reference = CmfHyperparams { lambda: hp.lambda + alpha * lambda_f, ..hp };
            for j in 0..5 {
                let v = item_update_nonprivate(
                    j, &users, &feature_emb, &ratings, &features, &weights, &reference, None,
                )
                .unwrap();
                let diff = max_abs_diff(private.row(j), &v);
                assert!(diff < 1e-12, "seed {seed} alpha {alpha} item {j}: {diff}");
            }
        }
    }
}

#[test]
fn large_alpha_follows_features() {
    let clip = ClipParams::new(5.0, 1.0).unwrap();
    let (ratings, users, features, feature_emb, weights) = zero_noise_fixture(3);
    let hp = CmfHyperparams { lambda: 20.0, lambda_f: 0.5, alpha: 1e9, implicit_weight: 0.0 };
    let noise = Noise::Gaussian { seed: 3 };
    let items =
        dp_item_update(&ratings, &users, &feature_emb, &features, &weights, &hp, &clip, noise, 1).unwrap();
    for j in 0..5 {
        let s = exact_feature_statistics(j, &feature_emb, &features, hp.lambda_f);
        let a: Vec<Vec<f64>> = (0..3).map(|r| s.a_prime.row(r).to_vec()).collect();
        let target = gauss_solve(a, s.b_prime.to_vec());
        let norm = target.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff = max_abs_diff(items.row(j), &target);
        if features.item_entries(j).next().is_none() {
            // No features: the limit is the zero vector.
            assert!(diff < 1e-6, "item {j}: {diff}");
        } else {
            assert!(diff / norm < 1e-3, "item {j}: {}", diff / norm);
        }
    }
}

fn synthetic(seed: u64) -> dpcmf::dataset::SyntheticData {
    generate_synthetic(&SyntheticSpec {
        num_users: 60,
        num_items: 30,
        num_features: 10,
        dim: 3,
        rating_offset: 3.0,
        ratings_per_user: Some(10),
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn private_config(mode: Mode) -> TrainConfig {
    TrainConfig {
        dim: 4,
        iters: 4,
        lambda: 20.0,
        seed: 7,
        ..TrainConfig::private(mode, 1.0, 1e-5, 6.0, 1.0)
    }
}

#[test]
fn dpcmf_without_features_is_dpals() {
    let data = synthetic(1);
    let als = train(&private_config(Mode::Dpals), &data.ratings, None, Some(&data.features)).unwrap();
    let cmf_cfg = TrainConfig { alpha: 0.0, ..private_config(Mode::Dpcmf) };
    let cmf = train(&cmf_cfg, &data.ratings, None, Some(&data.features)).unwrap();
    assert_eq!(bits(&als.items), bits(&cmf.items));
}

#[test]
fn user_embedding_evaluation() {
    let ratings = RatingDataset::from_entries(2, 2, vec![Entry::new(0, 0, 3.0), Entry::new(0, 1, 1.0)]).unwrap();
    let items = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
    let users = evaluate_user_embeddings(&items, &ratings, 1.0).unwrap();
    // (1 + 1) u0 = 3, (4 + 1) u1 = 2
    assert_eq!(users.row(0), &[1.5, 0.4]);
    assert_eq!(users.row(1), &[0.0, 0.0]);

    // A non-private run ends on a user half-step against the previous items,
    // then an item half-step; re-solving users against the final items is a
    // different (later) quantity. With unweighted ALS, one more user solve
    // must reproduce a fresh sweep's user rows.
    let data = synthetic(2);
    let cfg = TrainConfig { mode: Mode::NonprivateAls, dim: 3, iters: 3, lambda: 0.5, ..TrainConfig::default() };
    let report = train(&cfg, &data.ratings, None, None).unwrap();
    let recomputed = evaluate_user_embeddings(&report.items, &data.ratings, cfg.lambda).unwrap();
    let more = train(&TrainConfig { iters: 4, ..cfg.clone() }, &data.ratings, None, None).unwrap();
    assert_eq!(bits(&recomputed), bits(more.users.as_ref().unwrap()));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = synthetic(3);
    for mode in Mode::ALL {
        let cfg = match mode {
            Mode::Dpals | Mode::Dpcmf => private_config(mode),
            _ => TrainConfig { mode, dim: 4, iters: 4, seed: 7, ..TrainConfig::default() },
        };
        let full = train(&cfg, &data.ratings, None, Some(&data.features)).unwrap();
        let stop = TrainOptions { stop_after: Some(2), ..TrainOptions::default() };
        let first = train_with(&cfg, &data.ratings, None, Some(&data.features), &stop).unwrap();
        assert_eq!((first.records.len(), first.checkpoint().iteration), (2, 2));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        first.checkpoint().save(&path).unwrap();
        let options = TrainOptions { resume: Some(Checkpoint::load(&path).unwrap()), ..TrainOptions::default() };
        let resumed = train_with(&cfg, &data.ratings, None, Some(&data.features), &options).unwrap();
        assert_eq!(bits(&full.items), bits(&resumed.items), "{mode}");
        assert_eq!(resumed.records.len(), 2);
        assert_eq!(resumed.records[0].iteration, 3);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let data = synthetic(4);
    for mode in Mode::ALL {
        let cfg = match mode {
            Mode::Dpals | Mode::Dpcmf => private_config(mode),
            _ => TrainConfig { mode, dim: 4, iters: 3, ..TrainConfig::default() },
        };
        let run = |threads| {
            let options = TrainOptions { threads: Some(threads), ..TrainOptions::default() };
            train_with(&cfg, &data.ratings, Some(&data.ratings), Some(&data.features), &options).unwrap()
        };
        let (one, four) = (run(1), run(4));
        assert_eq!(bits(&one.items), bits(&four.items), "{mode}");
        assert_eq!(bits(&one.features), bits(&four.features), "{mode}");
        let losses = |r: &dpcmf::TrainReport| r.records.iter().map(|x| x.validation_rmse).collect::<Vec<_>>();
        assert_eq!(losses(&one), losses(&four));
    }
}

#[test]
fn private_reports_release_only_items() {
    let data = synthetic(5);
    for mode in [Mode::Dpals, Mode::Dpcmf] {
        let report = train(&private_config(mode), &data.ratings, Some(&data.ratings), Some(&data.features)).unwrap();
        report.audit().unwrap();
        assert!(report.users.is_none());
        assert_eq!(report.records.len(), 4);
        assert!(report.records.iter().all(|r| r.train_loss.is_none() && r.validation_rmse.is_some()));
        assert!(report.checkpoint().users.is_none());
        let beta = report.budget.unwrap().beta;
        assert!((beta - dpcmf::compute_beta(1.0, 1e-5, 4).unwrap()).abs() == 0.0);
    }
    let cfg = TrainConfig { dim: 4, iters: 2, ..TrainConfig::default() };
    let report = train(&cfg, &data.ratings, None, Some(&data.features)).unwrap();
    assert!(report.users.is_some());
    assert!(report.records.iter().all(|r| r.train_loss.is_some()));
}

#[test]
fn zero_iterations_rejected() {
    let data = synthetic(6);
    let cfg = TrainConfig { iters: 0, ..TrainConfig::default() };
    let err = train(&cfg, &data.ratings, None, None).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    assert!(matches!(err, Error::Config { reason: "invalid-iterations", .. }));
}

#[test]
fn small_lambda_without_features_can_be_singular() {
    // Noise eigenvalues reach about 2 sqrt(d) gamma_u^2; a tiny ridge cannot absorb them.
    let data = synthetic(7);
    let cfg = TrainConfig { lambda: 1e-6, dim: 16, iters: 2, ..private_config(Mode::Dpals) };
    match train(&cfg, &data.ratings, None, None) {
        Ok(r) => assert!(r.items.as_slice().iter().all(|x| x.is_finite())),
        Err(e) => assert_eq!(e.kind(), ErrorKind::Numerical),
    }
}
