//! One private run: budget, clipping, per-iteration validation RMSE and the
//! test RMSE of the released item embeddings.
//!
//! `cargo run --release --example private_training -- [epsilon]`

use dpcmf::dataset::{generate_synthetic, SplitSpec, SyntheticSpec};
use dpcmf::evaluation::rmse;
use dpcmf::experiment::{scoring_users, ExperimentData};
use dpcmf::{train, Mode, TrainConfig};

fn main() -> dpcmf::Result<()> {
    let epsilon: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let synth = generate_synthetic(&SyntheticSpec {
        num_users: 2000,
        num_items: 500,
        num_features: 100,
        dim: 15,
        rating_offset: 3.0,
        rating_scale: 2.0,
        rating_noise: 0.5,
        feature_offset: 1.0,
        feature_noise: 0.1,
        ratings_per_user: Some(50),
        items_per_feature: Some(100),
        ..SyntheticSpec::default()
    })?;
    let data = ExperimentData::from_parts(&synth.ratings, Some(synth.features), &SplitSpec::default())?;

    // Ratings clipped to [0, 6], user rows to norm 1. The ridge must dominate
    // the noise on the Gramian (eigenvalues up to about 2 sqrt(d)).
    let cfg = TrainConfig {
        dim: 16,
        iters: 10,
        lambda: 20.0,
        alpha: 100.0,
        lambda_f: 0.1,
        ..TrainConfig::private(Mode::Dpcmf, epsilon, 1e-5, 6.0, 1.0)
    };
    let report = train(&cfg, &data.train, Some(&data.validation), data.features.as_ref())?;
    let budget = report.budget.expect("private runs carry a budget");
    println!("epsilon {} delta {} T {} -> beta {:.6}", budget.epsilon, budget.delta, budget.iterations, budget.beta);
    println!("negative ratings clamped: {}", report.negative_ratings_clamped);
    for r in &report.records {
        println!("iteration {:>2}  validation rmse {:.4}", r.iteration, r.validation_rmse.unwrap());
    }
    assert!(report.users.is_none(), "private runs never release user embeddings");
    let users = scoring_users(&report, &data.train)?;
    println!("test rmse {:.4}", rmse(&users, &report.items, &data.test)?);
    Ok(())
}
