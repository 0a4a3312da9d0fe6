//! Grid search over the feature weight and feature ridge, selected on
//! validation RMSE.
//!
//! `cargo run --release --example alpha_sweep`

use dpcmf::dataset::{generate_synthetic, SplitSpec, SyntheticSpec};
use dpcmf::experiment::{sweep, ExperimentData};
use dpcmf::{Mode, TrainConfig};

fn main() -> dpcmf::Result<()> {
    let synth = generate_synthetic(&SyntheticSpec {
        num_users: 1000,
        num_items: 300,
        num_features: 60,
        dim: 10,
        rating_offset: 3.0,
        rating_scale: 2.0,
        rating_noise: 0.5,
        feature_offset: 1.0,
        feature_noise: 0.1,
        // Half the features are pure noise.
        feature_informativeness: 0.5,
        ratings_per_user: Some(40),
        items_per_feature: Some(60),
        ..SyntheticSpec::default()
    })?;
    let data = ExperimentData::from_parts(&synth.ratings, Some(synth.features), &SplitSpec::default())?;
    let base = TrainConfig {
        dim: 12,
        iters: 8,
        lambda: 20.0,
        ..TrainConfig::private(Mode::Dpcmf, 1.0, 1e-5, 6.0, 1.0)
    };
    let outcome = sweep(&base, &[0.0, 1.0, 10.0, 100.0], &[0.1, 1.0, 10.0], &data)?;
    print!("{}", outcome.to_csv());
    let best = outcome.best();
    println!("selected alpha={} lambda_f={} test rmse {:.4}", best.alpha, best.lambda_f, best.test_rmse);
    Ok(())
}
