//! Test RMSE against epsilon, with the non-private model as the `inf` row.
//!
//! `cargo run --release --example privacy_utility_curve`

use dpcmf::dataset::{generate_synthetic, SplitSpec, SyntheticSpec};
use dpcmf::evaluation::{curve_csv, privacy_utility_curve};
use dpcmf::experiment::ExperimentData;
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
        ratings_per_user: Some(40),
        items_per_feature: Some(60),
        seed: 3,
        ..SyntheticSpec::default()
    })?;
    let data = ExperimentData::from_parts(&synth.ratings, Some(synth.features), &SplitSpec::default())?;
    for alpha in [0.0, 10.0] {
        let base = TrainConfig {
            dim: 12,
            iters: 8,
            lambda: 20.0,
            alpha,
            ..TrainConfig::private(Mode::Dpcmf, 1.0, 1e-5, 6.0, 1.0)
        };
        let curve = privacy_utility_curve(&base, &[0.5, 1.0, 2.0, 5.0, 20.0], &data)?;
        println!("alpha = {alpha}\n{}", curve_csv(&curve));
    }
    Ok(())
}
