//! Implicit feedback: binarized ratings, with every unobserved cell pulled
//! towards zero at weight `implicit_weight`.
//!
//! `cargo run --release --example implicit_feedback`

use dpcmf::dataset::{generate_synthetic, SplitSpec, SyntheticSpec};
use dpcmf::evaluation::rmse;
use dpcmf::experiment::ExperimentData;
use dpcmf::linalg::dot;
use dpcmf::{train, Mode, TrainConfig};

fn main() -> dpcmf::Result<()> {
    let synth = generate_synthetic(&SyntheticSpec {
        num_users: 500,
        num_items: 200,
        num_features: 40,
        dim: 6,
        rating_offset: 3.0,
        rating_noise: 0.5,
        feature_offset: 1.0,
        ratings_per_user: Some(20),
        items_per_feature: Some(30),
        ..SyntheticSpec::default()
    })?;
    // Ratings >= 3 become interactions with value 1; the rest are dropped.
    let interactions = synth.ratings.binarize(3.0);
    let data = ExperimentData::from_parts(&interactions, Some(synth.features), &SplitSpec::default())?;

    for w0 in [0.0, 0.01, 0.1] {
        let cfg = TrainConfig {
            mode: Mode::NonprivateCmf,
            dim: 8,
            iters: 10,
            lambda: 0.5,
            alpha: 1.0,
            implicit_weight: w0,
            ..TrainConfig::default()
        };
        let report = train(&cfg, &data.train, None, data.features.as_ref())?;
        let users = report.users.as_ref().unwrap();
        // Mean score over all cells: the implicit term shrinks predictions on unobserved items.
        let (m, n) = (users.rows(), report.items.rows());
        let mean: f64 = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| dot(users.row(i), report.items.row(j)))
            .sum::<f64>()
            / (m * n) as f64;
        println!(
            "implicit_weight {w0:<5} final loss {:.2}  test rmse {:.4}  mean score {mean:.4}",
            report.records.last().unwrap().train_loss.unwrap(),
            rmse(users, &report.items, &data.test)?
        );
    }
    Ok(())
}
