//! Head-versus-tail view of a dataset and of a trained model: rating share
//! and feature density per popularity bucket, then RMSE per bucket.
//!
//! `cargo run --release --example popularity_diagnostics`

use dpcmf::cli::stats_tables;
use dpcmf::dataset::{generate_synthetic, popularity_buckets, SplitSpec, SyntheticSpec};
use dpcmf::evaluation::evaluate;
use dpcmf::experiment::{scoring_users, ExperimentData};
use dpcmf::{train, Mode, TrainConfig};

fn main() -> dpcmf::Result<()> {
    // A Zipf-like skew: ratings_per_user draws items uniformly, so build the
    // skew by keeping each rating with probability decreasing in item index.
    let synth = generate_synthetic(&SyntheticSpec {
        num_users: 1500,
        num_items: 400,
        num_features: 80,
        dim: 8,
        rating_offset: 3.0,
        rating_noise: 0.3,
        feature_offset: 1.0,
        ratings_per_user: Some(60),
        items_per_feature: Some(40),
        ..SyntheticSpec::default()
    })?;
    let kept = synth
        .ratings
        .entries()
        .iter()
        .filter(|e| (e.row * 7919 + e.col * 104729) % 400 < 400 - e.col)
        .copied()
        .collect();
    let ratings = synth.ratings.with_entries(kept)?;

    let (buckets_csv, features_csv) = stats_tables(&ratings, &synth.features, 4)?;
    println!("{buckets_csv}");
    println!("{}", features_csv.lines().take(6).collect::<Vec<_>>().join("\n"));

    let data = ExperimentData::from_parts(&ratings, Some(synth.features), &SplitSpec::default())?;
    let cfg = TrainConfig {
        dim: 10,
        iters: 8,
        lambda: 20.0,
        alpha: 10.0,
        ..TrainConfig::private(Mode::Dpcmf, 2.0, 1e-5, 6.0, 1.0)
    };
    let report = train(&cfg, &data.train, None, data.features.as_ref())?;
    let users = scoring_users(&report, &data.train)?;
    let buckets = popularity_buckets(&data.train, 4)?;
    let metrics = evaluate(&users, &report.items, &data.train, &data.test, &buckets, Some(&cfg))?;
    print!("\n{}", metrics.to_csv());
    Ok(())
}
