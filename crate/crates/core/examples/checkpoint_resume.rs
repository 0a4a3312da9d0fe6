//! Stops a private run half way, saves a checkpoint, resumes it and checks
//! the result matches an uninterrupted run bit for bit.
//!
//! `cargo run --release --example checkpoint_resume`

use dpcmf::dataset::{generate_synthetic, SyntheticSpec};
use dpcmf::trainer::{train_with, TrainOptions};
use dpcmf::{train, Checkpoint, Mode, TrainConfig};

fn main() -> dpcmf::Result<()> {
    let synth = generate_synthetic(&SyntheticSpec {
        num_users: 400,
        num_items: 150,
        num_features: 30,
        dim: 5,
        rating_offset: 3.0,
        rating_noise: 0.3,
        feature_offset: 1.0,
        ratings_per_user: Some(20),
        items_per_feature: Some(30),
        ..SyntheticSpec::default()
    })?;
    let cfg = TrainConfig {
        dim: 8,
        iters: 6,
        lambda: 20.0,
        alpha: 5.0,
        ..TrainConfig::private(Mode::Dpcmf, 1.0, 1e-5, 6.0, 1.0)
    };

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("checkpoint.json");
    let stop = TrainOptions { stop_after: Some(3), ..TrainOptions::default() };
    let first = train_with(&cfg, &synth.ratings, None, Some(&synth.features), &stop)?;
    first.checkpoint().save(&path)?;
    println!("stopped after iteration {}, checkpoint at {}", first.end_iteration, path.display());

    let resume = TrainOptions { resume: Some(Checkpoint::load(&path)?), ..TrainOptions::default() };
    let resumed = train_with(&cfg, &synth.ratings, None, Some(&synth.features), &resume)?;
    let full = train(&cfg, &synth.ratings, None, Some(&synth.features))?;
    println!("resumed iterations {}..={}", resumed.start_iteration + 1, resumed.end_iteration);
    println!("identical to uninterrupted run: {}", resumed.items == full.items);

    // The budget is spread over all iterations, so a changed config is refused.
    let longer = TrainConfig { iters: 12, ..cfg };
    let refused = train_with(&longer, &synth.ratings, None, Some(&synth.features), &resume);
    println!("resume under a different config: {}", refused.map(|_| "accepted".to_owned()).unwrap_or_else(|e| e.to_string()));
    Ok(())
}
