//! Non-private collective factorization recovers noiseless low-rank data.
//!
//! `cargo run --release --example synthetic_recovery`

use dpcmf::dataset::{generate_synthetic, SyntheticSpec};
use dpcmf::evaluation::rmse;
use dpcmf::{train, Mode, TrainConfig};

fn main() -> dpcmf::Result<()> {
    // 200 users x 100 items, rank 8, every cell observed, 50 informative features.
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let cfg = TrainConfig {
        mode: Mode::NonprivateCmf,
        dim: 8,
        iters: 30,
        lambda: 1e-4,
        lambda_f: 1e-4,
        ..TrainConfig::default()
    };
    let report = train(&cfg, &data.ratings, Some(&data.ratings), Some(&data.features))?;
    for r in &report.records {
        println!(
            "iteration {:>2}  loss {:.3e}  train rmse {:.3e}",
            r.iteration,
            r.train_loss.unwrap(),
            r.validation_rmse.unwrap()
        );
    }
    let users = report.users.as_ref().expect("non-private runs keep users");
    println!("final train rmse {:.3e}", rmse(users, &report.items, &data.ratings)?);
    Ok(())
}
