//! `dpcmf` command-line front end.
//!
//! Failures print one line, `error reason=<tag> kind=<class> detail=<text>`,
//! to stderr and exit with 2 (config), 3 (data) or 4 (numerical).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::cmf::EmbeddingSet;
use crate::dataset::{
    feature_density_by_bucket, fraction_popular_per_feature, generate_synthetic, load_features,
    load_ratings, popularity_buckets, write_features, write_ratings, FeatureDataset,
    FeatureLoadOptions, ItemResolution, LoadOptions, SyntheticSpec, Vocabulary,
};
use crate::error::{Error, ErrorKind, Result};
use crate::evaluation::{config_pairs, evaluate, DatasetFingerprint};
use crate::experiment::{sweep, ExperimentConfigFile, ExperimentData};
use crate::linalg::DenseMatrix;
use crate::trainer::{train_with, Mode, TrainOptions, TrainReport};

#[derive(Debug, Parser)]
#[command(name = "dpcmf", version, about = "Private collective matrix factorization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic low-rank dataset with features.
    Synth(SynthArgs),
    /// Train one model and write embeddings, metrics and a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on the test split.
    Eval(EvalArgs),
    /// Grid search over alpha and lambda_f.
    Sweep(SweepArgs),
    /// Popularity-bucket diagnostics for ratings and features.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 100)]
    pub items: usize,
    #[arg(long, default_value_t = 50)]
    pub features: usize,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub rating_offset: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rating_scale: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rating_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub feature_offset: f64,
    #[arg(long, default_value_t = 0.0)]
    pub feature_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub informativeness: f64,
    #[arg(long)]
    pub ratings_per_user: Option<usize>,
    #[arg(long)]
    pub items_per_feature: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Experiment document plus command-line overrides.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ratings file (overrides data.ratings).
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Features file (overrides data.features).
    #[arg(long = "feature-file")]
    pub feature_file: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "lambda-f")]
    pub lambda_f: Option<f64>,
    #[arg(long = "gamma-m")]
    pub gamma_m: Option<f64>,
    #[arg(long = "gamma-u")]
    pub gamma_u: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `section.key=value`, applied after every other source.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this iteration and checkpoint; resume later with `--resume`.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub buckets: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub buckets: usize,
    #[arg(long)]
    pub skip_header: bool,
    /// Writes `buckets.csv` and `features.csv` here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            e.kind().exit_code()
        }
    }
}

pub fn error_line(e: &Error) -> String {
    let kind = match e.kind() {
        ErrorKind::Config => "config",
        ErrorKind::Data => "data",
        ErrorKind::Numerical => "numerical",
    };
    let detail = e.to_string().replace(['\n', '\r'], " ");
    format!("error reason={} kind={kind} detail={detail}", e.reason())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Stats(a) => cmd_stats(&a),
    }
}

fn toml_float(x: f64) -> String {
    toml::Value::Float(x).to_string()
}

fn toml_path(p: &Path) -> Result<String> {
    let abs = std::path::absolute(p).map_err(|e| Error::io(p, e))?;
    Ok(toml::Value::String(abs.to_string_lossy().into_owned()).to_string())
}

impl ConfigArgs {
    /// Flag overrides in `--set` syntax, followed by the explicit `--set`s.
    fn overrides(&self) -> Result<Vec<String>> {
        let mut o = Vec::new();
        if let Some(p) = &self.ratings {
            o.push(format!("data.ratings={}", toml_path(p)?));
        }
        if let Some(p) = &self.feature_file {
            o.push(format!("data.features={}", toml_path(p)?));
        }
        if let Some(m) = &self.mode {
            let mode: Mode = m.parse()?;
            o.push(format!("train.mode=\"{mode}\""));
        }
        let floats = [
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("lambda_f", self.lambda_f),
            ("gamma_m", self.gamma_m),
            ("gamma_u", self.gamma_u),
        ];
        for (key, v) in floats {
            if let Some(v) = v {
                o.push(format!("train.{key}={}", toml_float(v)));
            }
        }
        if let Some(v) = self.iters {
            o.push(format!("train.iters={v}"));
        }
        if let Some(v) = self.dim {
            o.push(format!("train.dim={v}"));
        }
        if let Some(v) = self.seed {
            o.push(format!("train.seed={v}"));
        }
        o.extend(self.set.iter().cloned());
        Ok(o)
    }

    fn load(&self) -> Result<ExperimentConfigFile> {
        let overrides = self.overrides()?;
        let cfg = match &self.config {
            Some(path) => ExperimentConfigFile::load(path, &overrides)?,
            None => {
                let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
                ExperimentConfigFile::from_toml_str("", &cwd, &overrides)?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfigFile) -> Option<PathBuf> {
        self.out.clone().or_else(|| cfg.output.dir.clone())
    }
}

fn require_out(dir: Option<PathBuf>) -> Result<PathBuf> {
    let dir = dir.ok_or_else(|| Error::Config {
        reason: "missing-output",
        detail: "pass --out or set output.dir".into(),
    })?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `id<TAB>x_1<TAB>...<TAB>x_d` per row.
fn write_embeddings(path: &Path, m: &DenseMatrix, vocab: &Vocabulary) -> Result<()> {
    let mut out = String::new();
    for (r, row) in m.row_iter().enumerate() {
        out.push_str(vocab.id(r));
        for x in row {
            write!(out, "\t{x}").unwrap();
        }
        out.push('\n');
    }
    write_file(path, &out)
}

fn line_count(path: &Path) -> Result<usize> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().count())
}

#[derive(Serialize)]
struct GroundTruth<'a> {
    #[serde(flatten)]
    embeddings: &'a EmbeddingSet,
    informative: &'a [bool],
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_users: a.users,
        num_items: a.items,
        num_features: a.features,
        dim: a.dim,
        rating_offset: a.rating_offset,
        rating_scale: a.rating_scale,
        rating_noise: a.rating_noise,
        feature_offset: a.feature_offset,
        feature_noise: a.feature_noise,
        feature_informativeness: a.informativeness,
        ratings_per_user: a.ratings_per_user,
        items_per_feature: a.items_per_feature,
        seed: a.seed,
    };
    let data = generate_synthetic(&spec)?;
    let out = require_out(Some(a.out.clone()))?;

    let ratings = out.join("ratings.tsv");
    let features = out.join("features.tsv");
    write_ratings(&ratings, &data.ratings)?;
    write_features(&features, &data.features)?;
    let truth = GroundTruth {
        embeddings: &data.truth,
        informative: &data.informative,
    };
    write_file(
        &out.join("ground_truth.json"),
        &serde_json::to_string(&truth).expect("embeddings serialize"),
    )?;

    let mut cfg = ExperimentConfigFile::default();
    cfg.data.ratings = Some("ratings.tsv".into());
    cfg.data.features = Some("features.tsv".into());
    cfg.train.dim = a.dim;
    cfg.train.seed = a.seed;
    write_file(&out.join("config.toml"), &cfg.to_toml_string())?;

    let mut manifest = String::new();
    writeln!(manifest, "record=synth seed={} dim={}", a.seed, a.dim).unwrap();
    writeln!(manifest, "file=ratings.tsv rows={}", data.ratings.len()).unwrap();
    writeln!(manifest, "file=features.tsv rows={}", data.features.len()).unwrap();
    writeln!(
        manifest,
        "file=ground_truth.json users={} items={} features={}",
        a.users, a.items, a.features
    )
    .unwrap();
    writeln!(manifest, "file=config.toml").unwrap();
    write_file(&out.join("manifest.txt"), &manifest)?;
    debug_assert_eq!(line_count(&ratings)?, data.ratings.len());
    println!(
        "wrote {} ratings and {} feature entries to {}",
        data.ratings.len(),
        data.features.len(),
        out.display()
    );
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_owned(), |v| v.to_string())
}

fn report_records(report: &TrainReport, data: &ExperimentData) -> String {
    let mut out = String::new();
    let cfg = &report.config;
    writeln!(
        out,
        "record=run mode={} iterations={} start_iteration={} end_iteration={}",
        cfg.mode, cfg.iters, report.start_iteration, report.end_iteration
    )
    .unwrap();
    if let Some(b) = &report.budget {
        writeln!(
            out,
            "record=budget epsilon={} delta={} iterations={} beta={}",
            b.epsilon, b.delta, b.iterations, b.beta
        )
        .unwrap();
    }
    for (name, ds) in [("train", &data.train), ("validation", &data.validation), ("test", &data.test)] {
        let f = DatasetFingerprint::of(name, ds);
        writeln!(
            out,
            "record=dataset name={} users={} items={} ratings={} hash={}",
            f.name, f.users, f.items, f.ratings, f.hash
        )
        .unwrap();
    }
    if let Some(f) = &data.features {
        writeln!(
            out,
            "record=features features={} entries={} skipped_unknown_items={} hash={:016x}",
            f.num_features(),
            f.len(),
            data.skipped_feature_items,
            f.fingerprint()
        )
        .unwrap();
    }
    if cfg.mode.is_private() {
        writeln!(out, "record=clipping negative_ratings_clamped={}", report.negative_ratings_clamped).unwrap();
    }
    let pairs: Vec<String> = config_pairs(cfg).into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(out, "record=config {}", pairs.join(" ")).unwrap();
    for w in &report.warnings {
        writeln!(out, "record=warning message={w}").unwrap();
    }
    if let Some(last) = report.records.last() {
        writeln!(
            out,
            "record=final train_loss={} validation_rmse={}",
            opt(last.train_loss),
            opt(last.validation_rmse)
        )
        .unwrap();
    }
    out
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let out = require_out(a.config.out_dir(&cfg))?;
    let data = ExperimentData::load(&cfg)?;
    let resume = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    let options = TrainOptions {
        resume,
        stop_after: a.stop_after,
        ..TrainOptions::default()
    };
    let validation = (!data.validation.is_empty()).then_some(&data.validation);
    let report = train_with(&cfg.train, &data.train, validation, data.features.as_ref(), &options)?;

    let mut log = String::new();
    let mut csv = String::from("iteration,train_loss,validation_rmse,wall_time_secs\n");
    for r in &report.records {
        writeln!(
            log,
            "record=iteration iteration={} train_loss={} validation_rmse={} wall_time_secs={}",
            r.iteration,
            opt(r.train_loss),
            opt(r.validation_rmse),
            r.wall_time_secs
        )
        .unwrap();
        let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{}",
            r.iteration,
            cell(r.train_loss),
            cell(r.validation_rmse),
            r.wall_time_secs
        )
        .unwrap();
    }
    write_file(&out.join("metrics.log"), &log)?;
    write_file(&out.join("metrics.csv"), &csv)?;
    write_file(&out.join("report.txt"), &report_records(&report, &data))?;
    write_file(&out.join("config.resolved.toml"), &cfg.to_toml_string())?;

    let items = data.train.item_vocabulary();
    write_embeddings(&out.join("item_embeddings.tsv"), &report.items, items)?;
    items.write_sidecar(&out.join("items.vocab"))?;
    data.train.user_vocabulary().write_sidecar(&out.join("users.vocab"))?;
    if let Some(f) = data.features.as_ref().filter(|_| cfg.train.mode.uses_features()) {
        write_embeddings(&out.join("feature_embeddings.tsv"), &report.features, f.feature_vocabulary())?;
        f.feature_vocabulary().write_sidecar(&out.join("features.vocab"))?;
    }
    if let Some(u) = &report.users {
        write_embeddings(&out.join("user_embeddings.tsv"), u, data.train.user_vocabulary())?;
    }
    report.checkpoint().save(&out.join("checkpoint.json"))?;
    print!("{}", report_records(&report, &data));
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let data = ExperimentData::load(&cfg)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    if ck.items.rows() != data.train.num_items() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} items, data has {}",
            ck.items.rows(),
            data.train.num_items()
        )));
    }
    let users = match &ck.users {
        Some(u) => u.clone(),
        None => crate::trainer::evaluate_user_embeddings(&ck.items, &data.train, ck.config.lambda)?,
    };
    let buckets = popularity_buckets(&data.train, a.buckets.unwrap_or(cfg.eval.buckets))?;
    let report = evaluate(&users, &ck.items, &data.train, &data.test, &buckets, Some(&ck.config))?;
    if let Some(dir) = a.config.out_dir(&cfg) {
        let dir = require_out(Some(dir))?;
        write_file(&dir.join("eval.txt"), &report.to_records())?;
        write_file(&dir.join("eval.csv"), &report.to_csv())?;
    }
    print!("{}", report.to_records());
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let data = ExperimentData::load(&cfg)?;
    let outcome = sweep(&cfg.train, &cfg.sweep.alpha, &cfg.sweep.lambda_f, &data)?;
    if let Some(dir) = a.config.out_dir(&cfg) {
        let dir = require_out(Some(dir))?;
        write_file(&dir.join("sweep.csv"), &outcome.to_csv())?;
        write_file(&dir.join("config.resolved.toml"), &cfg.to_toml_string())?;
    }
    print!("{}", outcome.to_csv());
    let best = outcome.best();
    println!(
        "record=selected alpha={} lambda_f={} validation_rmse={} test_rmse={}",
        best.alpha, best.lambda_f, best.validation_rmse, best.test_rmse
    );
    Ok(())
}

/// `bucket,items,ratings,rating_share,feature_density` and
/// `feature,occurrences,fraction_popular` tables.
pub fn stats_tables(
    ratings: &crate::dataset::RatingDataset,
    features: &FeatureDataset,
    num_buckets: usize,
) -> Result<(String, String)> {
    let buckets = popularity_buckets(ratings, num_buckets)?;
    let density = feature_density_by_bucket(features, &buckets)?;
    let shares = buckets.rating_shares();
    let mut bt = String::from("bucket,items,ratings,rating_share,feature_density\n");
    for b in 0..buckets.num_buckets() {
        writeln!(
            bt,
            "{b},{},{},{},{}",
            buckets.sizes()[b],
            buckets.rating_counts()[b],
            shares[b],
            density[b]
        )
        .unwrap();
    }
    let pop = fraction_popular_per_feature(features, &buckets)?;
    let mut ft = String::from("feature,occurrences,fraction_popular\n");
    for (k, n, frac) in pop.rows {
        writeln!(ft, "{},{n},{frac}", features.feature_vocabulary().id(k)).unwrap();
    }
    Ok((bt, ft))
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let format = LoadOptions {
        delimiter: None,
        skip_header: a.skip_header,
    };
    let ratings = load_ratings(&a.ratings, &format)?;
    let features = match &a.features {
        Some(p) => {
            load_features(
                p,
                &FeatureLoadOptions {
                    format,
                    items: ItemResolution::Lenient(&ratings),
                },
            )?
            .features
        }
        None => FeatureDataset::empty(ratings.num_items()),
    };
    let (bt, ft) = stats_tables(&ratings, &features, a.buckets)?;
    match &a.out {
        Some(dir) => {
            let dir = require_out(Some(dir.clone()))?;
            write_file(&dir.join("buckets.csv"), &bt)?;
            write_file(&dir.join("features.csv"), &ft)?;
        }
        None => print!("{bt}\n{ft}"),
    }
    Ok(())
}
