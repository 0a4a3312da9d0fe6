//! Experiment files: data paths, split, training defaults and sweep grids in
//! one TOML document, plus the hyperparameter sweep driver.
//!
//! ```toml
//! [data]
//! ratings = "ratings.tsv"
//! features = "features.tsv"
//!
//! [split]
//! seed = 3
//!
//! [train]
//! mode = "dpcmf"
//! epsilon = 1.0
//! delta = 1e-5
//! gamma_m = 5.0
//! gamma_u = 1.0
//!
//! [sweep]
//! alpha = [0.1, 1.0]
//! lambda_f = [0.1, 1.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    load_features, load_ratings, split, FeatureDataset, FeatureLoadOptions, ItemResolution,
    LoadOptions, RatingDataset, SplitSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::rmse;
use crate::trainer::{evaluate_user_embeddings, train, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureItems {
    /// Unknown item ids in the feature file are an error.
    Strict,
    /// Unknown item ids are skipped and counted.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub ratings: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub feature_items: FeatureItems,
    /// Keep ratings `>= threshold` as 1 and drop the rest.
    pub binarize: Option<f64>,
    pub skip_header: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub alpha: Vec<f64>,
    pub lambda_f: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alpha: vec![1.0],
            lambda_f: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub buckets: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { buckets: 4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfigFile {
    pub data: DataSection,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub sweep: SweepSection,
    pub eval: EvalSection,
    pub output: OutputSection,
}

fn invalid_config(detail: impl Into<String>) -> Error {
    Error::Config {
        reason: "invalid-config",
        detail: detail.into(),
    }
}

/// Parses the right-hand side of `--set key=value` as a TOML value, falling
/// back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("single key"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

/// Applies dotted `section.key=value` overrides to a parsed document.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| invalid_config(format!("override {item:?} is not key=value")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(invalid_config(format!("bad override key {key:?}")));
        }
        let (last, parents) = path.split_last().expect("non-empty");
        let mut node = &mut *table;
        for p in parents {
            let entry = node
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| invalid_config(format!("{key:?}: {p} is not a section")))?;
        }
        node.insert(last.to_string(), parse_override_value(raw.trim()));
    }
    Ok(())
}

impl ExperimentConfigFile {
    /// Parses a document; relative data paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| invalid_config(e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        let mut cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid_config(e.to_string().trim().replace('\n', " ")))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, overrides)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.data.ratings, &mut self.data.features, &mut self.output.dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Checks every section, including that referenced input files exist.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.split
            .validate()
            .map_err(|e| invalid_config(e.to_string()))?;
        if self.eval.buckets == 0 {
            return Err(invalid_config("eval.buckets must be at least 1"));
        }
        if self.sweep.alpha.is_empty() || self.sweep.lambda_f.is_empty() {
            return Err(invalid_config("sweep grids must be nonempty"));
        }
        let ratings = self.data.ratings.as_ref().ok_or_else(|| Error::Config {
            reason: "missing-path",
            detail: "data.ratings is not set".into(),
        })?;
        for p in std::iter::once(ratings).chain(self.data.features.as_ref()) {
            if !p.is_file() {
                return Err(Error::Config {
                    reason: "missing-path",
                    detail: format!("{} does not exist", p.display()),
                });
            }
        }
        Ok(())
    }

    /// The resolved document with all defaults filled in.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Split ratings plus optional features over the same item vocabulary.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: RatingDataset,
    pub validation: RatingDataset,
    pub test: RatingDataset,
    pub features: Option<FeatureDataset>,
    pub skipped_feature_items: usize,
}

impl ExperimentData {
    pub fn from_parts(
        ratings: &RatingDataset,
        features: Option<FeatureDataset>,
        spec: &SplitSpec,
    ) -> Result<Self> {
        let (train, validation, test) = split(ratings, spec)?;
        Ok(Self {
            train,
            validation,
            test,
            features,
            skipped_feature_items: 0,
        })
    }

    pub fn load(cfg: &ExperimentConfigFile) -> Result<Self> {
        let format = LoadOptions {
            delimiter: None,
            skip_header: cfg.data.skip_header,
        };
        let path = cfg.data.ratings.as_ref().ok_or_else(|| Error::Config {
            reason: "missing-path",
            detail: "data.ratings is not set".into(),
        })?;
        let mut ratings = load_ratings(path, &format)?;
        if let Some(t) = cfg.data.binarize {
            ratings = ratings.binarize(t);
        }
        let (features, skipped) = match &cfg.data.features {
            None => (None, 0),
            Some(p) => {
                let items = match cfg.data.feature_items {
                    FeatureItems::Strict => ItemResolution::Strict(&ratings),
                    FeatureItems::Lenient => ItemResolution::Lenient(&ratings),
                };
                let loaded = load_features(p, &FeatureLoadOptions { format, items })?;
                (Some(loaded.features), loaded.skipped_unknown_items)
            }
        };
        let mut data = Self::from_parts(&ratings, features, &cfg.split)?;
        data.skipped_feature_items = skipped;
        Ok(data)
    }
}

/// Embeddings used to score held-out ratings: the trained users when the
/// report carries them, otherwise users recomputed from the training ratings.
pub fn scoring_users(report: &TrainReport, train: &RatingDataset) -> Result<crate::linalg::DenseMatrix> {
    match &report.users {
        Some(u) => Ok(u.clone()),
        None => evaluate_user_embeddings(&report.items, train, report.config.lambda),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub lambda_f: f64,
    pub validation_rmse: f64,
    pub test_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    /// One row per grid point, alpha-major.
    pub rows: Vec<SweepRow>,
    pub selected: usize,
}

impl SweepOutcome {
    pub fn best(&self) -> &SweepRow {
        &self.rows[self.selected]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,lambda_f,validation_rmse,test_rmse,selected\n");
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.alpha,
                r.lambda_f,
                r.validation_rmse,
                r.test_rmse,
                u8::from(i == self.selected)
            ));
        }
        out
    }
}

/// Index of the minimum validation RMSE; ties go to the smallest alpha, then
/// the smallest lambda_f.
pub fn select_best(rows: &[SweepRow]) -> Option<usize> {
    (0..rows.len()).min_by(|&a, &b| {
        let (ra, rb) = (&rows[a], &rows[b]);
        ra.validation_rmse
            .total_cmp(&rb.validation_rmse)
            .then(ra.alpha.total_cmp(&rb.alpha))
            .then(ra.lambda_f.total_cmp(&rb.lambda_f))
    })
}

/// Trains every `(alpha, lambda_f)` grid point with all other settings from
/// `base`, and selects by final validation RMSE.
pub fn sweep(
    base: &TrainConfig,
    alphas: &[f64],
    lambda_fs: &[f64],
    data: &ExperimentData,
) -> Result<SweepOutcome> {
    if alphas.is_empty() || lambda_fs.is_empty() {
        return Err(invalid_config("sweep grids must be nonempty"));
    }
    if data.validation.is_empty() {
        return Err(Error::EmptyMetric("validation rmse"));
    }
    let mut rows = Vec::with_capacity(alphas.len() * lambda_fs.len());
    for &alpha in alphas {
        for &lambda_f in lambda_fs {
            let cfg = TrainConfig {
                alpha,
                lambda_f,
                ..base.clone()
            };
            let report = train(&cfg, &data.train, None, data.features.as_ref())?;
            let users = scoring_users(&report, &data.train)?;
            rows.push(SweepRow {
                alpha,
                lambda_f,
                validation_rmse: rmse(&users, &report.items, &data.validation)?,
                test_rmse: if data.test.is_empty() {
                    f64::NAN
                } else {
                    rmse(&users, &report.items, &data.test)?
                },
            });
        }
    }
    let selected = select_best(&rows).expect("nonempty grid");
    Ok(SweepOutcome { rows, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Mode;

    #[test]
    fn parses_sections_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"
            [data]
            ratings = "r.tsv"
            [train]
            mode = "dpals"
            epsilon = 1.0
            delta = 1e-5
            gamma_m = 5.0
            gamma_u = 1.0
        "#;
        let cfg = ExperimentConfigFile::from_toml_str(
            text,
            dir.path(),
            &["train.epsilon=20".into(), "sweep.alpha=[0.5, 2]".into(), "train.mode=dpcmf".into()],
        )
        .unwrap();
        assert_eq!(cfg.train.mode, Mode::Dpcmf);
        assert_eq!(cfg.train.epsilon, Some(20.0));
        assert_eq!(cfg.sweep.alpha, vec![0.5, 2.0]);
        assert_eq!(cfg.data.ratings, Some(dir.path().join("r.tsv")));
        assert_eq!(cfg.split, SplitSpec::default());

        let missing = cfg.validate().unwrap_err();
        assert_eq!(missing.reason(), "missing-path");
        std::fs::write(dir.path().join("r.tsv"), "1\t1\t1\n").unwrap();
        cfg.validate().unwrap();

        let echoed = ExperimentConfigFile::from_toml_str(&cfg.to_toml_string(), dir.path(), &[]).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = Path::new(".");
        for text in ["[train]\nlambda_prime = 1.0", "[nope]\nx = 1", "[split]\ntrian = 0.8"] {
            let err = ExperimentConfigFile::from_toml_str(text, dir, &[]).unwrap_err();
            assert_eq!(err.reason(), "invalid-config", "{text}");
        }
        let err = ExperimentConfigFile::from_toml_str("", dir, &["train".into()]).unwrap_err();
        assert_eq!(err.reason(), "invalid-config");
    }

    #[test]
    fn selection_rule() {
        let row = |alpha, lambda_f, v| SweepRow {
            alpha,
            lambda_f,
            validation_rmse: v,
            test_rmse: 0.0,
        };
        let rows = vec![row(2.0, 0.1, 0.5), row(1.0, 1.0, 0.5), row(1.0, 0.5, 0.5), row(0.1, 0.1, 0.6)];
        assert_eq!(select_best(&rows), Some(2));
        assert_eq!(select_best(&rows[..1]), Some(0));
        assert_eq!(select_best(&[]), None);
    }
}
