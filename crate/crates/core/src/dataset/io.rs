//! Delimited-triplet readers and writers.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Entry, FeatureDataset, RatingDataset, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    DoubleColon,
    Tab,
    Comma,
}

impl Delimiter {
    fn as_str(self) -> &'static str {
        match self {
            Delimiter::DoubleColon => "::",
            Delimiter::Tab => "\t",
            Delimiter::Comma => ",",
        }
    }

    fn detect(line: &str) -> Self {
        if line.contains("::") {
            Delimiter::DoubleColon
        } else if line.contains('\t') {
            Delimiter::Tab
        } else {
            Delimiter::Comma
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Detected from the first data line when `None`.
    pub delimiter: Option<Delimiter>,
    /// Skip the first non-blank line (column header).
    pub skip_header: bool,
}

/// How feature item ids are mapped to dense item indices.
#[derive(Debug, Clone, Copy)]
pub enum ItemResolution<'a> {
    /// Items must exist in the rating vocabulary.
    Strict(&'a RatingDataset),
    /// Entries for items missing from the rating vocabulary are skipped.
    Lenient(&'a RatingDataset),
    /// Items get their own vocabulary in first-appearance order.
    Standalone,
}

#[derive(Debug, Clone)]
pub struct FeatureLoadOptions<'a> {
    pub format: LoadOptions,
    pub items: ItemResolution<'a>,
}

#[derive(Debug, Clone)]
pub struct LoadedFeatures {
    pub features: FeatureDataset,
    pub skipped_unknown_items: usize,
}

struct Record<'l> {
    line: usize,
    fields: Vec<&'l str>,
}

fn read_records(
    path: &Path,
    options: &LoadOptions,
    mut each: impl FnMut(Record<'_>) -> Result<()>,
) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut delimiter = options.delimiter;
    let mut header_pending = options.skip_header;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let delim = *delimiter.get_or_insert_with(|| Delimiter::detect(trimmed));
        let fields = trimmed.split(delim.as_str()).map(str::trim).collect();
        each(Record { line: n + 1, fields })?;
    }
    Ok(())
}

fn parse_value(path: &Path, line: usize, raw: &str, what: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        message: format!("non-numeric {what} {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("non-finite {what} {raw:?}"),
        });
    }
    Ok(v)
}

/// Reads `user_id, item_id, rating[, ignored...]` records.
///
/// Dense indices follow first appearance; a repeated `(user, item)` pair keeps
/// the value of its last occurrence.
pub fn load_ratings(path: &Path, options: &LoadOptions) -> Result<RatingDataset> {
    let mut users = Vocabulary::default();
    let mut items = Vocabulary::default();
    let mut entries: Vec<Entry> = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();

    read_records(path, options, |rec| {
        if rec.fields.len() < 3 || rec.fields[..3].iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: rec.line,
                message: format!("expected user, item, rating; got {} field(s)", rec.fields.len()),
            });
        }
        let value = parse_value(path, rec.line, rec.fields[2], "rating")?;
        let u = users.intern(rec.fields[0]);
        let i = items.intern(rec.fields[1]);
        match seen.get(&(u, i)) {
            Some(&pos) => entries[pos].value = value,
            None => {
                seen.insert((u, i), entries.len());
                entries.push(Entry::new(u, i, value));
            }
        }
        Ok(())
    })?;

    if entries.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    RatingDataset::with_vocabularies(Arc::new(users), Arc::new(items), entries)
}

/// Reads `feature_id, item_id[, value]` records; a missing value means 1.
///
/// An empty file yields a feature matrix with no features.
pub fn load_features(path: &Path, options: &FeatureLoadOptions<'_>) -> Result<LoadedFeatures> {
    let mut features = Vocabulary::default();
    let mut standalone_items = Vocabulary::default();
    let mut entries: Vec<Entry> = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut skipped = 0usize;

    read_records(path, &options.format, |rec| {
        if rec.fields.len() < 2 || rec.fields[..2].iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: rec.line,
                message: "expected feature, item[, value]".into(),
            });
        }
        let value = match rec.fields.get(2) {
            Some(raw) if !raw.is_empty() => parse_value(path, rec.line, raw, "feature value")?,
            _ => 1.0,
        };
        let item = match options.items {
            ItemResolution::Standalone => standalone_items.intern(rec.fields[1]),
            ItemResolution::Strict(r) => {
                r.item_vocabulary()
                    .get(rec.fields[1])
                    .ok_or_else(|| Error::UnknownItem {
                        id: rec.fields[1].to_owned(),
                        line: rec.line,
                    })?
            }
            ItemResolution::Lenient(r) => match r.item_vocabulary().get(rec.fields[1]) {
                Some(i) => i,
                None => {
                    skipped += 1;
                    return Ok(());
                }
            },
        };
        let k = features.intern(rec.fields[0]);
        match seen.get(&(k, item)) {
            Some(&pos) => entries[pos].value = value,
            None => {
                seen.insert((k, item), entries.len());
                entries.push(Entry::new(k, item, value));
            }
        }
        Ok(())
    })?;

    let items = match options.items {
        ItemResolution::Standalone => Arc::new(standalone_items),
        ItemResolution::Strict(r) | ItemResolution::Lenient(r) => r.item_vocabulary().clone(),
    };
    let features = FeatureDataset::with_vocabularies(Arc::new(features), items, entries)?;
    Ok(LoadedFeatures {
        features,
        skipped_unknown_items: skipped,
    })
}

/// Writes tab-separated `user_id, item_id, rating` lines using external ids.
pub fn write_ratings(path: &Path, ratings: &RatingDataset) -> Result<()> {
    write_triplets(
        path,
        ratings.entries(),
        ratings.user_vocabulary(),
        ratings.item_vocabulary(),
    )
}

/// Writes tab-separated `feature_id, item_id, value` lines using external ids.
pub fn write_features(path: &Path, features: &FeatureDataset) -> Result<()> {
    write_triplets(
        path,
        features.entries(),
        features.feature_vocabulary(),
        features.item_vocabulary(),
    )
}

fn write_triplets(path: &Path, entries: &[Entry], rows: &Vocabulary, cols: &Vocabulary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        writeln!(w, "{}\t{}\t{}", rows.id(e.row), cols.id(e.col), e.value)
            .map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn parses_double_colon_ratings() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.dat", "1::10::4.0\n1::11::3.5\n2::10::5.0");
        let ds = load_ratings(&p, &LoadOptions::default()).unwrap();
        assert_eq!((ds.num_users(), ds.num_items(), ds.len()), (2, 2, 3));
        let items: Vec<usize> = ds.user_ratings(0).map(|e| e.col).collect();
        assert_eq!(items, vec![0, 1]);
        assert_eq!(ds.item_vocabulary().id(1), "11");
    }

    #[test]
    fn duplicate_keeps_last() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.dat", "1::10::4.0\n1::10::2.0\n");
        let ds = load_ratings(&p, &LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.entries()[0].value, 2.0);
    }

    #[test]
    fn tab_and_comma_with_extra_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.tsv", "a\tx\t1\t978300760\nb\ty\t2\t978300761\n");
        assert_eq!(load_ratings(&p, &LoadOptions::default()).unwrap().len(), 2);
        let p = write(&dir, "r.csv", "userId,movieId,rating,timestamp\n1,2,3.5,0\n");
        let opts = LoadOptions {
            skip_header: true,
            ..Default::default()
        };
        assert_eq!(load_ratings(&p, &opts).unwrap().len(), 1);
    }

    #[test]
    fn malformed_records_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.dat", "1::10::4.0\n\n1::11::good\n");
        match load_ratings(&p, &LoadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let p = write(&dir, "r2.dat", "1::10\n");
        assert!(matches!(
            load_ratings(&p, &LoadOptions::default()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_rating_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.dat", "\n\n");
        assert!(matches!(
            load_ratings(&p, &LoadOptions::default()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn features_resolve_against_rating_vocabulary() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(&dir, "r.dat", "1::10::4.0\n1::11::3.5\n2::10::5.0\n");
        let ratings = load_ratings(&r, &LoadOptions::default()).unwrap();
        let f = write(&dir, "f.tsv", "genre:a\t10\ngenre:b\t10\t0.5\ngenre:a\t11\n");
        let opts = FeatureLoadOptions {
            format: LoadOptions::default(),
            items: ItemResolution::Strict(&ratings),
        };
        let loaded = load_features(&f, &opts).unwrap();
        let fs = loaded.features;
        assert_eq!((fs.num_features(), fs.num_items(), fs.len()), (2, 2, 3));
        assert_eq!(fs.item_entries(0).count(), 2);

        let bad = write(&dir, "bad.tsv", "genre:a\t10\ngenre:a\t99\n");
        let err = load_features(
            &bad,
            &FeatureLoadOptions {
                format: LoadOptions::default(),
                items: ItemResolution::Strict(&ratings),
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownItem { line: 2, .. }));
        let lenient = load_features(
            &bad,
            &FeatureLoadOptions {
                format: LoadOptions::default(),
                items: ItemResolution::Lenient(&ratings),
            },
        )
        .unwrap();
        assert_eq!(lenient.skipped_unknown_items, 1);
        assert_eq!(lenient.features.len(), 1);
    }

    #[test]
    fn empty_feature_file_gives_no_features() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(&dir, "f.tsv", "");
        let loaded = load_features(
            &f,
            &FeatureLoadOptions {
                format: LoadOptions::default(),
                items: ItemResolution::Standalone,
            },
        )
        .unwrap();
        assert_eq!(loaded.features.num_features(), 0);
    }
}
