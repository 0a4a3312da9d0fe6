//! Sparse rating and feature matrices.
//!
//! Both matrices share one storage type, [`SparseObservations`]: a list of
//! `(row, col, value)` triplets sorted by `(row, col)`, plus row and column
//! adjacency lists of triplet indices. In a [`RatingDataset`] rows are users
//! and columns are items; in a [`FeatureDataset`] rows are features and
//! columns are items.

mod io;
mod popularity;
mod split;
mod synth;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

pub use io::{
    load_features, load_ratings, write_features, write_ratings, Delimiter, FeatureLoadOptions,
    ItemResolution, LoadOptions, LoadedFeatures,
};
pub use popularity::{
    feature_density_by_bucket, fraction_popular_per_feature, popularity_buckets,
    FeaturePopularity, PopularityBuckets,
};
pub use split::{split, SplitSpec};
pub use synth::{generate_synthetic, SyntheticData, SyntheticSpec};

use crate::error::{Error, Result};

/// One observed matrix entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Self { row, col, value }
    }
}

/// Compressed adjacency: for each row (or column), the indices of its
/// triplets in ascending order.
#[derive(Debug, Clone, PartialEq)]
struct Adjacency {
    offsets: Vec<usize>,
    entries: Vec<usize>,
}

impl Adjacency {
    fn build(len: usize, keys: impl Iterator<Item = usize> + Clone) -> Self {
        let mut offsets = vec![0usize; len + 1];
        for k in keys.clone() {
            offsets[k + 1] += 1;
        }
        for i in 0..len {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut entries = vec![0usize; offsets[len]];
        for (idx, k) in keys.enumerate() {
            entries[cursor[k]] = idx;
            cursor[k] += 1;
        }
        Self { offsets, entries }
    }

    fn of(&self, key: usize) -> &[usize] {
        &self.entries[self.offsets[key]..self.offsets[key + 1]]
    }
}

/// Sparse matrix over an observation set.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseObservations {
    rows: usize,
    cols: usize,
    entries: Vec<Entry>,
    by_row: Adjacency,
    by_col: Adjacency,
}

impl SparseObservations {
    /// Builds the matrix, sorting triplets by `(row, col)`.
    ///
    /// Fails on out-of-range indices, duplicate `(row, col)` pairs or
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, mut entries: Vec<Entry>) -> Result<Self> {
        for e in &entries {
            if e.row >= rows || e.col >= cols {
                return Err(Error::InvalidDataset(format!(
                    "entry ({}, {}) outside a {rows}x{cols} matrix",
                    e.row, e.col
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::InvalidDataset(format!(
                    "non-finite value at ({}, {})",
                    e.row, e.col
                )));
            }
        }
        entries.sort_by_key(|e| (e.row, e.col));
        if let Some(w) = entries.windows(2).find(|w| (w[0].row, w[0].col) == (w[1].row, w[1].col)) {
            return Err(Error::InvalidDataset(format!(
                "duplicate entry ({}, {})",
                w[0].row, w[0].col
            )));
        }
        let by_row = Adjacency::build(rows, entries.iter().map(|e| e.row));
        let by_col = Adjacency::build(cols, entries.iter().map(|e| e.col));
        Ok(Self {
            rows,
            cols,
            entries,
            by_row,
            by_col,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Triplet indices in row `r`, ascending by column.
    pub fn row_indices(&self, r: usize) -> &[usize] {
        self.by_row.of(r)
    }

    /// Triplet indices in column `c`, ascending by row.
    pub fn col_indices(&self, c: usize) -> &[usize] {
        self.by_col.of(c)
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.row_indices(r).iter().map(move |&i| &self.entries[i])
    }

    pub fn col_entries(&self, c: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.col_indices(c).iter().map(move |&i| &self.entries[i])
    }

    /// Same shape and observation set, values replaced by `f`. Entries for
    /// which `f` returns `None` are dropped.
    fn filter_map_values(&self, mut f: impl FnMut(&Entry) -> Option<f64>) -> Self {
        let entries = self
            .entries
            .iter()
            .filter_map(|e| f(e).map(|v| Entry::new(e.row, e.col, v)))
            .collect();
        Self::new(self.rows, self.cols, entries).expect("filtering preserves validity")
    }

    fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write_u64(self.rows as u64);
        h.write_u64(self.cols as u64);
        for e in &self.entries {
            h.write_u64(e.row as u64);
            h.write_u64(e.col as u64);
            h.write_u64(e.value.to_bits());
        }
        h.finish()
    }
}

struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Bidirectional map between external ids and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Identity vocabulary `"0", "1", ..., "len-1"`.
    pub fn numeric(len: usize) -> Self {
        let mut v = Self::default();
        for i in 0..len {
            v.intern(&i.to_string());
        }
        v
    }

    /// Returns the dense index of `id`, assigning the next one on first sight.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Writes `external_id<TAB>dense_index` lines.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (i, id) in self.ids.iter().enumerate() {
            writeln!(w, "{id}\t{i}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_sidecar(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: n + 1,
                message,
            };
            let (id, idx) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected external_id<TAB>dense_index".into()))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad index {idx:?}")))?;
            pairs.push((idx, id.to_owned()));
        }
        pairs.sort();
        let mut v = Self::default();
        for (expected, (idx, id)) in pairs.into_iter().enumerate() {
            if idx != expected {
                return Err(Error::InvalidDataset(format!(
                    "{}: indices are not a dense range (missing {expected})",
                    path.display()
                )));
            }
            v.intern(&id);
        }
        Ok(v)
    }
}

/// Sensitive user-item rating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    obs: SparseObservations,
    users: Arc<Vocabulary>,
    items: Arc<Vocabulary>,
}

impl RatingDataset {
    /// Dataset with numeric identity vocabularies.
    pub fn from_entries(num_users: usize, num_items: usize, entries: Vec<Entry>) -> Result<Self> {
        let obs = SparseObservations::new(num_users, num_items, entries)?;
        Ok(Self {
            obs,
            users: Arc::new(Vocabulary::numeric(num_users)),
            items: Arc::new(Vocabulary::numeric(num_items)),
        })
    }

    pub fn with_vocabularies(
        users: Arc<Vocabulary>,
        items: Arc<Vocabulary>,
        entries: Vec<Entry>,
    ) -> Result<Self> {
        let obs = SparseObservations::new(users.len(), items.len(), entries)?;
        Ok(Self { obs, users, items })
    }

    /// Same vocabularies and dimensions, different observations.
    pub fn with_entries(&self, entries: Vec<Entry>) -> Result<Self> {
        Self::with_vocabularies(self.users.clone(), self.items.clone(), entries)
    }

    pub fn num_users(&self) -> usize {
        self.obs.rows()
    }

    pub fn num_items(&self) -> usize {
        self.obs.cols()
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        self.obs.entries()
    }

    pub fn observations(&self) -> &SparseObservations {
        &self.obs
    }

    pub fn user_indices(&self, user: usize) -> &[usize] {
        self.obs.row_indices(user)
    }

    pub fn item_indices(&self, item: usize) -> &[usize] {
        self.obs.col_indices(item)
    }

    pub fn user_ratings(&self, user: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.obs.row_entries(user)
    }

    pub fn item_ratings(&self, item: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.obs.col_entries(item)
    }

    pub fn user_vocabulary(&self) -> &Arc<Vocabulary> {
        &self.users
    }

    pub fn item_vocabulary(&self) -> &Arc<Vocabulary> {
        &self.items
    }

    /// Keeps ratings `>= threshold` and sets them to 1; drops the rest.
    pub fn binarize(&self, threshold: f64) -> Self {
        Self {
            obs: self
                .obs
                .filter_map_values(|e| (e.value >= threshold).then_some(1.0)),
            users: self.users.clone(),
            items: self.items.clone(),
        }
    }

    /// Same observation set with every value passed through `f`, which must
    /// return finite values.
    pub(crate) fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut obs = self.obs.clone();
        for e in &mut obs.entries {
            e.value = f(e.value);
            debug_assert!(e.value.is_finite());
        }
        Self {
            obs,
            users: self.users.clone(),
            items: self.items.clone(),
        }
    }

    /// Content hash of dimensions and triplets.
    pub fn fingerprint(&self) -> u64 {
        self.obs.fingerprint()
    }
}

/// Public feature-item matrix. Features behave like extra users that rate
/// items through the feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    obs: SparseObservations,
    features: Arc<Vocabulary>,
    items: Arc<Vocabulary>,
}

impl FeatureDataset {
    pub fn from_entries(num_features: usize, num_items: usize, entries: Vec<Entry>) -> Result<Self> {
        let obs = SparseObservations::new(num_features, num_items, entries)?;
        Ok(Self {
            obs,
            features: Arc::new(Vocabulary::numeric(num_features)),
            items: Arc::new(Vocabulary::numeric(num_items)),
        })
    }

    pub fn with_vocabularies(
        features: Arc<Vocabulary>,
        items: Arc<Vocabulary>,
        entries: Vec<Entry>,
    ) -> Result<Self> {
        let obs = SparseObservations::new(features.len(), items.len(), entries)?;
        Ok(Self {
            obs,
            features,
            items,
        })
    }

    /// Feature matrix with no features over `num_items` items.
    pub fn empty(num_items: usize) -> Self {
        Self::from_entries(0, num_items, Vec::new()).expect("empty matrix is valid")
    }

    pub fn num_features(&self) -> usize {
        self.obs.rows()
    }

    pub fn num_items(&self) -> usize {
        self.obs.cols()
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        self.obs.entries()
    }

    pub fn observations(&self) -> &SparseObservations {
        &self.obs
    }

    pub fn feature_entries(&self, feature: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.obs.row_entries(feature)
    }

    pub fn item_entries(&self, item: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.obs.col_entries(item)
    }

    pub fn feature_vocabulary(&self) -> &Arc<Vocabulary> {
        &self.features
    }

    pub fn item_vocabulary(&self) -> &Arc<Vocabulary> {
        &self.items
    }

    pub fn fingerprint(&self) -> u64 {
        self.obs.fingerprint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_matches_triplets() {
        let entries = vec![
            Entry::new(1, 0, 2.0),
            Entry::new(0, 2, 1.0),
            Entry::new(0, 0, 3.0),
            Entry::new(2, 2, 4.0),
        ];
        let ds = RatingDataset::from_entries(3, 3, entries).unwrap();
        let user0: Vec<usize> = ds.user_ratings(0).map(|e| e.col).collect();
        assert_eq!(user0, vec![0, 2]);
        let item2: Vec<usize> = ds.item_ratings(2).map(|e| e.row).collect();
        assert_eq!(item2, vec![0, 2]);
        assert_eq!(ds.item_indices(1), &[] as &[usize]);
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let dup = vec![Entry::new(0, 0, 1.0), Entry::new(0, 0, 2.0)];
        assert!(RatingDataset::from_entries(1, 1, dup).is_err());
        assert!(RatingDataset::from_entries(1, 1, vec![Entry::new(1, 0, 1.0)]).is_err());
        assert!(RatingDataset::from_entries(1, 1, vec![Entry::new(0, 0, f64::NAN)]).is_err());
    }

    #[test]
    fn binarize_keeps_qualifying_pairs() {
        let ds = RatingDataset::from_entries(
            1,
            3,
            vec![Entry::new(0, 0, 2.0), Entry::new(0, 1, 4.0), Entry::new(0, 2, 5.0)],
        )
        .unwrap();
        let b = ds.binarize(4.0);
        let kept: Vec<(usize, f64)> = b.entries().iter().map(|e| (e.col, e.value)).collect();
        assert_eq!(kept, vec![(1, 1.0), (2, 1.0)]);
        assert_eq!(b.num_items(), 3);
        let all = ds.binarize(f64::NEG_INFINITY);
        assert!(all.entries().iter().all(|e| e.value == 1.0));
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = Vocabulary::default();
        for id in ["u7", "alice", "42"] {
            v.intern(id);
        }
        let path = dir.path().join("vocab.tsv");
        v.write_sidecar(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "u7\t0\nalice\t1\n42\t2\n");
        assert_eq!(Vocabulary::read_sidecar(&path).unwrap(), v);
    }
}
