mod common;

use std::collections::BTreeSet;
use std::io::Write;

use common::*;
use dpcmf::dataset::{
    feature_density_by_bucket, fraction_popular_per_feature, load_features, load_ratings,
    popularity_buckets, split, write_ratings, Entry, FeatureDataset, FeatureLoadOptions,
    ItemResolution, LoadOptions, RatingDataset, SplitSpec, Vocabulary,
};
use dpcmf::Error;
use proptest::prelude::*;

fn entries_strategy(m: usize, n: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..m, 0..n, -5.0..5.0f64), 0..60)
}

fn dedup(raw: &[(usize, usize, f64)]) -> Vec<Entry> {
    let mut seen = BTreeSet::new();
    raw.iter()
        .filter(|(i, j, _)| seen.insert((*i, *j)))
        .map(|&(i, j, v)| Entry::new(i, j, v))
        .collect()
}

fn triplet_set(entries: &[Entry]) -> BTreeSet<(usize, usize, u64)> {
    entries.iter().map(|e| (e.row, e.col, e.value.to_bits())).collect()
}

proptest! {
    #[test]
    fn adjacency_reproduces_triplets(raw in entries_strategy(7, 9)) {
        let ds = RatingDataset::from_entries(7, 9, dedup(&raw)).unwrap();
        let by_user: Vec<Entry> = (0..7).flat_map(|i| ds.user_ratings(i).copied().collect::<Vec<_>>()).collect();
        let by_item: Vec<Entry> = (0..9).flat_map(|j| ds.item_ratings(j).copied().collect::<Vec<_>>()).collect();
        prop_assert_eq!(by_user.len(), ds.len());
        prop_assert_eq!(by_item.len(), ds.len());
        prop_assert_eq!(triplet_set(&by_user), triplet_set(ds.entries()));
        prop_assert_eq!(triplet_set(&by_item), triplet_set(ds.entries()));
        for i in 0..7 {
            prop_assert!(ds.user_ratings(i).all(|e| e.row == i));
        }

        let fs = FeatureDataset::from_entries(7, 9, dedup(&raw)).unwrap();
        let by_feature: usize = (0..7).map(|k| fs.feature_entries(k).count()).sum();
        let by_item: usize = (0..9).map(|j| fs.item_entries(j).count()).sum();
        prop_assert_eq!(by_feature, fs.len());
        prop_assert_eq!(by_item, fs.len());
    }

    #[test]
    fn split_is_exact_disjoint_cover(raw in entries_strategy(10, 10), seed in any::<u64>(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let ds = RatingDataset::from_entries(10, 10, dedup(&raw)).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let spec = SplitSpec { train: lo, validation: hi - lo, test: 1.0 - hi, seed };
        prop_assume!(spec.validate().is_ok());
        let (tr, va, te) = split(&ds, &spec).unwrap();
        prop_assert_eq!(tr.len() + va.len() + te.len(), ds.len());
        let mut union = triplet_set(tr.entries());
        union.extend(triplet_set(va.entries()));
        union.extend(triplet_set(te.entries()));
        prop_assert_eq!(union, triplet_set(ds.entries()));
        for part in [&tr, &va, &te] {
            prop_assert_eq!((part.num_users(), part.num_items()), (10, 10));
        }
    }

    #[test]
    fn buckets_ignore_input_order(raw in entries_strategy(6, 12), k in 1usize..6, rot in 0usize..60) {
        let mut entries = dedup(&raw);
        let a = RatingDataset::from_entries(6, 12, entries.clone()).unwrap();
        if !entries.is_empty() {
            let r = rot % entries.len();
            entries.rotate_left(r);
            entries.reverse();
        }
        let b = RatingDataset::from_entries(6, 12, entries).unwrap();
        let ba = popularity_buckets(&a, k).unwrap();
        let bb = popularity_buckets(&b, k).unwrap();
        prop_assert_eq!(ba.assignment(), bb.assignment());
        let sizes = ba.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), 12);
    }

    #[test]
    fn densities_sum_to_one(raw in entries_strategy(5, 12), ratings in entries_strategy(6, 12), k in 1usize..5) {
        let fs = FeatureDataset::from_entries(5, 12, dedup(&raw)).unwrap();
        let rs = RatingDataset::from_entries(6, 12, dedup(&ratings)).unwrap();
        let buckets = popularity_buckets(&rs, k).unwrap();
        let dens = feature_density_by_bucket(&fs, &buckets).unwrap();
        if fs.is_empty() {
            prop_assert!(dens.iter().all(|&x| x == 0.0));
        } else {
            prop_assert!((dens.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

fn write_temp(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn ratings_file_examples() {
    let f = write_temp("1::10::4.0\n1::11::3.5\n2::10::5.0\n");
    let ds = load_ratings(f.path(), &LoadOptions::default()).unwrap();
    assert_eq!((ds.num_users(), ds.num_items(), ds.len()), (2, 2, 3));
    assert_eq!(ds.user_indices(0).len(), 2);
    let items: Vec<usize> = ds.user_ratings(0).map(|e| e.col).collect();
    assert_eq!(items, vec![0, 1]);

    let f = write_temp("1::10::4.0\n1::10::2.0\n");
    let ds = load_ratings(f.path(), &LoadOptions::default()).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.entries()[0].value, 2.0);

    let f = write_temp("1,10,4.0,978300760\n2,10,x\n");
    match load_ratings(f.path(), &LoadOptions::default()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    let f = write_temp("");
    assert!(matches!(load_ratings(f.path(), &LoadOptions::default()), Err(Error::EmptyDataset(_))));
}

#[test]
fn write_then_load_round_trips() {
    let ds = random_ratings(8, 6, 0.5, 1.0, 5.0, 3);
    let f = tempfile::NamedTempFile::new().unwrap();
    write_ratings(f.path(), &ds).unwrap();
    let back = load_ratings(f.path(), &LoadOptions::default()).unwrap();
    assert_eq!(back.len(), ds.len());
    let key = |d: &RatingDataset| -> BTreeSet<(String, String, u64)> {
        d.entries()
            .iter()
            .map(|e| (d.user_vocabulary().id(e.row).to_owned(), d.item_vocabulary().id(e.col).to_owned(), e.value.to_bits()))
            .collect()
    };
    assert_eq!(key(&back), key(&ds));

    let sidecar = tempfile::NamedTempFile::new().unwrap();
    back.item_vocabulary().write_sidecar(sidecar.path()).unwrap();
    let v = Vocabulary::read_sidecar(sidecar.path()).unwrap();
    assert_eq!(&v, back.item_vocabulary().as_ref());
}

#[test]
fn feature_file_examples() {
    let ratings = write_temp("u\ta\t1\nu\tb\t1\n");
    let ratings = load_ratings(ratings.path(), &LoadOptions::default()).unwrap();
    let f = write_temp("g1\ta\t1\ng1\tb\t1\ng2\tb\n");
    let opts = |items| FeatureLoadOptions { format: LoadOptions::default(), items };
    let loaded = load_features(f.path(), &opts(ItemResolution::Strict(&ratings))).unwrap();
    assert_eq!((loaded.features.num_features(), loaded.features.len()), (2, 3));
    assert!(loaded.features.entries().iter().all(|e| e.value == 1.0));

    let f = write_temp("g1\ta\t1\ng1\tzzz\t1\n");
    assert!(matches!(
        load_features(f.path(), &opts(ItemResolution::Strict(&ratings))),
        Err(Error::UnknownItem { line: 2, .. })
    ));
    let lenient = load_features(f.path(), &opts(ItemResolution::Lenient(&ratings))).unwrap();
    assert_eq!(lenient.skipped_unknown_items, 1);
    assert_eq!(lenient.features.num_items(), 2);
    let standalone = load_features(f.path(), &opts(ItemResolution::Standalone)).unwrap();
    assert_eq!(standalone.features.num_items(), 2);
    assert_eq!(standalone.features.len(), 2);
}

#[test]
fn k_neighbour_modality_rows_have_k_entries() {
    // Each movie lists its k most similar movies as features.
    let (n, k) = (12usize, 3usize);
    let mut ratings = String::new();
    for j in 0..n {
        ratings.push_str(&format!("u\tm{j}\t4\n"));
    }
    let mut feats = String::new();
    for j in 0..n {
        for step in 1..=k {
            feats.push_str(&format!("sim_m{j}\tm{}\n", (j + step) % n));
        }
    }
    let ratings = load_ratings(write_temp(&ratings).path(), &LoadOptions::default()).unwrap();
    let fs = load_features(
        write_temp(&feats).path(),
        &FeatureLoadOptions { format: LoadOptions::default(), items: ItemResolution::Strict(&ratings) },
    )
    .unwrap()
    .features;
    assert_eq!(fs.num_features(), n);
    assert!((0..n).all(|f| fs.feature_entries(f).count() == k));
}

#[test]
fn binarize_matches_filter_oracle() {
    let ds = random_ratings(30, 20, 0.4, 1.0, 5.0, 9);
    let b = ds.binarize(4.0);
    let oracle: BTreeSet<(usize, usize)> =
        ds.entries().iter().filter(|e| e.value >= 4.0).map(|e| (e.row, e.col)).collect();
    let got: BTreeSet<(usize, usize)> = b.entries().iter().map(|e| (e.row, e.col)).collect();
    assert_eq!(got, oracle);
    assert!(b.entries().iter().all(|e| e.value == 1.0));
    assert_eq!(ds.binarize(f64::NEG_INFINITY).len(), ds.len());
}

#[test]
fn popularity_fractions_match_brute_force() {
    let ratings = random_ratings(40, 30, 0.3, 1.0, 5.0, 4);
    let fs = dpcmf::dataset::FeatureDataset::from_entries(
        6,
        30,
        (0..6)
            .flat_map(|k| (0..30).filter(move |j| (j * (k + 2)) % 7 < 2 + k % 3).map(move |j| Entry::new(k, j, 1.0)))
            .collect(),
    )
    .unwrap();
    let buckets = popularity_buckets(&ratings, 4).unwrap();
    let pop = fraction_popular_per_feature(&fs, &buckets).unwrap();
    for (k, total, frac) in pop.rows {
        let items: Vec<usize> = fs.entries().iter().filter(|e| e.row == k).map(|e| e.col).collect();
        let top = items.iter().filter(|&&j| buckets.bucket_of(j) == 0).count();
        assert_eq!(total, items.len());
        assert_eq!(frac, top as f64 / items.len() as f64);
    }
}

#[test]
fn split_concentration() {
    let ds = random_ratings(500, 400, 0.5, 1.0, 5.0, 2);
    assert!(ds.len() > 90_000);
    let (tr, va, te) = split(&ds, &SplitSpec { seed: 11, ..SplitSpec::default() }).unwrap();
    let n = ds.len() as f64;
    for (part, p) in [(tr.len(), 0.8), (va.len(), 0.1), (te.len(), 0.1)] {
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((part as f64 - n * p).abs() < 3.0 * sd, "{part} vs {}", n * p);
    }
}
