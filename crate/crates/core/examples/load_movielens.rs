//! Loads MovieLens-format files (`user::movie::rating::timestamp` and
//! `movie::title::genre|genre`) and turns genres into a binary feature matrix.
//!
//! `cargo run --release --example load_movielens -- ratings.dat [movies.dat]`
//!
//! Without arguments a small sample in the same format is written to a
//! temporary directory and used instead.

use std::path::PathBuf;
use std::sync::Arc;

use dpcmf::dataset::{load_ratings, popularity_buckets, Entry, LoadOptions, Vocabulary};
use dpcmf::{FeatureDataset, RatingDataset};

const SAMPLE_RATINGS: &str = "1::10::5::838985046\n1::20::3::838983525\n2::10::4::838983392\n\
2::30::2.5::838983421\n3::10::4::838983392\n3::20::1::838983392\n4::10::5::838984474\n";
const SAMPLE_MOVIES: &str = "10::A (1995)::Comedy|Drama\n20::B (1995)::Drama\n30::C (1996)::Horror|Comedy\n\
99::Never rated (1997)::Drama\n";

/// Genre feature matrix over the rating vocabulary; movies without ratings are skipped.
fn genre_features(text: &str, ratings: &RatingDataset) -> dpcmf::Result<FeatureDataset> {
    let items = ratings.item_vocabulary();
    let mut genres = Vocabulary::default();
    let mut entries = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split("::").collect();
        let (Some(movie), Some(list)) = (fields.first(), fields.last()) else { continue };
        let Some(item) = items.get(movie.trim()) else { continue };
        for g in list.split('|').filter(|g| !g.is_empty() && *g != "(no genres listed)") {
            entries.push(Entry::new(genres.intern(g.trim()), item, 1.0));
        }
    }
    FeatureDataset::with_vocabularies(Arc::new(genres), Arc::clone(items), entries)
}

fn main() -> dpcmf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let _sample_dir;
    let (ratings_path, movies_path) = if args.is_empty() {
        let dir = tempfile::tempdir().expect("temp dir");
        std::fs::write(dir.path().join("ratings.dat"), SAMPLE_RATINGS).expect("write sample");
        std::fs::write(dir.path().join("movies.dat"), SAMPLE_MOVIES).expect("write sample");
        let paths = (dir.path().join("ratings.dat"), Some(dir.path().join("movies.dat")));
        _sample_dir = dir;
        paths
    } else {
        (PathBuf::from(&args[0]), args.get(1).map(PathBuf::from))
    };

    let ratings = load_ratings(&ratings_path, &LoadOptions::default())?;
    println!("users {} movies {} ratings {}", ratings.num_users(), ratings.num_items(), ratings.len());
    let shares = popularity_buckets(&ratings, 4)?.rating_shares();
    let pct: Vec<String> = shares.iter().map(|s| format!("{:.1}%", 100.0 * s)).collect();
    println!("rating share by popularity bucket: {}", pct.join(" "));

    if let Some(p) = movies_path {
        let text = std::fs::read_to_string(&p).map_err(|e| dpcmf::Error::io(&p, e))?;
        let features = genre_features(&text, &ratings)?;
        println!("genres {} genre-movie entries {}", features.num_features(), features.len());
    }
    Ok(())
}
