use serde::{Deserialize, Serialize};

use super::RatingDataset;
use crate::error::{Error, Result};
use crate::rng::{Domain, RngStream};

/// Fractions for a seeded per-rating train/validation/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("split.train", self.train),
            ("split.validation", self.validation),
            ("split.test", self.test),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("fraction {f} outside [0, 1]"),
                });
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "split",
                reason: format!("fractions sum to {sum}, expected 1"),
            });
        }
        Ok(())
    }
}

/// Assigns every rating to exactly one of train, validation or test by one
/// uniform draw per rating. All parts keep the parent vocabularies.
pub fn split(
    ratings: &RatingDataset,
    spec: &SplitSpec,
) -> Result<(RatingDataset, RatingDataset, RatingDataset)> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed, Domain::Split, 0, 0).draws();
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let train_cut = spec.train;
    let validation_cut = spec.train + spec.validation;
    for e in ratings.entries() {
        let u = rng.next_f64();
        if u < train_cut {
            train.push(*e);
        } else if u < validation_cut {
            validation.push(*e);
        } else {
            test.push(*e);
        }
    }
    Ok((
        ratings.with_entries(train)?,
        ratings.with_entries(validation)?,
        ratings.with_entries(test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Entry;

    fn grid(users: usize, items: usize) -> RatingDataset {
        let entries = (0..users)
            .flat_map(|u| (0..items).map(move |i| Entry::new(u, i, (u + i) as f64)))
            .collect();
        RatingDataset::from_entries(users, items, entries).unwrap()
    }

    #[test]
    fn all_train() {
        let ds = grid(10, 10);
        let spec = SplitSpec {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
            seed: 3,
        };
        let (tr, va, te) = split(&ds, &spec).unwrap();
        assert_eq!(tr, ds);
        assert!(va.is_empty() && te.is_empty());
        assert_eq!((va.num_users(), va.num_items()), (10, 10));
    }

    #[test]
    fn sizes_concentrate_and_cover_exactly() {
        // 10^5 ratings; binomial std for a 0.1 cell is sqrt(1e5 * 0.1 * 0.9) ~ 94.9.
        let ds = grid(1000, 100);
        let spec = SplitSpec {
            seed: 17,
            ..SplitSpec::default()
        };
        let (tr, va, te) = split(&ds, &spec).unwrap();
        let n = ds.len() as f64;
        let sd = |p: f64| (n * p * (1.0 - p)).sqrt();
        assert!((tr.len() as f64 - 0.8 * n).abs() < 3.0 * sd(0.8));
        assert!((va.len() as f64 - 0.1 * n).abs() < 3.0 * sd(0.1));
        assert!((te.len() as f64 - 0.1 * n).abs() < 3.0 * sd(0.1));

        let mut all: Vec<(usize, usize)> = tr
            .entries()
            .iter()
            .chain(va.entries())
            .chain(te.entries())
            .map(|e| (e.row, e.col))
            .collect();
        all.sort();
        let parent: Vec<(usize, usize)> = ds.entries().iter().map(|e| (e.row, e.col)).collect();
        assert_eq!(all, parent);

        let again = split(&ds, &spec).unwrap();
        assert_eq!(again.0, tr);
        assert_eq!(again.2, te);
    }

    #[test]
    fn rejects_bad_fractions() {
        let ds = grid(2, 2);
        let spec = SplitSpec {
            train: 0.7,
            validation: 0.1,
            test: 0.1,
            seed: 0,
        };
        assert!(split(&ds, &spec).is_err());
        let spec = SplitSpec {
            train: 1.2,
            validation: -0.2,
            test: 0.0,
            seed: 0,
        };
        assert!(split(&ds, &spec).is_err());
    }
}
