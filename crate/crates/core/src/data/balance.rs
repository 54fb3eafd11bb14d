//! Oversampling minority classes and valence bins with augmented copies.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DataError, Result};

use super::augment::Recipe;
use super::manifest::Sample;

pub const VALENCE_BINS: usize = 21;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Balance {
    #[default]
    None,
    /// Equalize expression class counts.
    Categorical,
    /// Equalize occupied valence-bin counts.
    Dimensional,
}

impl FromStr for Balance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Balance::None),
            "cat" => Ok(Balance::Categorical),
            "dim" => Ok(Balance::Dimensional),
            _ => Err(format!("expected none, cat or dim, got `{s}`")),
        }
    }
}

impl fmt::Display for Balance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Balance::None => "none",
            Balance::Categorical => "cat",
            Balance::Dimensional => "dim",
        })
    }
}

/// Bin index of `v` among 21 bins centred at -1.0, -0.9, ..., 1.0.
pub fn bin_valence(v: f32) -> Result<usize> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(DataError::ValenceRange(v).into());
    }
    // Decimal half-way values such as -0.15 are stored slightly off the
    // half-way point in f32; the nudge rounds them up as written.
    let scaled = (v as f64 + 1.0) * 10.0 + 1e-5;
    Ok((scaled.round() as usize).min(VALENCE_BINS - 1))
}

pub fn bin_center(bin: usize) -> f32 {
    bin as f32 / 10.0 - 1.0
}

/// Append augmented copies so every group reaches the largest group's size.
///
/// `groups[g]` lists indices into `samples`. Sources are taken round-robin
/// within the group; recipes come from one generator seeded with `seed`.
fn equalize(samples: &[Sample], groups: &[Vec<usize>], seed: u64) -> Vec<Sample> {
    let target = groups.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = samples.to_vec();
    for members in groups.iter().filter(|m| !m.is_empty()) {
        for i in 0..target - members.len() {
            let source = members[i % members.len()];
            out.push(samples[source].augmented(source, Recipe::sample(&mut rng)));
        }
    }
    out
}

fn originals(samples: &[Sample]) -> impl Iterator<Item = (usize, &Sample)> {
    samples.iter().enumerate().filter(|(_, s)| !s.is_augmented())
}

/// Oversample so each of the `classes` expression classes matches the largest.
///
/// Unlabeled samples are kept but not counted.
pub fn balance_categorical(samples: &[Sample], classes: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut groups = vec![Vec::new(); classes];
    for (i, s) in originals(samples) {
        if let Some(c) = s.expression {
            groups.get_mut(c).ok_or(DataError::ClassRange { class: c, classes })?.push(i);
        }
    }
    let empty: Vec<usize> = groups.iter().enumerate().filter(|(_, g)| g.is_empty()).map(|(c, _)| c).collect();
    if !empty.is_empty() {
        return Err(DataError::EmptyClasses(empty).into());
    }
    Ok(equalize(samples, &groups, seed))
}

/// Oversample so every occupied valence bin matches the largest one.
pub fn balance_dimensional(samples: &[Sample], seed: u64) -> Result<Vec<Sample>> {
    let mut groups = vec![Vec::new(); VALENCE_BINS];
    for (i, s) in originals(samples) {
        groups[bin_valence(s.valence)?].push(i);
    }
    Ok(equalize(samples, &groups, seed))
}

pub fn apply_balance(samples: &[Sample], balance: Balance, classes: usize, seed: u64) -> Result<Vec<Sample>> {
    match balance {
        Balance::None => Ok(samples.to_vec()),
        Balance::Categorical => balance_categorical(samples, classes, seed),
        Balance::Dimensional => balance_dimensional(samples, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(frame: u64, v: f32, e: usize) -> Sample {
        Sample::new(format!("{frame}.ppm"), "v", frame, v, 0.0, Some(e))
    }

    fn counts(samples: &[Sample], classes: usize) -> Vec<usize> {
        let mut c = vec![0; classes];
        samples.iter().for_each(|s| c[s.expression.unwrap()] += 1);
        c
    }

    #[test]
    fn bins() {
        assert_eq!(bin_valence(-1.0).unwrap(), 0);
        assert_eq!(bin_valence(1.0).unwrap(), 20);
        assert_eq!(bin_valence(0.0).unwrap(), 10);
        assert_eq!(bin_valence(0.13).unwrap(), 11);
        assert_eq!(bin_valence(0.15).unwrap(), 12);
        assert_eq!(bin_valence(-0.15).unwrap(), 9);
        assert_eq!(bin_valence(-0.149).unwrap(), 9);
        assert_eq!(bin_valence(-0.151).unwrap(), 8);
        assert!(bin_valence(1.01).is_err());
        assert!((bin_center(13) - 0.3).abs() < 1e-6);
    }

    #[test]
    fn three_to_one() {
        let input = vec![s(0, 0.0, 0), s(1, 0.0, 0), s(2, 0.0, 0), s(3, 0.0, 1)];
        let out = balance_categorical(&input, 2, 1).unwrap();
        assert_eq!(counts(&out, 2), vec![3, 3]);
        assert_eq!(&out[..4], &input[..]);
        assert!(out[4..].iter().all(|a| a.augmentation.as_ref().unwrap().source == 3));
    }

    #[test]
    fn balanced_is_fixed_point() {
        let input = vec![s(0, 0.0, 0), s(1, 0.0, 1)];
        assert_eq!(balance_categorical(&input, 2, 9).unwrap(), input);
    }

    #[test]
    fn empty_class_listed() {
        let err = balance_categorical(&[s(0, 0.0, 0), s(1, 0.0, 2)], 4, 0).unwrap_err();
        assert!(matches!(err, crate::Error::Data(DataError::EmptyClasses(ref c)) if c == &vec![1, 3]));
    }

    #[test]
    fn dimensional_bins() {
        let input: Vec<Sample> = (0..6).map(|i| s(i, if i < 4 { 0.02 } else { 0.1 }, 0)).collect();
        let out = balance_dimensional(&input, 5).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(out.iter().filter(|x| bin_valence(x.valence).unwrap() == 11).count(), 4);
        let single: Vec<Sample> = (0..3).map(|i| s(i, 0.5, 0)).collect();
        assert_eq!(balance_dimensional(&single, 5).unwrap(), single);
    }

    #[test]
    fn parse_and_display() {
        for b in [Balance::None, Balance::Categorical, Balance::Dimensional] {
            assert_eq!(b.to_string().parse::<Balance>().unwrap(), b);
        }
        assert!("both".parse::<Balance>().is_err());
    }

    proptest! {
        #[test]
        fn categorical_invariants(labels in proptest::collection::vec(0usize..4, 4..40), seed in any::<u64>()) {
            let mut input: Vec<Sample> = labels.iter().enumerate().map(|(i, &c)| s(i as u64, 0.0, c)).collect();
            for c in 0..4 {
                input.push(s(100 + c as u64, 0.0, c));
            }
            let out = balance_categorical(&input, 4, seed).unwrap();
            let before = counts(&input, 4);
            let max = *before.iter().max().unwrap();
            prop_assert!(counts(&out, 4).iter().all(|&c| c == max));
            prop_assert_eq!(&out[..input.len()], &input[..]);
            prop_assert_eq!(out, balance_categorical(&input, 4, seed).unwrap());
        }

        #[test]
        fn dimensional_invariants(vs in proptest::collection::vec(-1.0f32..=1.0, 1..50), seed in any::<u64>()) {
            let input: Vec<Sample> = vs.iter().enumerate().map(|(i, &v)| s(i as u64, v, 0)).collect();
            let out = balance_dimensional(&input, seed).unwrap();
            let mut hist = [0usize; VALENCE_BINS];
            out.iter().for_each(|x| hist[bin_valence(x.valence).unwrap()] += 1);
            let occupied: Vec<usize> = hist.iter().copied().filter(|&c| c > 0).collect();
            prop_assert!(occupied.windows(2).all(|w| w[0] == w[1]));
        }

        #[test]
        fn binning_monotone(a in -1.0f32..=1.0, b in -1.0f32..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bin_valence(lo).unwrap() <= bin_valence(hi).unwrap());
        }
    }

    #[test]
    fn binning_surjective() {
        let hit: std::collections::BTreeSet<usize> = (0..=2000).map(|i| bin_valence(i as f32 / 1000.0 - 1.0).unwrap()).collect();
        assert_eq!(hit.len(), VALENCE_BINS);
    }
}
