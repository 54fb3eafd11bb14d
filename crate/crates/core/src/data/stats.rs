//! Label distribution summaries.

use std::fmt::Write as _;

use super::balance::{bin_center, bin_valence, VALENCE_BINS};
use super::manifest::Sample;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistributionReport {
    pub class_counts: Vec<usize>,
    pub unlabeled: usize,
    /// Labels at or beyond `classes`.
    pub other_classes: usize,
    pub valence: [usize; VALENCE_BINS],
    pub arousal: [usize; VALENCE_BINS],
    /// Values outside [-1,1], counted in the nearest end bin.
    pub valence_out_of_range: usize,
    pub arousal_out_of_range: usize,
}

fn bin_clamped(v: f32) -> (usize, bool) {
    match bin_valence(v) {
        Ok(b) => (b, false),
        Err(_) if v < 0.0 => (0, true),
        Err(_) => (VALENCE_BINS - 1, true),
    }
}

/// Count classes and bin both dimensions into 21 bins.
pub fn stats(samples: &[Sample], classes: usize) -> DistributionReport {
    let mut r = DistributionReport {
        class_counts: vec![0; classes],
        unlabeled: 0,
        other_classes: 0,
        valence: [0; VALENCE_BINS],
        arousal: [0; VALENCE_BINS],
        valence_out_of_range: 0,
        arousal_out_of_range: 0,
    };
    for s in samples {
        match s.expression {
            Some(c) if c < classes => r.class_counts[c] += 1,
            Some(_) => r.other_classes += 1,
            None => r.unlabeled += 1,
        }
        let (b, out) = bin_clamped(s.valence);
        r.valence[b] += 1;
        r.valence_out_of_range += out as usize;
        let (b, out) = bin_clamped(s.arousal);
        r.arousal[b] += 1;
        r.arousal_out_of_range += out as usize;
    }
    r
}

impl DistributionReport {
    pub fn total(&self) -> usize {
        self.class_counts.iter().sum::<usize>() + self.unlabeled + self.other_classes
    }

    /// `label,count` rows; `names` labels the classes it covers.
    pub fn classes_csv(&self, names: &[&str]) -> String {
        let mut out = String::from("label,count\n");
        for (c, n) in self.class_counts.iter().enumerate() {
            let _ = writeln!(out, "{},{n}", class_label(names, c));
        }
        let _ = writeln!(out, "unlabeled,{}", self.unlabeled);
        out
    }

    pub fn bins_csv(&self) -> String {
        let mut out = String::from("bin_center,valence_count,arousal_count\n");
        for b in 0..VALENCE_BINS {
            let _ = writeln!(out, "{:.1},{},{}", bin_center(b), self.valence[b], self.arousal[b]);
        }
        out
    }

    /// Aligned text with a bar per bin.
    pub fn to_text(&self, names: &[&str]) -> String {
        let mut out = format!("samples: {}\n\nexpression\n", self.total());
        let peak = self.class_counts.iter().copied().max().unwrap_or(0).max(1);
        for (c, &n) in self.class_counts.iter().enumerate() {
            let _ = writeln!(out, "  {:<12} {n:>8}  {}", class_label(names, c), bar(n, peak));
        }
        let _ = writeln!(out, "  {:<12} {:>8}", "unlabeled", self.unlabeled);
        out.push_str("\nbin    valence  arousal\n");
        let peak = self.valence.iter().chain(&self.arousal).copied().max().unwrap_or(0).max(1);
        for b in 0..VALENCE_BINS {
            let _ = writeln!(
                out,
                "{:>4.1} {:>9} {:>8}  {:<20} {}",
                bin_center(b),
                self.valence[b],
                self.arousal[b],
                bar(self.valence[b], peak),
                bar(self.arousal[b], peak)
            );
        }
        if self.valence_out_of_range + self.arousal_out_of_range > 0 {
            let _ = writeln!(
                out,
                "out of range (counted in end bins): valence {}, arousal {}",
                self.valence_out_of_range, self.arousal_out_of_range
            );
        }
        out
    }
}

fn class_label(names: &[&str], c: usize) -> String {
    names.get(c).map(|n| n.to_string()).unwrap_or_else(|| c.to_string())
}

fn bar(n: usize, peak: usize) -> String {
    "#".repeat((n * 20).div_ceil(peak))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EXPRESSION_NAMES;

    #[test]
    fn four_sample_fixture() {
        let samples = vec![
            Sample::new("a", "v", 0, -0.3, 0.1, Some(4)),
            Sample::new("b", "v", 1, 0.2, 0.1, Some(5)),
            Sample::new("c", "v", 2, -5.0, 0.1, Some(2)),
            Sample::new("d", "v", 3, 0.6, 0.7, Some(0)),
        ];
        let r = stats(&samples, 7);
        assert_eq!(r.class_counts, vec![1, 0, 1, 0, 1, 1, 0]);
        assert_eq!(r.valence.iter().sum::<usize>(), 4);
        assert_eq!(r.arousal.iter().sum::<usize>(), 4);
        assert_eq!((r.valence[0], r.valence_out_of_range), (1, 1));
        assert!(r.classes_csv(&EXPRESSION_NAMES).starts_with("label,count\nNeutral,1\n"));
    }

    #[test]
    fn empty_input() {
        let r = stats(&[], 7);
        assert_eq!(r.total(), 0);
        assert!(r.valence.iter().chain(&r.arousal).all(|&c| c == 0));
        let csv = r.bins_csv();
        assert_eq!(csv.lines().count(), 22);
        assert!(csv.contains("\n-1.0,0,0\n") && csv.ends_with("1.0,0,0\n"));
        assert!(r.to_text(&EXPRESSION_NAMES).contains("samples: 0"));
    }
}
