//! Label-coherence filtering.

use std::fmt;

use super::manifest::Sample;

/// Removal rules, in the order they are tried.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FilterRule {
    /// Valence or arousal outside [-1, 1].
    InvalidRange,
    /// Happiness with negative valence.
    HappyNegative,
    /// Sadness with positive valence.
    SadPositive,
    /// Neutral with extreme valence and arousal.
    NeutralExtreme,
}

impl FilterRule {
    pub const ALL: [FilterRule; 4] =
        [FilterRule::InvalidRange, FilterRule::HappyNegative, FilterRule::SadPositive, FilterRule::NeutralExtreme];

    pub fn name(self) -> &'static str {
        match self {
            FilterRule::InvalidRange => "invalid-range",
            FilterRule::HappyNegative => "happy-negative",
            FilterRule::SadPositive => "sad-positive",
            FilterRule::NeutralExtreme => "neutral-extreme",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterThresholds {
    pub happy: usize,
    pub sad: usize,
    pub neutral: usize,
    /// Magnitude above which Neutral valence/arousal count as extreme.
    pub neutral_limit: f32,
    /// Require both dimensions to be extreme (`true`) or either one.
    pub neutral_both: bool,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self { happy: 4, sad: 5, neutral: 0, neutral_limit: 0.5, neutral_both: true }
    }
}

impl FilterThresholds {
    /// The first rule `s` violates.
    pub fn violation(&self, s: &Sample) -> Option<FilterRule> {
        let in_range = |v: f32| (-1.0..=1.0).contains(&v);
        if !in_range(s.valence) || !in_range(s.arousal) {
            return Some(FilterRule::InvalidRange);
        }
        match s.expression {
            Some(c) if c == self.happy && s.valence < 0.0 => Some(FilterRule::HappyNegative),
            Some(c) if c == self.sad && s.valence > 0.0 => Some(FilterRule::SadPositive),
            Some(c) if c == self.neutral => {
                let (v, a) = (s.valence.abs() > self.neutral_limit, s.arousal.abs() > self.neutral_limit);
                let extreme = if self.neutral_both { v && a } else { v || a };
                extreme.then_some(FilterRule::NeutralExtreme)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub kept: usize,
    /// Indexed like [`FilterRule::ALL`].
    pub removed: [usize; 4],
}

impl FilterReport {
    pub fn removed_by(&self, rule: FilterRule) -> usize {
        self.removed[rule as usize]
    }

    pub fn total_removed(&self) -> usize {
        self.removed.iter().sum()
    }

    pub fn input(&self) -> usize {
        self.kept + self.total_removed()
    }
}

impl fmt::Display for FilterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input            {:>8}", self.input())?;
        writeln!(f, "kept             {:>8}", self.kept)?;
        for rule in FilterRule::ALL {
            writeln!(f, "removed {:<16} {:>8}", rule.name(), self.removed_by(rule))?;
        }
        Ok(())
    }
}

pub fn filter_coherence(samples: &[Sample], thresholds: &FilterThresholds) -> (Vec<Sample>, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::with_capacity(samples.len());
    for s in samples {
        match thresholds.violation(s) {
            Some(rule) => report.removed[rule as usize] += 1,
            None => kept.push(s.clone()),
        }
    }
    report.kept = kept.len();
    (kept, report)
}
