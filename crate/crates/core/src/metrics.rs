//! Evaluation measures: concordance correlation, Pearson, accuracy, F1.
//!
//! Moments are population moments (divide by N) accumulated in one pass
//! with Welford-style updates in `f64`.

use std::fmt;

use crate::error::MetricsError;

/// Predictions paired with annotations.
#[derive(Clone, Debug)]
pub struct PairedSeries<'a> {
    predictions: &'a [f64],
    annotations: &'a [f64],
}

impl<'a> PairedSeries<'a> {
    pub fn new(predictions: &'a [f64], annotations: &'a [f64]) -> Result<Self, MetricsError> {
        if predictions.len() != annotations.len() {
            return Err(MetricsError::LengthMismatch(predictions.len(), annotations.len()));
        }
        if predictions.len() < 2 {
            return Err(MetricsError::TooShort { needed: 2, got: predictions.len() });
        }
        if predictions.iter().chain(annotations).any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        Ok(Self { predictions, annotations })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn moments(&self) -> MomentSet {
        let mut n = 0.0;
        let (mut mx, mut my) = (0.0, 0.0);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for (&x, &y) in self.predictions.iter().zip(self.annotations) {
            n += 1.0;
            let dx = x - mx;
            let dy = y - my;
            mx += dx / n;
            my += dy / n;
            sxx += dx * (x - mx);
            syy += dy * (y - my);
            sxy += dx * (y - my);
        }
        let var_x = (sxx / n).max(0.0);
        let var_y = (syy / n).max(0.0);
        let cov = sxy / n;
        let degenerate = var_x == 0.0 || var_y == 0.0;
        let rho = if degenerate { 0.0 } else { (cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0) };
        MomentSet { mean_x: mx, mean_y: my, var_x, var_y, cov, rho, degenerate }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentSet {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
    /// Pearson coefficient; 0 when `degenerate`.
    pub rho: f64,
    /// Either series has zero variance.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pearson {
    pub rho: f64,
    pub degenerate: bool,
}

pub fn pearson(s: &PairedSeries<'_>) -> Pearson {
    let m = s.moments();
    Pearson { rho: m.rho, degenerate: m.degenerate }
}

/// Concordance correlation coefficient, `2·cov / (σx² + σy² + (μx − μy)²)`.
///
/// Identical constant series have a zero denominator and score 1.
pub fn ccc(s: &PairedSeries<'_>) -> f64 {
    let m = s.moments();
    let denom = m.var_x + m.var_y + (m.mean_x - m.mean_y).powi(2);
    if denom == 0.0 {
        return 1.0;
    }
    (2.0 * m.cov / denom).clamp(-1.0, 1.0)
}

/// Convenience wrapper for `f32` series.
pub fn ccc_f32(predictions: &[f32], annotations: &[f32]) -> Result<f64, MetricsError> {
    let x: Vec<f64> = predictions.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = annotations.iter().map(|&v| v as f64).collect();
    Ok(ccc(&PairedSeries::new(&x, &y)?))
}

pub fn accuracy(predicted: &[usize], gold: &[usize]) -> Result<f64, MetricsError> {
    if predicted.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(MetricsError::TooShort { needed: 1, got: 0 });
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// `K×K` counts, rows indexed by gold class and columns by prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Confusion {
    classes: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn build(predicted: &[usize], gold: &[usize], classes: usize) -> Result<Self, MetricsError> {
        if predicted.len() != gold.len() {
            return Err(MetricsError::LengthMismatch(predicted.len(), gold.len()));
        }
        let mut counts = vec![0; classes * classes];
        for (&p, &g) in predicted.iter().zip(gold) {
            for class in [p, g] {
                if class >= classes {
                    return Err(MetricsError::ClassOutOfRange { class, classes });
                }
            }
            counts[g * classes + p] += 1;
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.classes)
    }

    /// CSV with a header of predicted-class indices and one row per gold class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gold\\pred");
        for c in 0..self.classes {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (g, row) in self.rows().enumerate() {
            out.push_str(&g.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum F1Average {
    /// Unweighted mean over classes present in gold or predictions.
    #[default]
    Macro,
    /// Mean weighted by gold support.
    Weighted,
}

/// Per-class F1 averaged according to `average`, plus the confusion matrix.
pub fn f1_score(predicted: &[usize], gold: &[usize], classes: usize, average: F1Average) -> Result<(f64, Confusion), MetricsError> {
    let confusion = Confusion::build(predicted, gold, classes)?;
    let mut sum = 0.0;
    let mut weight = 0.0;
    for c in 0..classes {
        let tp = confusion.get(c, c) as f64;
        let support = (0..classes).map(|p| confusion.get(c, p)).sum::<u64>() as f64;
        let predicted_c = (0..classes).map(|g| confusion.get(g, c)).sum::<u64>() as f64;
        if support == 0.0 && predicted_c == 0.0 {
            continue;
        }
        let precision = if predicted_c > 0.0 { tp / predicted_c } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        let w = match average {
            F1Average::Macro => 1.0,
            F1Average::Weighted => support,
        };
        sum += w * f1;
        weight += w;
    }
    let f1 = if weight > 0.0 { sum / weight } else { 0.0 };
    Ok((f1, confusion))
}

pub fn f1_macro(predicted: &[usize], gold: &[usize], classes: usize) -> Result<(f64, Confusion), MetricsError> {
    f1_score(predicted, gold, classes, F1Average::Macro)
}

/// One evaluation row, laid out like the usual results table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub ccc_arousal: f64,
    pub ccc_valence: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Samples evaluated.
    pub n: usize,
    /// Samples carrying an expression label; equals the confusion total.
    pub n_expression: usize,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 4] = ["Arousal", "Valence", "F1-Score", "Accuracy"];

    pub fn header() -> String {
        Self::COLUMNS.join(",")
    }

    /// `arousal,valence,f1,accuracy` with four decimals.
    pub fn row(&self) -> String {
        format!("{:.4},{:.4},{:.4},{:.4}", self.ccc_arousal, self.ccc_valence, self.f1, self.accuracy)
    }

    /// `metric,value` CSV.
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\nccc_arousal,{}\nccc_valence,{}\nf1,{}\naccuracy,{}\nn,{}\nn_expression,{}\n",
            self.ccc_arousal, self.ccc_valence, self.f1, self.accuracy, self.n, self.n_expression
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::header())?;
        write!(f, "{}", self.row())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series<'a>(x: &'a [f64], y: &'a [f64]) -> PairedSeries<'a> {
        PairedSeries::new(x, y).unwrap()
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&series(&x, &y)).rho - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&series(&x, &neg)).rho + 1.0).abs() < 1e-12);
        let p = pearson(&series(&[4.0, 4.0, 4.0], &x));
        assert_eq!(p.rho, 0.0);
        assert!(p.degenerate);
        assert!(matches!(PairedSeries::new(&[1.0], &[1.0]), Err(MetricsError::TooShort { .. })));
    }

    #[test]
    fn ccc_cases() {
        let x = [-1.0, 0.0, 1.0];
        assert_eq!(ccc(&series(&x, &x)), 1.0);
        assert!((ccc(&series(&x, &[-0.5, 0.0, 0.5])) - 0.8).abs() < 1e-12);
        assert_eq!(ccc(&series(&[0.2, 0.2, 0.2], &x)), 0.0);
        assert_eq!(ccc(&series(&[0.3, 0.3], &[0.3, 0.3])), 1.0);
        assert!(PairedSeries::new(&[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(), 0.75);
        assert_eq!(accuracy(&[1, 1], &[1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn f1_cases() {
        let (f1, confusion) = f1_macro(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(f1, 1.0);
        assert_eq!(confusion.total(), 3);
        let (f1, _) = f1_macro(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert!((f1 - 1.0 / 3.0).abs() < 1e-12);
        // absent class 2 is skipped rather than averaged in as zero
        let (f1, _) = f1_macro(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(f1, 1.0);
        assert!(matches!(f1_macro(&[3], &[0], 3), Err(MetricsError::ClassOutOfRange { class: 3, .. })));
        let (w, _) = f1_score(&[0, 0, 0, 0], &[0, 0, 0, 1], 2, F1Average::Weighted).unwrap();
        assert!((w - 0.75 * (2.0 * 0.75 / 1.75)).abs() < 1e-12);
    }

    #[test]
    fn report_layout() {
        let (f1, confusion) = f1_macro(&[0, 1], &[0, 1], 2).unwrap();
        let r = MetricsReport { ccc_arousal: 1.0, ccc_valence: 1.0, accuracy: 1.0, f1, confusion, n: 2, n_expression: 2 };
        assert_eq!(MetricsReport::header(), "Arousal,Valence,F1-Score,Accuracy");
        assert_eq!(r.row(), "1.0000,1.0000,1.0000,1.0000");
        assert!(r.confusion.to_csv().starts_with("gold\\pred,0,1\n0,1,0\n"));
    }
}
