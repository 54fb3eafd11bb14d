use crate::error::{Error, MetricsError, Result};
use crate::metrics::{ccc_f32, f1_score, F1Average, MetricsReport};
use crate::model::{ModelGraph, PredictionTriple};
use crate::tensor::Tensor;

use super::loss::Labels;
use super::Example;

/// Inputs per inference chunk.
const CHUNK: usize = 32;

/// Run the model over every example, in order.
pub fn predict(model: &ModelGraph, examples: &[Example]) -> Result<Vec<PredictionTriple>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(CHUNK) {
        let inputs: Vec<Tensor> = chunk.iter().map(|e| e.input.clone()).collect();
        out.extend(model.forward(&Tensor::stack(&inputs)?)?.triples());
    }
    Ok(out)
}

/// Score predictions against labels. Each measure uses the samples labelled for it.
pub fn score(predictions: &[PredictionTriple], labels: &[Labels], classes: usize, average: F1Average) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::Invalid("cannot evaluate an empty set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), labels.len()).into());
    }
    let pairs = |pick: fn(&PredictionTriple) -> f32, gold: fn(&Labels) -> Option<f32>| -> (Vec<f32>, Vec<f32>) {
        predictions.iter().zip(labels).filter_map(|(p, l)| gold(l).map(|g| (pick(p), g))).unzip()
    };
    let (pa, ga) = pairs(|p| p.arousal, |l| l.arousal);
    let (pv, gv) = pairs(|p| p.valence, |l| l.valence);
    let (pe, ge): (Vec<usize>, Vec<usize>) =
        predictions.iter().zip(labels).filter_map(|(p, l)| l.expression.map(|g| (p.class(), g))).unzip();
    let (f1, confusion) = f1_score(&pe, &ge, classes, average)?;
    let accuracy = if ge.is_empty() { 0.0 } else { crate::metrics::accuracy(&pe, &ge)? };
    Ok(MetricsReport {
        ccc_arousal: ccc_f32(&pa, &ga)?,
        ccc_valence: ccc_f32(&pv, &gv)?,
        accuracy,
        f1,
        confusion,
        n: predictions.len(),
        n_expression: ge.len(),
    })
}

pub fn evaluate(model: &ModelGraph, examples: &[Example], average: F1Average) -> Result<MetricsReport> {
    if examples.is_empty() {
        return Err(Error::Invalid("cannot evaluate an empty set".into()));
    }
    let predictions = predict(model, examples)?;
    let labels: Vec<Labels> = examples.iter().map(|e| e.labels).collect();
    score(&predictions, &labels, model.classes(), average)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(a: f32, v: f32, class: usize, k: usize) -> PredictionTriple {
        let mut dist = vec![0.0; k];
        dist[class] = 1.0;
        PredictionTriple { arousal: a, valence: v, class_distribution: dist }
    }

    #[test]
    fn oracle_predictor_scores_one() {
        let labels = [Labels::full(0.1, -0.3, 0), Labels::full(0.5, 0.2, 2), Labels::full(-0.7, 0.9, 1)];
        let preds: Vec<_> = labels.iter().map(|l| triple(l.arousal.unwrap(), l.valence.unwrap(), l.expression.unwrap(), 3)).collect();
        let r = score(&preds, &labels, 3, F1Average::Macro).unwrap();
        assert_eq!(r.row(), "1.0000,1.0000,1.0000,1.0000");
        assert_eq!(r.confusion.total() as usize, r.n_expression);
    }

    #[test]
    fn constant_predictor_has_zero_ccc() {
        let labels = [Labels::full(0.1, -0.3, 0), Labels::full(0.5, 0.2, 1), Labels::full(-0.7, 0.9, 1)];
        let preds: Vec<_> = labels.iter().map(|_| triple(0.2, 0.2, 0, 2)).collect();
        let r = score(&preds, &labels, 2, F1Average::Macro).unwrap();
        assert_eq!(r.ccc_arousal, 0.0);
        assert_eq!(r.ccc_valence, 0.0);
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(score(&[], &[], 7, F1Average::Macro).is_err());
    }
}
