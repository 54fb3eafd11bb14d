use crate::error::ShapeError;
use crate::tensor::{Real, Tensor};

/// Probabilities are clamped into `[CLAMP, 1 − CLAMP]` before the log.
pub const CE_CLAMP: f64 = 1e-7;

/// Mean over the batch of `(pred − target)²`, with its gradient w.r.t. `pred`.
pub fn mse<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), ShapeError> {
    if pred.shape() != target.shape() {
        return Err(ShapeError::mismatch("mse", format!("{:?}", pred.shape()), format!("{:?}", target.shape())));
    }
    let n = T::from_f64(pred.shape()[0] as f64);
    let two = T::from_f64(2.0);
    let mut loss = T::zero();
    let grad = Tensor::from_fn(pred.shape(), |j| {
        let d = pred.data()[j] - target.data()[j];
        loss = loss + d * d;
        two * d / n
    });
    Ok((loss / n, grad))
}

/// Mean of `−log p[b, target[b]]` over the batch, consuming softmax output.
///
/// The gradient w.r.t. `probs` is zero where the clamp is active.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>), ShapeError> {
    let &[batch, classes] = probs.shape() else {
        return Err(ShapeError::mismatch("cross_entropy", "probs [B,K]", format!("{:?}", probs.shape())));
    };
    if targets.len() != batch {
        return Err(ShapeError::mismatch("cross_entropy", format!("{batch} targets"), format!("{}", targets.len())));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(ShapeError::mismatch("cross_entropy", format!("class in [0,{classes})"), format!("{bad}")));
    }
    let lo = T::from_f64(CE_CLAMP);
    let hi = T::one() - lo;
    let n = T::from_f64(batch as f64);
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(probs.shape());
    for (b, &t) in targets.iter().enumerate() {
        let p = probs.data()[b * classes + t];
        let clamped = p.max(lo).min(hi);
        loss = loss - clamped.ln();
        if p > lo && p < hi {
            grad.data_mut()[b * classes + t] = -T::one() / (n * p);
        }
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_values() {
        let (l, _) = mse(&Tensor::<f32>::full(&[1, 1], 0.5), &Tensor::full(&[1, 1], 0.5)).unwrap();
        assert_eq!(l, 0.0);
        let pred = Tensor::<f32>::new(&[2, 1], vec![0.0, 1.0]).unwrap();
        let (l, g) = mse(&pred, &Tensor::full(&[2, 1], 1.0)).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g.data(), &[-1.0, 0.0]);
    }

    #[test]
    fn uniform_cross_entropy_is_ln_k() {
        let probs = Tensor::<f64>::full(&[3, 7], 1.0 / 7.0);
        for t in 0..7 {
            let (l, _) = cross_entropy(&probs, &[t, (t + 1) % 7, 6]).unwrap();
            assert!((l - 7f64.ln()).abs() < 1e-12);
        }
        assert!((7f64.ln() - 1.94591).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let probs = Tensor::<f64>::new(&[1, 2], vec![0.0, 1.0]).unwrap();
        let (l, g) = cross_entropy(&probs, &[0]).unwrap();
        assert!((l + CE_CLAMP.ln()).abs() < 1e-12);
        assert_eq!(g.data(), &[0.0, 0.0]);
    }

    #[test]
    fn cross_entropy_rejects_bad_target() {
        let probs = Tensor::<f32>::full(&[1, 3], 1.0 / 3.0);
        assert!(cross_entropy(&probs, &[3]).is_err());
        assert!(cross_entropy(&probs, &[0, 1]).is_err());
    }
}
