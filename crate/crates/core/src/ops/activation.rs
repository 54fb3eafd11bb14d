//! Elementwise activations and the row softmax.
//!
//! Backward passes are written in terms of the forward *output*, which is
//! what the model caches.

use crate::error::ShapeError;
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

pub fn relu_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    zip_with(output, grad_out, |y, g| if y > T::zero() { g } else { T::zero() })
}

pub fn tanh_act<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

pub fn tanh_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    zip_with(output, grad_out, |y, g| g * (T::one() - y * y))
}

#[inline]
pub(crate) fn sigmoid_scalar<T: Real>(v: T) -> T {
    // Branch on sign so exp never overflows.
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn sigmoid_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    zip_with(output, grad_out, |y, g| g * y * (T::one() - y))
}

/// Softmax over the last axis with max subtraction.
pub fn softmax<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, ShapeError> {
    let k = *x.shape().last().ok_or(ShapeError::Empty { op: "softmax" })?;
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Ok(out)
}

/// `dx = y ⊙ (dy − Σ dy⊙y)` per row.
pub fn softmax_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, ShapeError> {
    if output.shape() != grad_out.shape() {
        return Err(ShapeError::mismatch("softmax_backward", format!("{:?}", output.shape()), format!("{:?}", grad_out.shape())));
    }
    let k = *output.shape().last().ok_or(ShapeError::Empty { op: "softmax_backward" })?;
    let mut grad = grad_out.clone();
    for (g, y) in grad.data_mut().chunks_mut(k).zip(output.data().chunks(k)) {
        let dot = g.iter().zip(y).fold(T::zero(), |acc, (a, b)| acc + *a * *b);
        for (gv, yv) in g.iter_mut().zip(y) {
            *gv = *yv * (*gv - dot);
        }
    }
    Ok(grad)
}

fn zip_with<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    assert_eq!(a.shape(), b.shape(), "activation gradient shape mismatch");
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_values() {
        let x = Tensor::<f32>::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let zero = Tensor::<f32>::zeros(&[1]);
        assert_eq!(sigmoid(&zero).data(), &[0.5]);
        assert_eq!(tanh_act(&zero).data(), &[0.0]);
        assert_eq!(softmax(&Tensor::<f32>::zeros(&[1, 2])).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let x = Tensor::<f32>::new(&[2], vec![-1000.0, 1000.0]).unwrap();
        let y = sigmoid(&x);
        assert!(y.all_finite());
        assert_eq!(y.data(), &[0.0, 1.0]);
    }

    proptest::proptest! {
        #[test]
        fn softmax_rows_are_distributions(row in proptest::collection::vec(-8.0f32..8.0, 2..9)) {
            let k = row.len();
            let y = softmax(&Tensor::new(&[1, k], row).unwrap()).unwrap();
            let sum: f32 = y.data().iter().sum();
            proptest::prop_assert!((sum - 1.0).abs() <= 1e-6);
            proptest::prop_assert!(y.data().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }
}
