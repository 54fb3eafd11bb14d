//! 2×2 max pooling with stride 2. A trailing odd row or column is dropped.

use crate::error::ShapeError;
use crate::tensor::{Real, Tensor};

/// Pooled values plus, for each output element, the flat input index that won.
#[derive(Clone, Debug)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<Pooled<T>, ShapeError> {
    let &[batch, height, width, channels] = input.shape() else {
        return Err(ShapeError::mismatch("maxpool2", "input [B,H,W,C]", format!("{:?}", input.shape())));
    };
    if height < 2 || width < 2 {
        return Err(ShapeError::mismatch("maxpool2", "H >= 2 and W >= 2", format!("{height}x{width}")));
    }
    let (oh, ow) = (height / 2, width / 2);
    let data = input.data();
    let mut output = Vec::with_capacity(batch * oh * ow * channels);
    let mut argmax = Vec::with_capacity(output.capacity());
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                let top_left = ((b * height + 2 * oy) * width + 2 * ox) * channels;
                // Row-major window scan; strict `>` keeps the first maximum.
                let taps = [
                    top_left,
                    top_left + channels,
                    top_left + width * channels,
                    top_left + (width + 1) * channels,
                ];
                for c in 0..channels {
                    let mut best = taps[0] + c;
                    for &tap in &taps[1..] {
                        if data[tap + c] > data[best] {
                            best = tap + c;
                        }
                    }
                    output.push(data[best]);
                    argmax.push(best);
                }
            }
        }
    }
    let output = Tensor::new(&[batch, oh, ow, channels], output).expect("maxpool2 output shape");
    Ok(Pooled { output, argmax })
}

/// Route each output gradient to the input element that produced the max.
pub fn maxpool2_backward<T: Real>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, ShapeError> {
    if grad_out.len() != argmax.len() {
        return Err(ShapeError::mismatch(
            "maxpool2_backward",
            format!("{} gradients", argmax.len()),
            format!("{}", grad_out.len()),
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    let dst = grad.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        dst[idx] = dst[idx] + g;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_four() {
        let input = Tensor::<f32>::new(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let pooled = maxpool2(&input).unwrap();
        assert_eq!(pooled.output.data(), &[4.0]);
        assert_eq!(pooled.argmax, vec![3]);
    }

    #[test]
    fn spatial_trace_of_four_pools() {
        let mut x = Tensor::<f32>::zeros(&[1, 120, 120, 1]);
        let mut trace = vec![120];
        for _ in 0..4 {
            x = maxpool2(&x).unwrap().output;
            assert_eq!(x.shape()[1], x.shape()[2]);
            trace.push(x.shape()[1]);
        }
        assert_eq!(trace, vec![120, 60, 30, 15, 7]);
    }

    #[test]
    fn constant_in_constant_out() {
        let input = Tensor::<f32>::full(&[2, 5, 7, 3], 0.3);
        let pooled = maxpool2(&input).unwrap();
        assert_eq!(pooled.output.shape(), &[2, 2, 3, 3]);
        assert!(pooled.output.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn ties_route_to_first_in_scan_order() {
        let input = Tensor::<f32>::new(&[1, 2, 2, 1], vec![1.0, 5.0, 5.0, 5.0]).unwrap();
        let pooled = maxpool2(&input).unwrap();
        let grad = maxpool2_backward(input.shape(), &pooled.argmax, &Tensor::full(&[1, 1, 1, 1], 2.0)).unwrap();
        assert_eq!(grad.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_tiny_inputs() {
        assert!(maxpool2(&Tensor::<f32>::zeros(&[1, 1, 4, 1])).is_err());
        assert!(maxpool2(&Tensor::<f32>::zeros(&[1, 4, 1, 1])).is_err());
    }

    proptest::proptest! {
        #[test]
        fn equals_brute_force_window_max(
            h in 2usize..8, w in 2usize..8, c in 1usize..3,
            seed in proptest::collection::vec(-100i32..100, 128),
        ) {
            let input = Tensor::<f32>::from_fn(&[1, h, w, c], |i| seed[i % seed.len()] as f32 + (i as f32) * 1e-3);
            let pooled = maxpool2(&input).unwrap();
            for oy in 0..h / 2 {
                for ox in 0..w / 2 {
                    for ch in 0..c {
                        let mut m = f32::NEG_INFINITY;
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            m = m.max(input.at(&[0, 2 * oy + dy, 2 * ox + dx, ch]));
                        }
                        proptest::prop_assert_eq!(pooled.output.at(&[0, oy, ox, ch]), m);
                    }
                }
            }
        }
    }
}
