//! 3×3, stride-1, zero "same" padded convolution over NHWC tensors.
//!
//! Lowered to GEMM through an im2col buffer whose columns are ordered
//! `(dy, dx, ci)`, which is exactly the row-major layout of a
//! `[3, 3, Cin, Cout]` kernel viewed as a `(9·Cin) × Cout` matrix.

use rayon::prelude::*;

use crate::error::ShapeError;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Real, Tensor};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    batch: usize,
    height: usize,
    width: usize,
    cin: usize,
    cout: usize,
}

impl Geometry {
    fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn patch(&self) -> usize {
        TAPS * self.cin
    }
}

fn geometry<T: Real>(input: &Tensor<T>, kernels: &Tensor<T>) -> Result<Geometry, ShapeError> {
    let &[batch, height, width, cin] = input.shape() else {
        return Err(ShapeError::mismatch("conv2d", "input [B,H,W,Cin]", format!("{:?}", input.shape())));
    };
    let &[kh, kw, kcin, cout] = kernels.shape() else {
        return Err(ShapeError::mismatch("conv2d", "kernels [3,3,Cin,Cout]", format!("{:?}", kernels.shape())));
    };
    if kh != KERNEL || kw != KERNEL {
        return Err(ShapeError::mismatch("conv2d", "3x3 kernels", format!("{kh}x{kw}")));
    }
    if kcin != cin {
        return Err(ShapeError::mismatch("conv2d", format!("kernel Cin = {cin}"), format!("{kcin}")));
    }
    Ok(Geometry { batch, height, width, cin, cout })
}

/// Gather every 3×3 neighbourhood of one image into rows of `col`.
fn im2col<T: Real>(image: &[T], g: &Geometry, col: &mut [T]) {
    let (h, w, c) = (g.height as isize, g.width as isize, g.cin);
    let patch = g.patch();
    for y in 0..h {
        for x in 0..w {
            let row = &mut col[((y * w + x) as usize) * patch..][..patch];
            for dy in 0..KERNEL as isize {
                for dx in 0..KERNEL as isize {
                    let dst = &mut row[((dy * KERNEL as isize + dx) as usize) * c..][..c];
                    let (sy, sx) = (y + dy - 1, x + dx - 1);
                    if sy < 0 || sy >= h || sx < 0 || sx >= w {
                        dst.fill(T::zero());
                    } else {
                        dst.copy_from_slice(&image[((sy * w + sx) as usize) * c..][..c]);
                    }
                }
            }
        }
    }
}

/// Scatter-add patch gradients back onto the image they were gathered from.
fn col2im<T: Real>(col: &[T], g: &Geometry, image: &mut [T]) {
    let (h, w, c) = (g.height as isize, g.width as isize, g.cin);
    let patch = g.patch();
    for y in 0..h {
        for x in 0..w {
            let row = &col[((y * w + x) as usize) * patch..][..patch];
            for dy in 0..KERNEL as isize {
                for dx in 0..KERNEL as isize {
                    let (sy, sx) = (y + dy - 1, x + dx - 1);
                    if sy < 0 || sy >= h || sx < 0 || sx >= w {
                        continue;
                    }
                    let src = &row[((dy * KERNEL as isize + dx) as usize) * c..][..c];
                    let dst = &mut image[((sy * w + sx) as usize) * c..][..c];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = *d + *s;
                    }
                }
            }
        }
    }
}

/// `out[b,y,x,co] = bias[co] + Σ input[b,y+dy−1,x+dx−1,ci]·kernels[dy,dx,ci,co]`.
pub fn conv2d<T: Real>(input: &Tensor<T>, kernels: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, ShapeError> {
    let g = geometry(input, kernels)?;
    if bias.shape() != [g.cout] {
        return Err(ShapeError::mismatch("conv2d", format!("bias [{}]", g.cout), format!("{:?}", bias.shape())));
    }
    let in_stride = g.pixels() * g.cin;
    let out_stride = g.pixels() * g.cout;
    let mut out = vec![T::zero(); g.batch * out_stride];
    out.par_chunks_mut(out_stride)
        .zip(input.data().par_chunks(in_stride))
        .for_each_init(
            || vec![T::zero(); g.pixels() * g.patch()],
            |col, (dst, image)| {
                im2col(image, &g, col);
                for row in dst.chunks_mut(g.cout) {
                    row.copy_from_slice(bias.data());
                }
                matmul(g.pixels(), g.patch(), g.cout, col, kernels.data(), dst, true);
            },
        );
    Ok(Tensor::new(&[g.batch, g.height, g.width, g.cout], out).expect("conv2d output shape"))
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T> {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor<T>>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<Conv2dGrads<T>, ShapeError> {
    let g = geometry(input, kernels)?;
    if grad_out.shape() != [g.batch, g.height, g.width, g.cout] {
        return Err(ShapeError::mismatch(
            "conv2d_backward",
            format!("{:?}", [g.batch, g.height, g.width, g.cout]),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let in_stride = g.pixels() * g.cin;
    let out_stride = g.pixels() * g.cout;
    let kernel_len = g.patch() * g.cout;

    let mut d_input = if need_input_grad { vec![T::zero(); input.len()] } else { Vec::new() };
    // Per-sample kernel gradients, reduced below in batch order so the result
    // does not depend on how rayon schedules the samples.
    let partials: Vec<Vec<T>> = if need_input_grad {
        d_input
            .par_chunks_mut(in_stride)
            .zip(input.data().par_chunks(in_stride))
            .zip(grad_out.data().par_chunks(out_stride))
            .map(|((d_image, image), d_out)| sample_backward(&g, kernels, image, d_out, Some(d_image)))
            .collect()
    } else {
        input
            .data()
            .par_chunks(in_stride)
            .zip(grad_out.data().par_chunks(out_stride))
            .map(|(image, d_out)| sample_backward(&g, kernels, image, d_out, None))
            .collect()
    };

    let mut d_kernels = vec![T::zero(); kernel_len];
    for partial in &partials {
        for (acc, v) in d_kernels.iter_mut().zip(partial) {
            *acc = *acc + *v;
        }
    }
    let mut d_bias = vec![T::zero(); g.cout];
    for row in grad_out.data().chunks(g.cout) {
        for (acc, v) in d_bias.iter_mut().zip(row) {
            *acc = *acc + *v;
        }
    }

    Ok(Conv2dGrads {
        input: need_input_grad.then(|| Tensor::new(input.shape(), d_input).expect("input grad shape")),
        kernels: Tensor::new(kernels.shape(), d_kernels).expect("kernel grad shape"),
        bias: Tensor::new(&[g.cout], d_bias).expect("bias grad shape"),
    })
}

fn sample_backward<T: Real>(
    g: &Geometry,
    kernels: &Tensor<T>,
    image: &[T],
    d_out: &[T],
    d_image: Option<&mut [T]>,
) -> Vec<T> {
    let mut col = vec![T::zero(); g.pixels() * g.patch()];
    im2col(image, g, &mut col);
    let mut d_kernels = vec![T::zero(); g.patch() * g.cout];
    matmul_tn(g.patch(), g.pixels(), g.cout, &col, d_out, &mut d_kernels, false);
    if let Some(d_image) = d_image {
        // Reuse the patch buffer for the patch gradients.
        matmul_nt(g.pixels(), g.cout, g.patch(), d_out, kernels.data(), &mut col, false);
        col2im(&col, g, d_image);
    }
    d_kernels
}
