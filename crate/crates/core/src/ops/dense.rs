use crate::error::ShapeError;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Real, Tensor};

fn dims<T: Real>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<(usize, usize, usize), ShapeError> {
    let &[batch, n] = input.shape() else {
        return Err(ShapeError::mismatch("dense", "input [B,N]", format!("{:?}", input.shape())));
    };
    let &[wn, m] = weight.shape() else {
        return Err(ShapeError::mismatch("dense", "weight [N,M]", format!("{:?}", weight.shape())));
    };
    if wn != n {
        return Err(ShapeError::mismatch("dense", format!("weight rows = {n}"), format!("{wn}")));
    }
    Ok((batch, n, m))
}

/// `out = input·weight + bias`, bias broadcast over the batch.
pub fn dense<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, ShapeError> {
    let (batch, n, m) = dims(input, weight)?;
    if bias.shape() != [m] {
        return Err(ShapeError::mismatch("dense", format!("bias [{m}]"), format!("{:?}", bias.shape())));
    }
    let mut out = Vec::with_capacity(batch * m);
    for _ in 0..batch {
        out.extend_from_slice(bias.data());
    }
    matmul(batch, n, m, input.data(), weight.data(), &mut out, true);
    Ok(Tensor::new(&[batch, m], out).expect("dense output shape"))
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>, ShapeError> {
    let (batch, n, m) = dims(input, weight)?;
    if grad_out.shape() != [batch, m] {
        return Err(ShapeError::mismatch("dense_backward", format!("[{batch}, {m}]"), format!("{:?}", grad_out.shape())));
    }
    let mut d_input = vec![T::zero(); batch * n];
    matmul_nt(batch, m, n, grad_out.data(), weight.data(), &mut d_input, false);
    let mut d_weight = vec![T::zero(); n * m];
    matmul_tn(n, batch, m, input.data(), grad_out.data(), &mut d_weight, false);
    let mut d_bias = vec![T::zero(); m];
    for row in grad_out.data().chunks(m) {
        for (acc, v) in d_bias.iter_mut().zip(row) {
            *acc = *acc + *v;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(&[batch, n], d_input).expect("dense input grad"),
        weight: Tensor::new(&[n, m], d_weight).expect("dense weight grad"),
        bias: Tensor::new(&[m], d_bias).expect("dense bias grad"),
    })
}
