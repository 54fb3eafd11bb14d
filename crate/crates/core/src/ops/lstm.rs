//! A single LSTM time step and its backward pass.
//!
//! Gates are kept as four separate `(N+U)×U` matrices in the order
//! input, forget, cell, output. The step acts on the row concatenation
//! `[x ‖ h]`.

use crate::error::ShapeError;
use crate::ops::activation::sigmoid_scalar;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Real, Tensor};

pub const GATES: usize = 4;
pub const GATE_NAMES: [&str; GATES] = ["i", "f", "g", "o"];
pub const FORGET: usize = 1;

/// Borrowed gate parameters.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams<'a, T> {
    pub weights: [&'a Tensor<T>; GATES],
    pub biases: [&'a Tensor<T>; GATES],
}

impl<T: Real> LstmParams<'_, T> {
    fn dims(&self) -> Result<(usize, usize), ShapeError> {
        let &[rows, units] = self.weights[0].shape() else {
            return Err(ShapeError::mismatch("lstm_step", "gate weight [N+U,U]", format!("{:?}", self.weights[0].shape())));
        };
        for k in 0..GATES {
            if self.weights[k].shape() != [rows, units] || self.biases[k].shape() != [units] {
                return Err(ShapeError::mismatch(
                    "lstm_step",
                    format!("gate {} weight [{rows},{units}] bias [{units}]", GATE_NAMES[k]),
                    format!("{:?} / {:?}", self.weights[k].shape(), self.biases[k].shape()),
                ));
            }
        }
        if rows <= units {
            return Err(ShapeError::mismatch("lstm_step", "gate rows N+U > U", format!("{rows}")));
        }
        Ok((rows - units, units))
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct LstmStepCache<T> {
    batch: usize,
    inputs: usize,
    units: usize,
    xh: Vec<T>,
    gates: [Vec<T>; GATES],
    c_prev: Vec<T>,
    tanh_c: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LstmStepGrads<T> {
    pub x: Tensor<T>,
    pub h: Tensor<T>,
    pub c: Tensor<T>,
    pub weights: [Tensor<T>; GATES],
    pub biases: [Tensor<T>; GATES],
}

/// Returns `(h', c', cache)`.
pub fn lstm_step<T: Real>(
    x: &Tensor<T>,
    h: &Tensor<T>,
    c: &Tensor<T>,
    params: &LstmParams<'_, T>,
) -> Result<(Tensor<T>, Tensor<T>, LstmStepCache<T>), ShapeError> {
    let (inputs, units) = params.dims()?;
    let &[batch, xn] = x.shape() else {
        return Err(ShapeError::mismatch("lstm_step", "x [B,N]", format!("{:?}", x.shape())));
    };
    if xn != inputs {
        return Err(ShapeError::mismatch("lstm_step", format!("x width {inputs}"), format!("{xn}")));
    }
    for (what, t) in [("h", h), ("c", c)] {
        if t.shape() != [batch, units] {
            return Err(ShapeError::mismatch("lstm_step", format!("{what} [{batch},{units}]"), format!("{:?}", t.shape())));
        }
    }

    let width = inputs + units;
    let mut xh = Vec::with_capacity(batch * width);
    for b in 0..batch {
        xh.extend_from_slice(&x.data()[b * inputs..][..inputs]);
        xh.extend_from_slice(&h.data()[b * units..][..units]);
    }

    let gates: [Vec<T>; GATES] = std::array::from_fn(|k| {
        let mut z = Vec::with_capacity(batch * units);
        for _ in 0..batch {
            z.extend_from_slice(params.biases[k].data());
        }
        matmul(batch, width, units, &xh, params.weights[k].data(), &mut z, true);
        let squash: fn(T) -> T = if k == 2 { |v: T| v.tanh() } else { sigmoid_scalar };
        z.iter_mut().for_each(|v| *v = squash(*v));
        z
    });

    let [i, f, g, o] = &gates;
    let mut c_next = vec![T::zero(); batch * units];
    let mut h_next = vec![T::zero(); batch * units];
    let mut tanh_c = vec![T::zero(); batch * units];
    for j in 0..batch * units {
        c_next[j] = f[j] * c.data()[j] + i[j] * g[j];
        tanh_c[j] = c_next[j].tanh();
        h_next[j] = o[j] * tanh_c[j];
    }

    let cache = LstmStepCache { batch, inputs, units, xh, gates, c_prev: c.data().to_vec(), tanh_c };
    Ok((
        Tensor::new(&[batch, units], h_next).expect("h shape"),
        Tensor::new(&[batch, units], c_next).expect("c shape"),
        cache,
    ))
}

pub fn lstm_step_backward<T: Real>(
    cache: &LstmStepCache<T>,
    params: &LstmParams<'_, T>,
    grad_h: &Tensor<T>,
    grad_c: &Tensor<T>,
) -> Result<LstmStepGrads<T>, ShapeError> {
    let (batch, inputs, units) = (cache.batch, cache.inputs, cache.units);
    if params.dims()? != (inputs, units) {
        return Err(ShapeError::mismatch("lstm_step_backward", "parameters used in forward", "different shapes"));
    }
    for t in [grad_h, grad_c] {
        if t.shape() != [batch, units] {
            return Err(ShapeError::mismatch("lstm_step_backward", format!("[{batch},{units}]"), format!("{:?}", t.shape())));
        }
    }
    let [i, f, g, o] = &cache.gates;
    let n = batch * units;
    let mut dz: [Vec<T>; GATES] = std::array::from_fn(|_| vec![T::zero(); n]);
    let mut d_c_prev = vec![T::zero(); n];
    let one = T::one();
    for j in 0..n {
        let dh = grad_h.data()[j];
        let tc = cache.tanh_c[j];
        let dc = grad_c.data()[j] + dh * o[j] * (one - tc * tc);
        dz[0][j] = dc * g[j] * i[j] * (one - i[j]);
        dz[1][j] = dc * cache.c_prev[j] * f[j] * (one - f[j]);
        dz[2][j] = dc * i[j] * (one - g[j] * g[j]);
        dz[3][j] = dh * tc * o[j] * (one - o[j]);
        d_c_prev[j] = dc * f[j];
    }

    let width = inputs + units;
    let mut d_xh = vec![T::zero(); batch * width];
    let mut weights: [Tensor<T>; GATES] = std::array::from_fn(|_| Tensor::zeros(&[width, units]));
    let mut biases: [Tensor<T>; GATES] = std::array::from_fn(|_| Tensor::zeros(&[units]));
    for k in 0..GATES {
        matmul_tn(width, batch, units, &cache.xh, &dz[k], weights[k].data_mut(), false);
        for row in dz[k].chunks(units) {
            for (acc, v) in biases[k].data_mut().iter_mut().zip(row) {
                *acc = *acc + *v;
            }
        }
        matmul_nt(batch, units, width, &dz[k], params.weights[k].data(), &mut d_xh, true);
    }

    let mut dx = Vec::with_capacity(batch * inputs);
    let mut dh = Vec::with_capacity(batch * units);
    for row in d_xh.chunks(width) {
        dx.extend_from_slice(&row[..inputs]);
        dh.extend_from_slice(&row[inputs..]);
    }
    Ok(LstmStepGrads {
        x: Tensor::new(&[batch, inputs], dx).expect("dx shape"),
        h: Tensor::new(&[batch, units], dh).expect("dh shape"),
        c: Tensor::new(&[batch, units], d_c_prev).expect("dc shape"),
        weights,
        biases,
    })
}
