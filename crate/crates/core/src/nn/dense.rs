use rand::Rng;

use super::{he_uniform, missing_forward, Param};
use crate::error::{Error, Result};
use crate::linalg::{gemm, Op};
use crate::tensor::Tensor;

/// `out = input . weights + bias` for an `n`-vector or an `[N, n]` batch,
/// with `weights` of shape `[n, m]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    dense_forward_named(input, weights, bias, "dense")
}

fn dims(input: &Tensor, weights: &Tensor, layer: &str) -> Result<(usize, usize, usize)> {
    let [n, m] = *weights.shape() else {
        return Err(Error::InvalidShape(format!(
            "{layer}: weights must be rank 2, got {:?}",
            weights.shape()
        )));
    };
    let rows = match *input.shape() {
        [len] if len == n => 1,
        [rows, len] if len == n => rows,
        _ => {
            return Err(Error::InvalidShape(format!(
                "{layer}: input {:?} does not match {n} weight rows",
                input.shape()
            )))
        }
    };
    Ok((rows, n, m))
}

fn dense_forward_named(input: &Tensor, weights: &Tensor, bias: &Tensor, layer: &str) -> Result<Tensor> {
    let (rows, n, m) = dims(input, weights, layer)?;
    if bias.len() != m {
        return Err(Error::InvalidShape(format!(
            "{layer}: bias has {} entries for {m} units",
            bias.len()
        )));
    }
    let mut out = Vec::with_capacity(rows * m);
    for _ in 0..rows {
        out.extend_from_slice(bias.data());
    }
    gemm(rows, n, m, input.data(), Op::Normal, weights.data(), Op::Normal, &mut out, true);
    let shape = if input.ndim() == 1 { vec![m] } else { vec![rows, m] };
    Tensor::from_vec(&shape, out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_output: &Tensor) -> Result<DenseGrads> {
    dense_backward_named(input, weights, grad_output, "dense")
}

fn dense_backward_named(
    input: &Tensor,
    weights: &Tensor,
    grad_output: &Tensor,
    layer: &str,
) -> Result<DenseGrads> {
    let (rows, n, m) = dims(input, weights, layer)?;
    if grad_output.len() != rows * m {
        return Err(Error::InvalidShape(format!(
            "{layer}: output gradient {:?} does not match {rows}x{m}",
            grad_output.shape()
        )));
    }
    let mut gx = vec![0.0f32; rows * n];
    gemm(rows, m, n, grad_output.data(), Op::Normal, weights.data(), Op::Transposed, &mut gx, false);
    let mut gw = vec![0.0f32; n * m];
    gemm(n, rows, m, input.data(), Op::Transposed, grad_output.data(), Op::Normal, &mut gw, false);
    let mut gb = vec![0.0f32; m];
    for row in grad_output.data().chunks(m) {
        gb.iter_mut().zip(row).for_each(|(b, g)| *b += g);
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(input.shape(), gx)?,
        weights: Tensor::from_vec(&[n, m], gw)?,
        bias: Tensor::from_vec(&[m], gb)?,
    })
}

/// Fully connected layer.
#[derive(Debug, Clone)]
pub struct Dense {
    pub name: String,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(name: &str, inputs: usize, units: usize, rng: &mut R) -> Result<Self> {
        let weight = he_uniform(&[inputs, units], inputs, rng)?;
        Ok(Dense {
            name: name.to_string(),
            weight: Param::new(format!("{name}.weight"), weight, true),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[units])?, true),
            input: None,
        })
    }

    pub fn units(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = dense_forward_named(input, &self.weight.value, &self.bias.value, &self.name)?;
        self.input = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().ok_or_else(|| missing_forward(&self.name))?;
        let g = dense_backward_named(input, &self.weight.value, grad_output, &self.name)?;
        self.weight.grad.add_assign(&g.weights)?;
        self.bias.grad.add_assign(&g.bias)?;
        Ok(g.input)
    }
}
