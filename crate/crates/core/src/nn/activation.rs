use super::missing_forward;
use crate::error::Result;
use crate::tensor::Tensor;

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn sigmoid_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
    out
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    output: Option<Tensor>,
    /// Reuse the active set of the last unfrozen forward pass.
    pub frozen: bool,
}

impl Relu {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if self.frozen {
            let cached = self.output.as_ref().ok_or_else(|| missing_forward("relu"))?;
            cached.expect_same_shape(input, "frozen relu")?;
            let data = input
                .data()
                .iter()
                .zip(cached.data())
                .map(|(x, y)| if *y > 0.0 { *x } else { 0.0 })
                .collect();
            return Tensor::from_vec(input.shape(), data);
        }
        let out = relu_forward(input);
        self.output = Some(out.clone());
        Ok(out)
    }

    /// Subgradient 0 at the kink.
    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let out = self.output.as_ref().ok_or_else(|| missing_forward("relu"))?;
        out.expect_same_shape(grad_output, "relu backward")?;
        let data = grad_output
            .data()
            .iter()
            .zip(out.data())
            .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
            .collect();
        Tensor::from_vec(out.shape(), data)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    output: Option<Tensor>,
}

impl Sigmoid {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = sigmoid_forward(input);
        self.output = Some(out.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let out = self.output.as_ref().ok_or_else(|| missing_forward("sigmoid"))?;
        out.expect_same_shape(grad_output, "sigmoid backward")?;
        let data = grad_output
            .data()
            .iter()
            .zip(out.data())
            .map(|(g, y)| g * y * (1.0 - y))
            .collect();
        Tensor::from_vec(out.shape(), data)
    }
}
