use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{missing_forward, mix_seed, Mode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_rate(rate: f32) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. Returns the output and the multiplicative mask that was
/// applied (`0` or `1 / (1 - rate)` per element; all ones in inference mode).
pub fn dropout_forward(input: &Tensor, rate: f32, mode: Mode, seed: u64) -> Result<(Tensor, Vec<f32>)> {
    check_rate(rate)?;
    if !mode.is_train() || rate == 0.0 {
        return Ok((input.clone(), vec![1.0; input.len()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<f32> = (0..input.len())
        .map(|_| if rng.random::<f32>() < rate { 0.0 } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::from_vec(input.shape(), data)?, mask))
}

#[derive(Debug, Clone)]
pub struct Dropout {
    pub name: String,
    pub rate: f32,
    mask: Option<Vec<f32>>,
}

impl Dropout {
    pub fn new(name: &str, rate: f32) -> Result<Self> {
        check_rate(rate)?;
        Ok(Dropout {
            name: name.to_string(),
            rate,
            mask: None,
        })
    }

    /// The mask seed is derived from the mode's dropout seed and the layer
    /// name, so distinct layers draw distinct masks.
    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let seed = match mode {
            Mode::Train { dropout_seed } => mix_seed(dropout_seed, &self.name),
            Mode::Infer => 0,
        };
        let (out, mask) = dropout_forward(input, self.rate, mode, seed)?;
        self.mask = Some(mask);
        Ok(out)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let mask = self.mask.as_ref().ok_or_else(|| missing_forward(&self.name))?;
        if mask.len() != grad_output.len() {
            return Err(Error::InvalidShape(format!("{}: gradient size mismatch", self.name)));
        }
        let data = grad_output.data().iter().zip(mask).map(|(g, m)| g * m).collect();
        Tensor::from_vec(grad_output.shape(), data)
    }
}
