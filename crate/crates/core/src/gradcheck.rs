//! Central-difference verification of analytic gradients.
//!
//! An operation `y = op(x)` is reduced to the scalar `L = sum_i w_i * y_i`
//! with a fixed projection `w`; the analytic gradient `dL/dx` is the
//! operation's backward pass applied to `w` and is compared element by element
//! against `(L(x + eps) - L(x - eps)) / (2 eps)`.
//!
//! Coordinates sitting on a non-differentiable point (ReLU at zero, a max-pool
//! tie) are detected by disagreement between the forward and backward one-sided
//! differences and are skipped rather than scored.

use crate::error::{Error, Result};
use crate::tensor::{Fill, Tensor};

/// An operation with a hand-written backward pass.
///
/// `backward` refers to the most recent call of `forward`.
pub trait Differentiable {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor>;
    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over checked coordinates of `|analytic - numeric| / max(1, |numeric|)`
    pub max_relative_error: f64,
    /// flat index with the largest error
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

/// Limits for the kink detector: a coordinate is treated as non-smooth when its
/// one-sided slopes differ by more than this, relative to `max(1, |slope|)`.
const KINK_SLOPE_GAP: f64 = 0.02;

pub const MIN_EPSILON: f32 = 1e-6;
pub const MAX_EPSILON: f32 = 1e-2;

fn check_epsilon(epsilon: f32) -> Result<()> {
    if !(MIN_EPSILON..=MAX_EPSILON).contains(&epsilon) {
        return Err(Error::InvalidInput(format!(
            "epsilon {epsilon} outside [{MIN_EPSILON}, {MAX_EPSILON}]"
        )));
    }
    Ok(())
}

/// Checks `analytic` against central differences of a scalar function.
///
/// `coords` restricts the check to a subset of flat indices (all when `None`).
pub fn check_scalar_fn<F>(
    mut f: F,
    point: &Tensor,
    analytic: &Tensor,
    epsilon: f32,
    coords: Option<&[usize]>,
) -> Result<GradCheckReport>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    check_epsilon(epsilon)?;
    point.expect_same_shape(analytic, "gradient check")?;
    if let Some(i) = analytic.first_non_finite() {
        return Err(Error::NumericFailure(format!(
            "analytic gradient is non-finite at coordinate {i}"
        )));
    }
    let mut probe = point.clone();
    let center = f(&probe)?;
    if !center.is_finite() {
        return Err(Error::NumericFailure("objective is non-finite at the base point".into()));
    }

    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped_kinks: 0,
    };
    for &i in coords {
        let x = point.data()[i];
        probe.data_mut()[i] = x + epsilon;
        let up = f(&probe)?;
        probe.data_mut()[i] = x - epsilon;
        let down = f(&probe)?;
        probe.data_mut()[i] = x;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NumericFailure(format!(
                "objective is non-finite when perturbing coordinate {i}"
            )));
        }
        // the perturbation actually applied, after f32 rounding
        let step_up = f64::from(x + epsilon) - f64::from(x);
        let step_down = f64::from(x) - f64::from(x - epsilon);
        let right = (up - center) / step_up;
        let left = (center - down) / step_down;
        let numeric = (up - down) / (step_up + step_down);
        let scale = numeric.abs().max(1.0);
        if (right - left).abs() > KINK_SLOPE_GAP * scale {
            report.skipped_kinks += 1;
            continue;
        }
        let err = (f64::from(analytic.data()[i]) - numeric).abs() / scale;
        report.checked += 1;
        if report.worst_index.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}

/// Projection `sum_i w_i * y_i` accumulated in `f64`.
pub fn project(output: &Tensor, weights: &Tensor) -> Result<f64> {
    output.expect_same_shape(weights, "projection")?;
    if let Some(i) = output.first_non_finite() {
        return Err(Error::NumericFailure(format!(
            "operation produced a non-finite value at coordinate {i}"
        )));
    }
    Ok(output
        .data()
        .iter()
        .zip(weights.data())
        .map(|(&y, &w)| f64::from(y) * f64::from(w))
        .sum())
}

/// Seed of the default projection used by [`grad_check`].
pub const PROJECTION_SEED: u64 = 0x5eed_9a0d;

/// Input-gradient check with an explicit projection.
pub fn grad_check_with<D: Differentiable + ?Sized>(
    op: &mut D,
    input: &Tensor,
    projection: Option<&Tensor>,
    epsilon: f32,
) -> Result<GradCheckReport> {
    check_epsilon(epsilon)?;
    if let Some(i) = input.first_non_finite() {
        return Err(Error::NumericFailure(format!(
            "input is non-finite at coordinate {i}"
        )));
    }
    let output = op.forward(input)?;
    let weights = match projection {
        Some(w) => {
            output.expect_same_shape(w, "projection")?;
            w.clone()
        }
        None => Tensor::create(
            output.shape(),
            Fill::Uniform {
                low: -1.0,
                high: 1.0,
                seed: PROJECTION_SEED,
            },
        )?,
    };
    let analytic = op.backward(&weights)?;
    check_scalar_fn(
        |x| {
            let y = op.forward(x)?;
            project(&y, &weights)
        },
        input,
        &analytic,
        epsilon,
        None,
    )
}

/// Input-gradient check with the default seeded projection.
pub fn grad_check<D: Differentiable + ?Sized>(
    op: &mut D,
    input: &Tensor,
    epsilon: f32,
) -> Result<f64> {
    Ok(grad_check_with(op, input, None, epsilon)?.max_relative_error)
}

/// Elementary operations used to exercise the checker and the gradient
/// conventions of reductions.
pub mod ops {
    use super::Differentiable;
    use crate::error::{Error, Result};
    use crate::tensor::Tensor;

    #[derive(Debug, Default)]
    pub struct Identity;

    impl Differentiable for Identity {
        fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
            Ok(input.clone())
        }
        fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
            Ok(grad_output.clone())
        }
    }

    #[derive(Debug, Default)]
    pub struct Square {
        input: Option<Tensor>,
    }

    impl Differentiable for Square {
        fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
            self.input = Some(input.clone());
            let data = input.data().iter().map(|v| v * v).collect();
            Tensor::from_vec(input.shape(), data)
        }
        fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
            let x = self
                .input
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("square: backward before forward".into()))?;
            x.expect_same_shape(grad_output, "square backward")?;
            let data = x
                .data()
                .iter()
                .zip(grad_output.data())
                .map(|(x, g)| 2.0 * x * g)
                .collect();
            Tensor::from_vec(x.shape(), data)
        }
    }

    /// `x + other` for a fixed addend.
    #[derive(Debug)]
    pub struct AddConst {
        pub other: Tensor,
    }

    impl Differentiable for AddConst {
        fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
            input.add(&self.other)
        }
        fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
            Ok(grad_output.clone())
        }
    }

    /// Full reduction to a one-element tensor.
    #[derive(Debug, Default)]
    pub struct SumAll {
        shape: Vec<usize>,
    }

    impl Differentiable for SumAll {
        fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
            self.shape = input.shape().to_vec();
            Tensor::from_vec(&[1], vec![input.sum()])
        }
        fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
            if grad_output.len() != 1 {
                return Err(Error::InvalidShape("sum backward expects a scalar".into()));
            }
            let g = grad_output.data()[0];
            Tensor::from_vec(&self.shape, vec![g; self.shape.iter().product()])
        }
    }
}
