use crate::error::{Error, Result};

/// Predictions are clamped to `[BCE_EPSILON, 1 - BCE_EPSILON]` before the log.
pub const BCE_EPSILON: f32 = 1e-7;

fn check_label(label: f32) -> Result<()> {
    if label != 0.0 && label != 1.0 {
        return Err(Error::InvalidLabel(format!("label must be 0 or 1, got {label}")));
    }
    Ok(())
}

fn clamp(p: f64) -> f64 {
    let eps = f64::from(BCE_EPSILON);
    p.clamp(eps, 1.0 - eps)
}

/// `-[y log p + (1 - y) log(1 - p)]` with a clamped prediction.
pub fn bce_loss(prediction: f32, label: f32) -> Result<f32> {
    check_label(label)?;
    let p = clamp(f64::from(prediction));
    let y = f64::from(label);
    Ok((-(y * p.ln() + (1.0 - y) * (1.0 - p).ln())) as f32)
}

/// `dL/dp` at the clamped prediction.
pub fn bce_grad(prediction: f32, label: f32) -> Result<f32> {
    check_label(label)?;
    let p = clamp(f64::from(prediction));
    let y = f64::from(label);
    Ok((-y / p + (1.0 - y) / (1.0 - p)) as f32)
}

/// `dL/dz` for `p = sigmoid(z)`, which simplifies to `p - y` and stays finite
/// when the sigmoid saturates.
pub fn bce_with_logits_grad(prediction: f32, label: f32) -> Result<f32> {
    check_label(label)?;
    Ok(prediction - label)
}

/// Mean loss over a batch.
pub fn mean_bce(predictions: &[f32], labels: &[f32]) -> Result<f32> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::InvalidShape(format!(
            "bce: {} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut total = 0.0f64;
    for (&p, &y) in predictions.iter().zip(labels) {
        total += f64::from(bce_loss(p, y)?);
    }
    Ok((total / predictions.len() as f64) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        assert!(bce_loss(1.0, 1.0).unwrap() <= 1.2e-7);
    }

    #[test]
    fn coin_flip_is_ln2() {
        assert!((bce_loss(0.5, 1.0).unwrap() - std::f32::consts::LN_2).abs() < 1e-6);
        assert!((bce_loss(0.5, 0.0).unwrap() - 0.693_147).abs() < 1e-6);
    }

    #[test]
    fn clamp_boundary() {
        let l = bce_loss(BCE_EPSILON, 1.0).unwrap();
        assert!((l - 16.118_095).abs() < 1e-4, "{l}");
        // anything below the clamp gives the same loss
        assert_eq!(bce_loss(0.0, 1.0).unwrap(), l);
    }

    #[test]
    fn invalid_label() {
        assert_eq!(bce_loss(0.5, 2.0).unwrap_err().class(), "invalid-label");
        assert_eq!(bce_grad(0.5, 0.5).unwrap_err().class(), "invalid-label");
    }

    #[test]
    fn gradient_matches_central_difference() {
        for &(p, y) in &[(0.3f32, 1.0f32), (0.8, 0.0), (0.55, 1.0)] {
            let h = 1e-3f32;
            let numeric = (f64::from(bce_loss(p + h, y).unwrap()) - f64::from(bce_loss(p - h, y).unwrap()))
                / (2.0 * f64::from(h));
            let analytic = f64::from(bce_grad(p, y).unwrap());
            assert!((numeric - analytic).abs() / numeric.abs().max(1.0) < 1e-3);
            // chain rule through the sigmoid equals p - y
            let via_chain = analytic * f64::from(p) * (1.0 - f64::from(p));
            assert!((via_chain - f64::from(bce_with_logits_grad(p, y).unwrap())).abs() < 1e-6);
        }
    }
}
