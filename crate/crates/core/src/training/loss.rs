use ndarray::Array2;

use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::targets::{Objective, TrainingPair};

/// Sum over frames of the squared 2-norm of per-frame differences, divided by the frame count.
pub fn squared_loss(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<f64> {
    squared_loss_values(&a.values, &b.values)
}

pub fn squared_loss_values(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.nrows() as f64)
}

#[derive(Debug, Clone)]
pub struct LossValue {
    pub loss: f64,
    /// d loss / d model output
    pub gradient: Array2<f64>,
}

/// Loss of a pair as built by `targets::build_training_pair` (raw, un-normalized target).
pub fn objective_loss(output: &Array2<f64>, pair: &TrainingPair) -> Result<LossValue> {
    objective_loss_values(
        pair.config.objective,
        output,
        &pair.target.values,
        &pair.noisy_output.values,
    )
}

/// masking: ℓ(mask, out); mapping: ℓ(clean, out); signal approximation: ℓ(clean, noisy ⊙ out).
pub fn objective_loss_values(
    objective: Objective,
    output: &Array2<f64>,
    target: &Array2<f64>,
    noisy_output: &Array2<f64>,
) -> Result<LossValue> {
    if output.dim() != target.dim() {
        return Err(Error::shape(format!(
            "model output {:?} vs target {:?}",
            output.dim(),
            target.dim()
        )));
    }
    let frames = output.nrows().max(1) as f64;
    match objective {
        Objective::Masking | Objective::Mapping => {
            let loss = squared_loss_values(target, output)?;
            let gradient = (output - target) * (2.0 / frames);
            Ok(LossValue { loss, gradient })
        }
        Objective::SignalApproximation => {
            if noisy_output.dim() != output.dim() {
                return Err(Error::shape(format!(
                    "noisy features {:?} vs model output {:?}",
                    noisy_output.dim(),
                    output.dim()
                )));
            }
            let estimate = noisy_output * output;
            let loss = squared_loss_values(target, &estimate)?;
            let gradient = (&estimate - target) * noisy_output * (2.0 / frames);
            Ok(LossValue { loss, gradient })
        }
    }
}
