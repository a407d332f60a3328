use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// `chars = slope * payload + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn fit_linear(pairs: &[(f64, f64)]) -> Result<LinearModel, ClassifierError> {
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(ClassifierError::NonFinite);
    }
    let n = pairs.len() as f64;
    let Some(&(x0, _)) = pairs.first() else {
        return Err(ClassifierError::DegenerateFit);
    };
    if pairs.iter().all(|&(x, _)| x == x0) {
        return Err(ClassifierError::DegenerateFit);
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in pairs {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    Ok(LinearModel {
        slope,
        intercept: my - slope * mx,
    })
}

impl LinearModel {
    /// Prediction clamped at zero.
    pub fn predict(&self, payload: f64) -> f64 {
        (self.slope * payload + self.intercept).max(0.0)
    }
}

/// Shorthand for [`LinearModel::predict`].
pub fn predict_length(model: &LinearModel, payload_length: f64) -> f64 {
    model.predict(payload_length)
}
