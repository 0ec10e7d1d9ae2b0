//! Backward label correction.
//!
//! Augmented anomalies are sometimes indistinguishable from normal data or
//! from another kind. The corrected label moves `p_n` of the mass onto the
//! normal class and spreads `p_a` onto every class.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    pub probs: Vec<f64>,
}

/// Corrected label for a one-hot `label`; component 0 is the normal class.
pub fn backward_correct(label: &[f64], p_n: f64, p_a: f64) -> Result<SoftLabel> {
    let k = label.len();
    if k == 0 {
        return Err(Error::Parameter("label vector is empty".into()));
    }
    if !(p_n >= 0.0 && p_a >= 0.0) {
        return Err(Error::Parameter(format!("p_n = {p_n} and p_a = {p_a} must be non-negative")));
    }
    let keep = 1.0 - p_n - k as f64 * p_a;
    if keep < -1e-12 {
        return Err(Error::Parameter(format!(
            "p_n + K·p_a = {} exceeds 1 for K = {k}",
            p_n + k as f64 * p_a
        )));
    }
    let probs = label
        .iter()
        .enumerate()
        .map(|(i, &y)| keep * y + p_a + if i == 0 { p_n } else { 0.0 })
        .collect();
    Ok(SoftLabel { probs })
}
