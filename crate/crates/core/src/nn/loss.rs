use crate::{Error, Result, Scalar};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean-square error and its gradient w.r.t. `pred`.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "MSE of {} predictions against {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = T::lit(pred.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = *p - *t;
            loss += d * d;
            two * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Mean binary cross-entropy against 0/1 targets and its gradient w.r.t.
/// the (clamped) predictions.
pub fn bce_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "BCE of {} predictions against {} targets",
            pred.len(),
            target.len()
        )));
    }
    if let Some(t) = target.iter().find(|t| **t != T::zero() && **t != T::one()) {
        return Err(Error::Argument(format!("BCE target {t} is not a bit")));
    }
    let n = T::lit(pred.len() as f64);
    let lo = T::lit(BCE_CLAMP);
    let hi = T::one() - lo;
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let p = p.max(lo).min(hi);
            loss -= *t * p.ln() + (T::one() - *t) * (T::one() - p).ln();
            (p - *t) / (p * (T::one() - p)) / n
        })
        .collect();
    Ok((loss / n, grad))
}
