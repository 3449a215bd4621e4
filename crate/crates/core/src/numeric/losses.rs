//! Binary cross-entropy and focal loss over probabilities.
//!
//! Both clamp probabilities to `[EPS, 1 - EPS]` before taking logs; the
//! gradient is zero where the clamp is active.

use super::{NumericError, Tensor};

pub const EPS: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

fn clamped(p: f64) -> bool {
    !(EPS..=1.0 - EPS).contains(&p)
}

fn check(p: &Tensor, target: &Tensor, op: &'static str) -> Result<(), NumericError> {
    if p.shape() != target.shape() {
        return Err(NumericError::ShapeMismatch {
            op,
            left: p.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    Ok(())
}

/// `-[y ln p + (1 - y) ln(1 - p)]` for a single probability.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = clamp(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Focal loss for a single probability with label `positive` (the `y = +1`
/// case): `-alpha (1 - p_t)^gamma ln p_t`, `p_t = p` for positives and
/// `1 - p` otherwise.
pub fn focal_loss(p: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = clamp(p);
    let pt = if positive { p } else { 1.0 - p };
    -alpha * (1.0 - pt).powf(gamma) * pt.ln()
}

fn focal_dpt(pt: f64, alpha: f64, gamma: f64) -> f64 {
    let q = 1.0 - pt;
    let dq = if gamma == 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * pt.ln()
    };
    alpha * (dq - q.powf(gamma) / pt)
}

/// Mean of [`bce`] over all elements.
pub fn bce_value(p: &Tensor, target: &Tensor) -> Result<f64, NumericError> {
    check(p, target, "bce")?;
    let total: f64 = p.data().iter().zip(target.data()).map(|(&p, &y)| bce(p, y)).sum();
    Ok(total / p.len() as f64)
}

pub(crate) fn bce_grad(p: &Tensor, target: &Tensor) -> Result<Tensor, NumericError> {
    check(p, target, "bce")?;
    let n = p.len() as f64;
    p.zip_map(target, "bce", |p, y| {
        if clamped(p) {
            0.0
        } else {
            (-y / p + (1.0 - y) / (1.0 - p)) / n
        }
    })
}

/// Mean of [`focal_loss`]; targets above 0.5 count as positive.
pub fn focal_value(
    p: &Tensor,
    target: &Tensor,
    alpha: f64,
    gamma: f64,
) -> Result<f64, NumericError> {
    check(p, target, "focal")?;
    let total: f64 = p
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| focal_loss(p, y > 0.5, alpha, gamma))
        .sum();
    Ok(total / p.len() as f64)
}

pub(crate) fn focal_grad(
    p: &Tensor,
    target: &Tensor,
    alpha: f64,
    gamma: f64,
) -> Result<Tensor, NumericError> {
    check(p, target, "focal")?;
    let n = p.len() as f64;
    p.zip_map(target, "focal", |p, y| {
        if clamped(p) {
            return 0.0;
        }
        if y > 0.5 {
            focal_dpt(p, alpha, gamma) / n
        } else {
            -focal_dpt(1.0 - p, alpha, gamma) / n
        }
    })
}
