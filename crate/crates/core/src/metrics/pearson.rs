//! Pearson correlation and the distance `D_rho = sqrt((1 - rho) / 2)`.

use super::{stable_mean, stable_sum, MetricError};
use crate::types::{RewardFunction, Transition};

/// Sample Pearson correlation, clamped to `[-1, 1]`.
///
/// Inputs must have equal length >= 2. A (numerically) constant input is a
/// [`MetricError::DegenerateVariance`] error: correlation against an
/// undifferentiated reward is undefined, and silently mapping it to 0 or 1
/// would hide exactly the failure mode the caller needs to know about.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricError::BadInputLength {
            x: x.len(),
            y: y.len(),
        });
    }
    let mx = stable_mean(x);
    let my = stable_mean(y);
    let var_x = stable_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    let var_y = stable_sum(y.iter().map(|v| (v - my) * (v - my)));
    if is_degenerate(x, mx, var_x) {
        return Err(MetricError::DegenerateVariance("first input"));
    }
    if is_degenerate(y, my, var_y) {
        return Err(MetricError::DegenerateVariance("second input"));
    }
    // Identical inputs correlate exactly; computing cov / (sx * sy) would
    // round sqrt(v)^2 away from v and report 1 - O(1e-16) instead.
    if x == y {
        return Ok(1.0);
    }
    let cov = stable_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    Ok((cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0))
}

fn is_degenerate(xs: &[f64], mean: f64, var: f64) -> bool {
    if var <= 0.0 {
        return true;
    }
    let max_dev = xs.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    max_dev <= 1e-12 * (1.0 + mean.abs())
}

/// Pearson distance between paired samples: `sqrt((1 - rho) / 2)`, in `[0, 1]`.
/// Zero iff the sample correlation is 1.
pub fn pearson_distance(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let rho = pearson_correlation(x, y)?;
    Ok(((1.0 - rho) / 2.0).max(0.0).sqrt())
}

/// Baseline distance: Pearson distance between the two rewards' raw values
/// on the batch, with no shaping-removing transformation.
pub fn raw_reward_distance(
    ra: &dyn RewardFunction,
    rb: &dyn RewardFunction,
    transitions: &[Transition],
) -> Result<f64, MetricError> {
    let va = ra.evaluate_transitions(transitions)?;
    let vb = rb.evaluate_transitions(transitions)?;
    pearson_distance(&va, &vb)
}
