use statrs::distribution::{ContinuousCDF, Normal};

use super::MetricsError;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;

/// Normal quantile for a two-sided interval at `confidence`.
pub fn z_for(confidence: f64) -> Result<f64, MetricsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(MetricsError::InvalidConfidence(confidence));
    }
    if confidence == 0.95 {
        return Ok(Z_95);
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0))
}

/// Wilson score interval for `successes` out of `n` trials.
pub fn wilson_interval(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64), MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroTrials);
    }
    if successes > n {
        return Err(MetricsError::InvalidSuccesses { successes, n });
    }
    Ok(wilson_real(successes as f64, n as f64, z_for(confidence)?))
}

/// Wilson interval with real-valued counts (`0 ≤ successes ≤ n`, `n > 0`).
pub(crate) fn wilson_real(successes: f64, n: f64, z: f64) -> (f64, f64) {
    let p = successes / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At p = 0 or 1 one bound is exactly 0 or 1; pin it against rounding.
    let lo = if successes == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Center of the Wilson interval (the shrunken proportion).
pub fn wilson_center(successes: u64, n: u64, confidence: f64) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroTrials);
    }
    let z = z_for(confidence)?;
    let (p, n) = (successes as f64 / n as f64, n as f64);
    Ok((p + z * z / (2.0 * n)) / (1.0 + z * z / n))
}
