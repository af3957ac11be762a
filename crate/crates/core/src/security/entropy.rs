//! Binary entropy.

use super::SecurityError;

pub fn binary_entropy(x: f64) -> Result<f64, SecurityError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(SecurityError::Domain {
            what: "entropy argument",
            value: x,
        });
    }
    Ok(h2(x))
}

/// Binary entropy with the argument clamped into [0, 1].
pub fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}
