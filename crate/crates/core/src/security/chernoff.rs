//! Concentration bounds on observed counts.

use super::SecurityError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceBound {
    pub observed: f64,
    pub lower: f64,
    pub upper: f64,
    pub epsilon: f64,
}

/// `upper = x + b + sqrt(2bx + b^2)`, `lower = max(0, x - sqrt(2bx))` with `b = ln(1/eps)`.
pub fn chernoff_bounds(x: f64, epsilon: f64) -> Result<ConfidenceBound, SecurityError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SecurityError::Domain {
            what: "epsilon",
            value: epsilon,
        });
    }
    if !(x >= 0.0) {
        return Err(SecurityError::Domain {
            what: "count",
            value: x,
        });
    }
    let beta = -epsilon.ln();
    Ok(ConfidenceBound {
        observed: x,
        lower: (x - (2.0 * beta * x).sqrt()).max(0.0),
        upper: x + beta + (2.0 * beta * x + beta * beta).sqrt(),
        epsilon,
    })
}
