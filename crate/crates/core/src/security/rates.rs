use super::SecurityError;
use crate::config::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub per_pulse: f64,
    pub per_second: f64,
}

/// Key bits per quantum pulse and per second of wall-clock operation.
pub fn rate_conversion(
    key_length: f64,
    n_quantum: f64,
    cfg: &SystemConfig,
) -> Result<RatePair, SecurityError> {
    if !(n_quantum > 0.0) {
        return Err(SecurityError::Domain {
            what: "quantum pulse count",
            value: n_quantum,
        });
    }
    let per_pulse = key_length / n_quantum;
    Ok(RatePair {
        per_pulse,
        per_second: per_pulse * cfg.quantum_rate(),
    })
}

/// Repeaterless capacity at the loss between two users,
/// `-log2(1 - eta^2)` for per-arm transmittance `eta`.
pub fn repeaterless_bound(eta_arm: f64) -> Result<f64, SecurityError> {
    if !(eta_arm > 0.0 && eta_arm < 1.0) {
        return Err(SecurityError::Domain {
            what: "per-arm transmittance",
            value: eta_arm,
        });
    }
    Ok(-(-eta_arm * eta_arm).ln_1p() / std::f64::consts::LN_2)
}
