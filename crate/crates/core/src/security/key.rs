use super::{DecoyBounds, SecurityAccounting, chernoff_bounds, h2};

/// Bounded quantities entering the key length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyInputs {
    pub s111_lower: f64,
    pub e111_upper: f64,
    /// Upper bound on key-combination Z events.
    pub s_mu3_upper: f64,
    pub e_ab_upper: f64,
    pub e_ac_upper: f64,
    pub f_ec: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyResult {
    pub length: f64,
    pub inputs: KeyInputs,
}

pub fn key_length_from(k: &KeyInputs) -> f64 {
    let privacy = k.s111_lower * (1.0 - h2(k.e111_upper));
    let leak = k.f_ec * k.s_mu3_upper * h2(k.e_ab_upper).max(h2(k.e_ac_upper));
    (privacy - leak).max(0.0)
}

fn error_upper(errors: f64, count: f64, eps: f64) -> f64 {
    if count <= 0.0 {
        return 0.5;
    }
    match chernoff_bounds(errors, eps) {
        Ok(b) => (b.upper / count).min(0.5),
        Err(_) => 0.5,
    }
}

pub fn key_length(acc: &SecurityAccounting, bounds: &DecoyBounds) -> KeyResult {
    let eps = acc.epsilon_each();
    let s = acc.s_z_mu3;
    let s_upper = chernoff_bounds(s, eps).map(|b| b.upper).unwrap_or(s);
    let inputs = KeyInputs {
        s111_lower: bounds.s111_lower,
        e111_upper: bounds.e111_upper,
        s_mu3_upper: s_upper,
        e_ab_upper: error_upper(acc.e_z_ab * s, s, eps),
        e_ac_upper: error_upper(acc.e_z_ac * s, s, eps),
        f_ec: acc.f_ec,
    };
    KeyResult {
        length: key_length_from(&inputs),
        inputs,
    }
}
