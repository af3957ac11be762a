//! Shared inputs for the benchmarks.

use qcc_core::analytic::expected_counts;
use qcc_core::pairing::bernoulli_streams;
use qcc_core::{ClickRecord, SecurityAccounting, SystemConfig};

/// Click streams at `p_click` over `n` slots.
pub fn click_streams(p_click: f64, n: u64) -> [Vec<ClickRecord>; 3] {
    bernoulli_streams(p_click, n, 1)
}

/// Expected accounting at the 66.3 dB operating point and ten hours of pulses.
pub fn operating_point() -> (SystemConfig, SecurityAccounting) {
    let cfg = SystemConfig::default();
    let n = qcc_core::analytic::ten_hour_slots(&cfg);
    let acc = expected_counts(&cfg, n).accounting(&cfg);
    (cfg, acc)
}

/// A 30 dB configuration with enough clicks to exercise pairing and sifting.
pub fn thirty_db() -> SystemConfig {
    SystemConfig {
        dark_count_prob: 1e-8,
        ..SystemConfig::default().with_total_loss_db(30.0)
    }
}
