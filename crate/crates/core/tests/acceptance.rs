//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::Instant;

use common::{angle_diff, bright, check_pairing, loss_model, noisy_counts, thirty_db};
use qcc_core::analytic::{analytic_point, analytic_rates, log_slope, ten_hour_slots};
use qcc_core::pairing::{bernoulli_streams, coincidences};
use qcc_core::phase::estimate_pair_phase;
use qcc_core::rng::{StreamRng, substream, tag};
use qcc_core::security::{
    KeyInputs, chernoff_bounds, key_length_from, min_single_yield, rate_conversion,
    repeaterless_bound,
};
use qcc_core::sim::{SimOptions, simulate};
use qcc_core::{
    ClickRecord, IntensityCombo, PortId, ReferenceCounts, Side, SignConvention, SystemConfig,
    pair_clicks,
};
use rand::RngExt;
use rand_distr::{Distribution, Poisson};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok { Ok(msg) } else { Err(msg) }
}

fn rate_conversion_check() -> Outcome {
    let cfg = SystemConfig::default();
    let n = 1e13;
    let mut notes = Vec::new();
    let mut ok = true;
    for (per_pulse, want) in [(1.64e-7, 23.5), (3.75e-8, 5.39)] {
        let r = rate_conversion(per_pulse * n, n, &cfg).map_err(|e| e.to_string())?;
        let rel = (r.per_second / want - 1.0).abs();
        ok &= rel <= 0.01;
        notes.push(format!(
            "{per_pulse:e} -> {:.3} bit/s ({:.2}% off)",
            r.per_second,
            rel * 100.0
        ));
    }
    ensure(ok, notes.join(", "))
}

fn ratio_and_slope_check() -> Outcome {
    let ratio: f64 = 1.64e-7 / 3.75e-8;
    let ratio_ok = (ratio / 4.36 - 1.0).abs() <= 0.02;
    let cfg = SystemConfig::default();
    let n = ten_hour_slots(&cfg);
    let losses: Vec<f64> = (0..=15).map(|i| 40.0 + 2.0 * i as f64).collect();
    let pts = analytic_rates(&cfg, &losses, n, None)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let eta: Vec<f64> = pts.iter().map(|p| p.eta_total).collect();
    let rate: Vec<f64> = pts.iter().map(|p| p.rate_per_pulse).collect();
    let coin: Vec<f64> = pts.iter().map(|p| p.coincidence_per_pulse).collect();
    let all_positive = rate.iter().chain(&coin).all(|r| *r > 0.0);
    let decreasing = rate.windows(2).all(|w| w[1] < w[0]);
    let s = log_slope(&eta, &rate).unwrap_or(f64::NAN);
    let sc = log_slope(&eta, &coin).unwrap_or(f64::NAN);
    let lo = analytic_point(&SystemConfig::low_loss(), n, None).map_err(|e| e.to_string())?;
    let hi = analytic_point(&cfg, n, None).map_err(|e| e.to_string())?;
    ensure(
        ratio_ok && all_positive && decreasing && (0.3..=1.2).contains(&s) && s < sc,
        format!(
            "table ratio {ratio:.3}, model ratio {:.2}, slope {s:.3} vs coincidence {sc:.3}, \
             decreasing {decreasing}",
            lo.rate_per_pulse / hi.rate_per_pulse
        ),
    )
}

fn x_floor_check() -> Outcome {
    let cfg = thirty_db();
    let out = simulate(&cfg, &SimOptions::new(6_000_000_000, 2024)).map_err(|e| e.to_string())?;
    let t = &out.tallies;
    let (table, _) = t.x.table(Some(IntensityCombo::NU3));
    let v = table[0];
    let x = v.error_rate();
    let (ab, ac) = t.z_error();
    let key_events = t.z.get(&IntensityCombo::MU3).map_or(0.0, |c| c.count);
    ensure(
        (0.37..=0.43).contains(&x) && ab < 0.01 && ac < 0.01 && key_events > 0.0,
        format!(
            "X error {x:.4} over {} retained, Z errors {ab:.2e}/{ac:.2e} over {key_events} key events",
            v.retained
        ),
    )
}

fn sign_cube_check() -> Outcome {
    let cfg = bright();
    let mut hits = 0;
    let mut strict = 0;
    let mut worst_gap = f64::INFINITY;
    for inject in SignConvention::all() {
        for seed in 0..20 {
            let mut o = SimOptions::new(2_000_000, 500 + seed);
            o.inject = inject;
            let out = simulate(&cfg, &o).map_err(|e| e.to_string())?;
            let Ok(cal) = out.tallies.x.calibrate(Some(IntensityCombo::NU3)) else {
                continue;
            };
            hits += usize::from(cal.convention == inject);
            let own = cal
                .table
                .iter()
                .find(|v| v.convention == inject)
                .unwrap()
                .error_rate();
            let other = cal
                .table
                .iter()
                .filter(|v| v.convention != inject)
                .map(|v| v.error_rate())
                .fold(f64::INFINITY, f64::min);
            strict += usize::from(own < other);
            worst_gap = worst_gap.min(other - own);
        }
    }
    ensure(
        hits == 160 && strict == 160,
        format!("recovered {hits}/160, strictly minimal {strict}/160, smallest gap {worst_gap:.3}"),
    )
}

fn estimator_check() -> Outcome {
    let mut rng: StreamRng = substream(5, tag::REFERENCE, 0);
    let mut sq = 0.0;
    for _ in 0..1000 {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let c = noisy_counts(theta, 10_000, &mut rng);
        let e = estimate_pair_phase(&c).map_err(|e| e.to_string())?;
        sq += angle_diff(e.theta, theta).powi(2);
    }
    let rms = (sq / 1000.0).sqrt();
    let s = (1u64 << 50) as f64;
    let q = |ph: f64| (ph / 2.0).cos().powi(2);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let theta = (i as f64 + 0.5) * std::f64::consts::TAU / 1000.0;
        let half = theta + std::f64::consts::FRAC_PI_2;
        let c = ReferenceCounts {
            n_r: (q(theta) * s).round() as u64,
            n_l: ((1.0 - q(theta)) * s).round() as u64,
            n_r_half: (q(half) * s).round() as u64,
            n_l_half: ((1.0 - q(half)) * s).round() as u64,
            ..Default::default()
        };
        let e = estimate_pair_phase(&c).map_err(|e| e.to_string())?;
        worst = worst.max(angle_diff(e.theta, theta));
    }
    ensure(
        rms <= 0.05 && worst <= 1e-9,
        format!("rms {rms:.4} rad at 1e4 counts, worst exact-count error {worst:.1e}"),
    )
}

fn pairing_check() -> Outcome {
    let n = 10_000_000;
    let s = bernoulli_streams(1e-3, n, 6);
    let refs = [&s[0][..], &s[1][..], &s[2][..]];
    let triples = pair_clicks(refs, 50_000).map_err(|e| e.to_string())?.len() as f64;
    let clicks: f64 = s.iter().map(|x| x.len() as f64).sum();
    let frac = 3.0 * triples / clicks;
    let coin = coincidences(refs).len() as f64;
    let expected_coin = 1e-9 * n as f64;
    let mut rng: StreamRng = substream(6, tag::STREAMS, 99);
    let mut violations = 0;
    for _ in 0..1000 {
        let streams: [Vec<ClickRecord>; 3] = PortId::ALL.map(|port| {
            let k = rng.random_range(0..=30usize);
            let mut slots: Vec<u64> = (0..k).map(|_| rng.random_range(0..150)).collect();
            slots.sort_unstable();
            slots.dedup();
            slots
                .into_iter()
                .map(|slot| ClickRecord {
                    port,
                    slot,
                    side: Side::R,
                })
                .collect()
        });
        let w = rng.random_range(0..80);
        let got =
            pair_clicks([&streams[0], &streams[1], &streams[2]], w).map_err(|e| e.to_string())?;
        violations += usize::from(check_pairing(&streams, w, &got).is_err());
    }
    ensure(
        frac >= 0.9 && coin * 1000.0 <= triples && violations == 0,
        format!(
            "{:.1}% of clicks paired, {triples} triples vs {coin} coincidences \
             (expected {expected_coin:.2}), oracle violations {violations}/1000",
            frac * 100.0
        ),
    )
}

fn lp_and_chernoff_check() -> Outcome {
    let mut rng: StreamRng = substream(7, tag::INIT, 0);
    let mut worst: f64 = f64::INFINITY;
    let mut unsound = 0;
    for _ in 0..100 {
        let mu = rng.random_range(0.1..0.3);
        let nu = rng.random_range(0.005..0.03);
        let eta = std::array::from_fn(|_| rng.random_range(0.4..0.9));
        let d = std::array::from_fn(|_| rng.random_range(0.0..1e-3));
        let (cons, truth) = loss_model(eta, d, [mu, nu, 0.0]);
        let y = min_single_yield(&cons, 3).map_err(|e| e.to_string())?;
        unsound += usize::from(y > truth * (1.0 + 1e-9));
        worst = worst.min(y / truth);
    }
    let eps = 1e-3;
    let trials = 100_000;
    let pois = Poisson::new(50.0).unwrap();
    let mut bad = 0;
    for _ in 0..trials {
        let x: f64 = pois.sample(&mut rng);
        let b = chernoff_bounds(x, eps).map_err(|e| e.to_string())?;
        bad += usize::from(!(b.lower..=b.upper).contains(&50.0));
    }
    let rate = bad as f64 / trials as f64;
    ensure(
        unsound == 0 && worst >= 0.8 && rate <= 2.0 * eps,
        format!(
            "LP above truth {unsound}/100, worst recovery {:.1}%, Chernoff violations {rate:.1e} at eps {eps:e}",
            worst * 100.0
        ),
    )
}

fn key_formula_check() -> Outcome {
    let base = KeyInputs {
        s111_lower: 1e6,
        e111_upper: 0.2,
        s_mu3_upper: 2e6,
        e_ab_upper: 0.01,
        e_ac_upper: 0.012,
        f_ec: 1.06,
    };
    let mut rng: StreamRng = substream(8, tag::INIT, 0);
    let mut bad = 0;
    for _ in 0..10_000 {
        let k = KeyInputs {
            s111_lower: rng.random_range(0.0..1e6),
            e111_upper: rng.random_range(0.0..0.5),
            s_mu3_upper: rng.random_range(0.0..1e6),
            e_ab_upper: rng.random_range(0.0..0.5),
            e_ac_upper: rng.random_range(0.0..0.5),
            f_ec: rng.random_range(1.0..1.5),
        };
        let l = key_length_from(&k);
        let d = rng.random_range(0.0..0.1);
        let checks = [
            key_length_from(&KeyInputs {
                e111_upper: 0.5,
                ..k
            }) == 0.0,
            key_length_from(&KeyInputs {
                s111_lower: k.s111_lower * 1.1,
                ..k
            }) >= l,
            key_length_from(&KeyInputs {
                e111_upper: (k.e111_upper + d).min(0.5),
                ..k
            }) <= l,
            key_length_from(&KeyInputs {
                s_mu3_upper: k.s_mu3_upper * 1.1,
                ..k
            }) <= l,
            key_length_from(&KeyInputs {
                e_ab_upper: (k.e_ab_upper + d).min(0.5),
                ..k
            }) <= l,
            key_length_from(&KeyInputs {
                e_ac_upper: (k.e_ac_upper + d).min(0.5),
                ..k
            }) <= l,
            key_length_from(&KeyInputs {
                f_ec: k.f_ec + d,
                ..k
            }) <= l,
        ];
        bad += checks.iter().filter(|c| !**c).count();
    }
    bad += usize::from(
        key_length_from(&KeyInputs {
            e111_upper: 0.5,
            ..base
        }) != 0.0,
    );
    let cfg = SystemConfig::default();
    let p = analytic_point(&cfg, ten_hour_slots(&cfg), None).map_err(|e| e.to_string())?;
    let factor = p.rate_per_pulse / 3.75e-8;
    ensure(
        bad == 0 && p.rate_per_pulse > 0.0 && (1.0 / 3.0..=3.0).contains(&factor),
        format!(
            "property violations {bad}, 66.3 dB rate {:.3e} per pulse ({factor:.2}x reported)",
            p.rate_per_pulse
        ),
    )
}

fn bound_check() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for cfg in [SystemConfig::low_loss(), SystemConfig::default()] {
        let p = analytic_point(&cfg, ten_hour_slots(&cfg), None).map_err(|e| e.to_string())?;
        let b = repeaterless_bound(cfg.eta_total()).map_err(|e| e.to_string())?;
        ok &= p.rate_per_pulse > b;
        notes.push(format!(
            "{:.1} dB: {:.3e} vs bound {b:.3e}",
            cfg.total_loss_db(),
            p.rate_per_pulse
        ));
    }
    ensure(ok, notes.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("rate conversion", rate_conversion_check),
        ("rate ratio and loss scaling", ratio_and_slope_check),
        ("X-basis error floor", x_floor_check),
        ("sign-convention cube", sign_cube_check),
        ("phase estimator", estimator_check),
        ("pairing vs coincidence", pairing_check),
        ("decoy LP soundness", lp_and_chernoff_check),
        ("key length behaviour", key_formula_check),
        ("repeaterless bound crossing", bound_check),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (status, msg) = match f() {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!(
            "criterion {} {name}: {status} ({msg}) [{:.1}s]",
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
