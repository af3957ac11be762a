use std::fs;
use std::path::Path;

use qcc_core::analytic::{analytic_rates, ten_hour_slots};
use qcc_core::io::{self, IoError, fmt_f64};
use qcc_core::pairing::{bernoulli_streams, window_scan};
use qcc_core::security::{decoy_lp_bounds, key_length, rate_conversion, repeaterless_bound};
use qcc_core::sim::{Engine, SimError, SimOptions, simulate};
use qcc_core::{ConfigError, IntensityCombo, SecurityError, SignConvention, SystemConfig, Tallies};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::{Cli, Command, SimArgs};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Infeasible(_) => 3,
            RunError::Io(_) => 4,
            RunError::Internal(_) => 1,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<IoError> for RunError {
    fn from(e: IoError) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<SecurityError> for RunError {
    fn from(e: SecurityError) -> Self {
        match e {
            SecurityError::Domain { .. } => RunError::Config(e.to_string()),
            _ => RunError::Infeasible(e.to_string()),
        }
    }
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Sift(_) => RunError::Internal(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

/// Everything that determines a run's outputs.
struct Manifest {
    text: String,
    hash: String,
}

impl Manifest {
    fn new(cli: &Cli, cfg: &SystemConfig) -> Self {
        let text = format!(
            "seed = {}\ncommand = {:?}\n{}",
            cli.seed,
            cli.command,
            cfg.to_text()
        );
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        Manifest { text, hash }
    }
}

fn load_config(
    base: Option<&Path>,
    cli: &Cli,
    overrides: &[(String, String)],
) -> Result<SystemConfig, RunError> {
    let mut cfg = SystemConfig::default();
    for path in base.into_iter().chain(cli.config.as_deref()) {
        let text = fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    if let Some(db) = cli.loss_db {
        cfg = cfg.with_total_loss_db(db);
    }
    for (k, v) in overrides {
        cfg.set_field(k, v)?;
    }
    Ok(cfg.validate()?)
}

fn set_threads() -> Result<(), RunError> {
    if let Ok(v) = std::env::var("QCC_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| RunError::Config(format!("QCC_THREADS={v}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(dir.join(name), bytes).map_err(|e| RunError::Io(format!("{name}: {e}")))
}

pub fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<(), RunError> {
    set_threads()?;
    let base = match &cli.command {
        Command::Analyze { input } => Some(input.join("config.txt")).filter(|p| p.exists()),
        _ => None,
    };
    let cfg = load_config(base.as_deref(), cli, overrides)?;
    let m = Manifest::new(cli, &cfg);
    fs::create_dir_all(&cli.out)?;
    write(&cli.out, "config.txt", cfg.to_text().as_bytes())?;
    write(
        &cli.out,
        "manifest.txt",
        format!("{}sha256 = {}\n", m.text, m.hash).as_bytes(),
    )?;
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(cli, &cfg, &m, a),
        Command::Analyze { input } => analyze_cmd(cli, &cfg, &m, input),
        Command::Sweep {
            from,
            to,
            step,
            pulses,
        } => sweep_cmd(cli, &cfg, &m, *from, *to, *step, *pulses),
        Command::CalibrateSigns(a) => calibrate_cmd(cli, &cfg, &m, a),
        Command::PairingDemo {
            p_click,
            slots,
            windows,
        } => pairing_cmd(cli, &m, p_click, *slots, windows),
    }
}

fn sim_options(cli: &Cli, a: &SimArgs) -> Result<SimOptions, RunError> {
    let mut o = SimOptions::new(a.slots, cli.seed);
    o.engine = match a.engine.as_str() {
        "fast" => Engine::Fast,
        "slot" => Engine::Slot,
        e => return Err(RunError::Config(format!("unknown engine {e:?}"))),
    };
    o.inject = SignConvention::parse(&a.inject)
        .ok_or_else(|| RunError::Config(format!("bad --inject {:?}", a.inject)))?;
    o.compensate = !a.no_compensate;
    o.keep_clicks = a.dump_clicks;
    o.keep_pulses = a.dump_pulses;
    Ok(o)
}

/// Sign calibration on the nu-nu-nu cell, or on all X events if it is empty.
fn calibrated(t: &Tallies) -> SignConvention {
    t.x.calibrate(Some(IntensityCombo::NU3))
        .or_else(|_| t.x.calibrate(None))
        .map(|c| c.convention)
        .unwrap_or(SignConvention::IDENTITY)
}

/// Security analysis of a tally set as `key,value` rows.
fn analysis(cfg: &SystemConfig, t: &mut Tallies) -> Result<Vec<(&'static str, String)>, RunError> {
    for c in IntensityCombo::all_z() {
        t.z.entry(c).or_default();
    }
    let conv = calibrated(t);
    let acc = t.accounting(cfg, conv);
    let cutoff = (cfg.lp_cutoff > 0).then_some(cfg.lp_cutoff);
    let bounds = decoy_lp_bounds(&acc, cutoff)?;
    let key = key_length(&acc, &bounds);
    let rate = rate_conversion(key.length, t.n_quantum, cfg)?;
    let bound = repeaterless_bound(cfg.eta_total())?;
    let (zab, zac) = t.z_error();
    Ok(vec![
        ("sign_convention", conv.label()),
        ("z_error_ab", fmt_f64(zab)),
        ("z_error_ac", fmt_f64(zac)),
        ("x_error_nu3", fmt_f64(acc.x_error(IntensityCombo::NU3))),
        ("key_events", fmt_f64(acc.s_z_mu3)),
        ("lp_cutoff", bounds.cutoff.to_string()),
        ("y111_lower", fmt_f64(bounds.y111_lower)),
        ("s111_lower", fmt_f64(bounds.s111_lower)),
        ("e111ph_upper", fmt_f64(bounds.e111_upper)),
        ("key_length", fmt_f64(key.length)),
        ("rate_per_pulse", fmt_f64(rate.per_pulse)),
        ("rate_bits_per_s", fmt_f64(rate.per_second)),
        ("bound_per_pulse", fmt_f64(bound)),
    ])
}

fn print_rows(rows: &[(&str, String)]) {
    for (k, v) in rows {
        println!("{k:>16} {v}");
    }
}

fn simulate_cmd(cli: &Cli, cfg: &SystemConfig, m: &Manifest, a: &SimArgs) -> Result<(), RunError> {
    let mut o = sim_options(cli, a)?;
    o.keep_events = true;
    o.keep_phase_log = true;
    let out = simulate(cfg, &o)?;
    let mut t = out.tallies.clone();
    let mut rows = analysis(cfg, &mut t)?;
    rows.push(("frames", out.frames.to_string()));
    rows.push(("shared_slot_events", out.shared_slot_events.to_string()));
    for (flag, n) in io::flag_counts(&out.phase_log) {
        rows.push((flag.label(), n.to_string()));
    }
    let conv = calibrated(&t);
    write(
        &cli.out,
        "sifted_events.csv",
        &io::sifted_csv(&out.events, conv, &m.hash)?,
    )?;
    write(
        &cli.out,
        "phase_log.csv",
        &io::phase_log_csv(&out.phase_log, &m.hash)?,
    )?;
    write(
        &cli.out,
        "summary.csv",
        &io::summary_csv(&out.tallies, &rows, &m.hash)?,
    )?;
    if a.dump_clicks {
        let mut buf = Vec::new();
        io::write_clicks(&mut buf, &out.clicks)?;
        write(&cli.out, "clicks.bin", &buf)?;
    }
    if a.dump_pulses {
        let mut buf = Vec::new();
        io::write_pulses(&mut buf, &out.pulses)?;
        write(&cli.out, "pulses.bin", &buf)?;
    }
    println!("{:>16} {}", "triples", out.tallies.triples);
    print_rows(&rows);
    Ok(())
}

fn analyze_cmd(cli: &Cli, cfg: &SystemConfig, m: &Manifest, input: &Path) -> Result<(), RunError> {
    let open = |name: &str| {
        fs::File::open(input.join(name))
            .map_err(|e| RunError::Io(format!("{}: {e}", input.join(name).display())))
    };
    let events = io::read_sifted_csv(open("sifted_events.csv")?)?;
    let summary = io::read_summary_csv(open("summary.csv")?)?;
    let mut t = io::tallies_from(&events, &summary)?;
    let rows = analysis(cfg, &mut t)?;
    write(
        &cli.out,
        "analysis.csv",
        &io::summary_csv(&t, &rows, &m.hash)?,
    )?;
    print_rows(&rows);
    Ok(())
}

fn sweep_cmd(
    cli: &Cli,
    cfg: &SystemConfig,
    m: &Manifest,
    from: f64,
    to: f64,
    step: f64,
    pulses: Option<f64>,
) -> Result<(), RunError> {
    if !(step > 0.0 && to >= from) {
        return Err(RunError::Config(format!(
            "bad sweep range {from}..{to} step {step}"
        )));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    let losses: Vec<f64> = (0..=n).map(|i| from + step * i as f64).collect();
    let pulses = pulses.unwrap_or_else(|| ten_hour_slots(cfg));
    let cutoff = (cfg.lp_cutoff > 0).then_some(cfg.lp_cutoff);
    let points = analytic_rates(cfg, &losses, pulses, cutoff)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    write(&cli.out, "sweep.csv", &io::sweep_csv(&points, &m.hash)?)?;
    for p in &points {
        println!(
            "{:6.2} dB  rate {:.4e}  bound {:.4e}",
            p.total_loss_db, p.rate_per_pulse, p.bound_per_pulse
        );
    }
    Ok(())
}

fn calibrate_cmd(cli: &Cli, cfg: &SystemConfig, m: &Manifest, a: &SimArgs) -> Result<(), RunError> {
    let out = simulate(cfg, &sim_options(cli, a)?)?;
    let mut rows = Vec::new();
    for (label, combo) in [("nu-nu-nu", Some(IntensityCombo::NU3)), ("all", None)] {
        let (table, usable) = out.tallies.x.table(combo);
        for v in table {
            rows.push([
                label.to_string(),
                v.convention.label(),
                v.retained.to_string(),
                v.errors.to_string(),
                fmt_f64(v.error_rate()),
            ]);
        }
        match out.tallies.x.calibrate(combo) {
            Ok(c) => println!(
                "{label}: {usable} usable events, best vertex {}",
                c.convention.label()
            ),
            Err(e) => println!("{label}: {e}"),
        }
    }
    let header = ["combo", "vertex", "retained", "errors", "error_rate"];
    write(
        &cli.out,
        "calibration.csv",
        &io::table_csv(&header, rows, &m.hash)?,
    )?;
    Ok(())
}

fn pairing_cmd(
    cli: &Cli,
    m: &Manifest,
    p_click: &[f64],
    slots: u64,
    windows: &[u64],
) -> Result<(), RunError> {
    if let Some(p) = p_click.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(RunError::Config(format!("p_click {p} outside (0, 1]")));
    }
    let tables: Vec<_> = p_click
        .par_iter()
        .map(|&p| window_scan(&bernoulli_streams(p, slots, cli.seed), windows))
        .collect::<Result<_, _>>()
        .map_err(|e| RunError::Internal(e.to_string()))?;
    let mut rows = Vec::new();
    for (p, table) in p_click.iter().zip(&tables) {
        for r in table {
            println!(
                "p={p:e} window {:>7}  clicks {:>9}  paired {:>9}  coincident {:>6}",
                r.window, r.clicks, r.paired, r.coincidences
            );
            rows.push([
                fmt_f64(*p),
                r.window.to_string(),
                r.clicks.to_string(),
                r.paired.to_string(),
                r.coincidences.to_string(),
            ]);
        }
    }
    let header = ["p_click", "window", "clicks", "paired", "coincidences"];
    write(
        &cli.out,
        "pairing_demo.csv",
        &io::table_csv(&header, rows, &m.hash)?,
    )?;
    Ok(())
}
