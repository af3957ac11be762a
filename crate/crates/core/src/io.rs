//! CSV artifacts and raw binary dumps.
//!
//! Every CSV carries a header row and ends with a `# manifest_sha256=...`
//! comment so a file can be traced back to the run that produced it.

use std::io::{Read, Write};

use thiserror::Error;

use crate::analytic::RatePoint;
use crate::phase::{EstimateFlag, PhaseEstimate, SignConvention, total_phase};
use crate::sift::{Basis, SiftedEvent, Tallies, ZCounts};
use crate::sim::EventRecord;
use crate::types::{
    ClickRecord, IntensityCombo, IntensityTag, PhaseIndex, PortId, PulseDescriptor, Side,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: bad {field} value {value:?}")]
    Field {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("missing column {0}")]
    Column(&'static str),
    #[error("truncated binary record")]
    Truncated,
}

pub const SIFTED_HEADER: [&str; 15] = [
    "p1_slot",
    "p2_slot",
    "p3_slot",
    "basis",
    "bitA",
    "bitB",
    "bitC",
    "theta_total",
    "parity",
    "intensity_combo",
    "shared_slot",
    "patterns",
    "deltas",
    "theta_hat",
    "x_combo",
];

pub const PHASE_LOG_HEADER: [&str; 6] = ["interval", "port", "theta_hat", "n_R", "n_L", "flag"];

pub const SWEEP_HEADER: [&str; 9] = [
    "total_loss_db",
    "eta_total",
    "rate_per_pulse",
    "rate_bits_per_s",
    "bound_per_pulse",
    "s111_lower",
    "e111ph_upper",
    "z_error",
    "x_error",
];

fn finish(mut w: csv::Writer<Vec<u8>>, manifest: &str) -> Result<Vec<u8>, IoError> {
    w.flush()?;
    let mut buf = w.into_inner().map_err(|e| e.into_error())?;
    writeln!(buf, "# manifest_sha256={manifest}")?;
    Ok(buf)
}

/// Builds a CSV document from a header and string rows.
pub fn table_csv<I, R>(header: &[&str], rows: I, manifest: &str) -> Result<Vec<u8>, IoError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    finish(w, manifest)
}

/// Shortest round-tripping float text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn tag_letter(t: IntensityTag) -> char {
    match t {
        IntensityTag::Signal => 'S',
        IntensityTag::Decoy => 'D',
        IntensityTag::Vacuum => 'V',
        IntensityTag::Reference => 'R',
    }
}

fn letter_tag(c: char) -> Option<IntensityTag> {
    match c {
        'S' => Some(IntensityTag::Signal),
        'D' => Some(IntensityTag::Decoy),
        'V' => Some(IntensityTag::Vacuum),
        'R' => Some(IntensityTag::Reference),
        _ => None,
    }
}

fn opt_bit(b: Option<u8>) -> String {
    b.map(|b| b.to_string()).unwrap_or_default()
}

/// Sifted Z and X events. `theta_total` uses `conv` and is empty when the
/// event is not X or has no phase estimate.
pub fn sifted_csv(
    events: &[EventRecord],
    conv: SignConvention,
    manifest: &str,
) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SIFTED_HEADER)?;
    for rec in events {
        let ev = &rec.event;
        let x_combo = ev.x_combo();
        if ev.basis == Basis::Discard && x_combo.is_none() {
            continue;
        }
        let theta = match (x_combo, rec.theta_hat) {
            (Some(_), Some(th)) => fmt_f64(total_phase(ev.delta_sum(), th, conv)),
            _ => String::new(),
        };
        let patterns = ev
            .patterns
            .iter()
            .map(|(a, b)| format!("{}{}", tag_letter(*a), tag_letter(*b)))
            .collect::<Vec<_>>()
            .join("-");
        let deltas = ev
            .deltas
            .iter()
            .map(|d| d.n().to_string())
            .collect::<Vec<_>>()
            .join("-");
        let theta_hat = rec
            .theta_hat
            .map(|t| t.map(fmt_f64).join(";"))
            .unwrap_or_default();
        w.write_record([
            ev.slots[0].to_string(),
            ev.slots[1].to_string(),
            ev.slots[2].to_string(),
            ev.basis.label().to_string(),
            opt_bit(ev.bits[0]),
            opt_bit(ev.bits[1]),
            opt_bit(ev.bits[2]),
            theta,
            ev.parity.to_string(),
            ev.combo.map(|c| c.to_string()).unwrap_or_default(),
            (ev.shared_slot as u8).to_string(),
            patterns,
            deltas,
            theta_hat,
            x_combo.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    finish(w, manifest)
}

fn field<'a>(
    rec: &'a csv::StringRecord,
    idx: &[usize; 15],
    name: &'static str,
) -> Result<&'a str, IoError> {
    let i = SIFTED_HEADER.iter().position(|h| *h == name).unwrap();
    rec.get(idx[i]).ok_or(IoError::Column(name))
}

fn bad(row: usize, field: &'static str, value: &str) -> IoError {
    IoError::Field {
        row,
        field,
        value: value.to_string(),
    }
}

/// Reads a sifted-event CSV back into event records.
pub fn read_sifted_csv<R: Read>(r: R) -> Result<Vec<EventRecord>, IoError> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let headers = rd.headers()?.clone();
    let mut idx = [0usize; 15];
    for (i, name) in SIFTED_HEADER.iter().enumerate() {
        idx[i] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or(IoError::Column(name))?;
    }
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let get = |name| field(&rec, &idx, name);
        let mut slots = [0u64; 3];
        for (s, name) in slots.iter_mut().zip(["p1_slot", "p2_slot", "p3_slot"]) {
            let v = get(name)?;
            *s = v.parse().map_err(|_| bad(row, name, v))?;
        }
        let b = get("basis")?;
        let basis = Basis::parse(b).ok_or_else(|| bad(row, "basis", b))?;
        let mut bits = [None; 3];
        for (bit, name) in bits.iter_mut().zip(["bitA", "bitB", "bitC"]) {
            let v = get(name)?;
            if !v.is_empty() {
                *bit = Some(match v {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(bad(row, name, v)),
                });
            }
        }
        let p = get("parity")?;
        let parity = match p {
            "0" => 0,
            "1" => 1,
            _ => return Err(bad(row, "parity", p)),
        };
        let c = get("intensity_combo")?;
        let combo = if c.is_empty() {
            None
        } else {
            Some(IntensityCombo::parse(c).ok_or_else(|| bad(row, "intensity_combo", c))?)
        };
        let sh = get("shared_slot")?;
        let shared_slot = match sh {
            "0" => false,
            "1" => true,
            _ => return Err(bad(row, "shared_slot", sh)),
        };
        let pt = get("patterns")?;
        let mut patterns = [(IntensityTag::Vacuum, IntensityTag::Vacuum); 3];
        let parts: Vec<&str> = pt.split('-').collect();
        if parts.len() != 3 {
            return Err(bad(row, "patterns", pt));
        }
        for (slot, part) in patterns.iter_mut().zip(parts) {
            let mut ch = part.chars();
            let (Some(a), Some(b), None) = (
                ch.next().and_then(letter_tag),
                ch.next().and_then(letter_tag),
                ch.next(),
            ) else {
                return Err(bad(row, "patterns", pt));
            };
            *slot = (a, b);
        }
        let dt = get("deltas")?;
        let ds: Vec<Option<PhaseIndex>> = dt
            .split('-')
            .map(|s| s.parse::<u8>().ok().and_then(PhaseIndex::new))
            .collect();
        let [Some(d0), Some(d1), Some(d2)] = ds[..] else {
            return Err(bad(row, "deltas", dt));
        };
        let th = get("theta_hat")?;
        let theta_hat = if th.is_empty() {
            None
        } else {
            let v: Vec<f64> = th
                .split(';')
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(row, "theta_hat", th))?;
            let [a, b, c] = v[..] else {
                return Err(bad(row, "theta_hat", th));
            };
            Some([a, b, c])
        };
        out.push(EventRecord {
            event: SiftedEvent {
                slots,
                basis,
                patterns,
                combo,
                bits,
                deltas: [d0, d1, d2],
                parity,
                shared_slot,
            },
            theta_hat,
        });
    }
    Ok(out)
}

/// Run-level counts that the event file alone does not carry.
pub fn summary_csv(
    tallies: &Tallies,
    extra: &[(&str, String)],
    manifest: &str,
) -> Result<Vec<u8>, IoError> {
    let mut rows: Vec<[String; 2]> = vec![
        ["n_quantum".into(), fmt_f64(tallies.n_quantum)],
        ["triples".into(), fmt_f64(tallies.triples)],
    ];
    for p in PortId::ALL {
        rows.push([
            format!("clicks_{}", p.to_string().to_lowercase()),
            fmt_f64(tallies.port_clicks[p.index()]),
        ]);
    }
    for (k, v) in extra {
        rows.push([k.to_string(), v.clone()]);
    }
    table_csv(&["key", "value"], rows, manifest)
}

/// Reads `key,value` pairs, skipping comments.
pub fn read_summary_csv<R: Read>(r: R) -> Result<Vec<(String, String)>, IoError> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let k = rec.get(0).ok_or(IoError::Column("key"))?;
        let v = rec.get(1).ok_or(IoError::Column("value"))?;
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Rebuilds tallies from stored events and the run summary.
pub fn tallies_from(
    events: &[EventRecord],
    summary: &[(String, String)],
) -> Result<Tallies, IoError> {
    let num = |key: &'static str| -> Result<f64, IoError> {
        let v = summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or(IoError::Column(key))?;
        v.parse().map_err(|_| bad(0, key, v))
    };
    let mut t = Tallies {
        n_quantum: num("n_quantum")?,
        triples: num("triples")?,
        port_clicks: [num("clicks_p1")?, num("clicks_p2")?, num("clicks_p3")?],
        ..Tallies::default()
    };
    for rec in events {
        t.add_event(&rec.event, rec.theta_hat);
    }
    for c in IntensityCombo::all_z() {
        t.z.entry(c).or_insert(ZCounts::default());
    }
    Ok(t)
}

pub fn phase_log_csv(log: &[PhaseEstimate], manifest: &str) -> Result<Vec<u8>, IoError> {
    let rows = log.iter().map(|e| {
        [
            e.interval.to_string(),
            e.port.to_string(),
            e.theta_hat.map(fmt_f64).unwrap_or_default(),
            e.counts.n_r.to_string(),
            e.counts.n_l.to_string(),
            e.flag.label().to_string(),
        ]
    });
    table_csv(&PHASE_LOG_HEADER, rows, manifest)
}

/// Fraction of phase-log entries per flag, in label order.
pub fn flag_counts(log: &[PhaseEstimate]) -> [(EstimateFlag, usize); 4] {
    [
        EstimateFlag::Ok,
        EstimateFlag::SignMismatch,
        EstimateFlag::Carried,
        EstimateFlag::Missing,
    ]
    .map(|f| (f, log.iter().filter(|e| e.flag == f).count()))
}

pub fn sweep_csv(points: &[RatePoint], manifest: &str) -> Result<Vec<u8>, IoError> {
    let rows = points.iter().map(|p| {
        [
            p.total_loss_db,
            p.eta_total,
            p.rate_per_pulse,
            p.rate_bits_per_s,
            p.bound_per_pulse,
            p.s111_lower,
            p.e111ph_upper,
            p.z_error,
            p.x_error,
        ]
        .map(fmt_f64)
    });
    table_csv(&SWEEP_HEADER, rows, manifest)
}

pub const PULSE_RECORD: usize = 12;
pub const CLICK_RECORD: usize = 10;

/// Little-endian pulse records: slot, user, role, intensity tag, phase index.
pub fn write_pulses<W: Write>(mut w: W, pulses: &[PulseDescriptor]) -> Result<(), IoError> {
    for p in pulses {
        let mut rec = [0u8; PULSE_RECORD];
        rec[..8].copy_from_slice(&p.slot.to_le_bytes());
        rec[8] = p.user.index() as u8;
        rec[9] = p.role.as_u8();
        rec[10] = p.intensity.tag.as_u8();
        rec[11] = p.phase.n();
        w.write_all(&rec)?;
    }
    Ok(())
}

/// Raw pulse records as `(slot, user, role, tag, phase)` bytes.
pub fn read_pulses(bytes: &[u8]) -> Result<Vec<(u64, u8, u8, u8, u8)>, IoError> {
    if bytes.len() % PULSE_RECORD != 0 {
        return Err(IoError::Truncated);
    }
    Ok(bytes
        .chunks_exact(PULSE_RECORD)
        .map(|c| {
            let slot = u64::from_le_bytes(c[..8].try_into().unwrap());
            (slot, c[8], c[9], c[10], c[11])
        })
        .collect())
}

/// Little-endian click records: slot, port, side.
pub fn write_clicks<W: Write>(mut w: W, clicks: &[ClickRecord]) -> Result<(), IoError> {
    for c in clicks {
        let mut rec = [0u8; CLICK_RECORD];
        rec[..8].copy_from_slice(&c.slot.to_le_bytes());
        rec[8] = c.port.index() as u8;
        rec[9] = c.side.as_u8();
        w.write_all(&rec)?;
    }
    Ok(())
}

pub fn read_clicks(bytes: &[u8]) -> Result<Vec<ClickRecord>, IoError> {
    if bytes.len() % CLICK_RECORD != 0 {
        return Err(IoError::Truncated);
    }
    bytes
        .chunks_exact(CLICK_RECORD)
        .map(|c| {
            Ok(ClickRecord {
                slot: u64::from_le_bytes(c[..8].try_into().unwrap()),
                port: PortId::from_index(c[8] as usize).ok_or(IoError::Truncated)?,
                side: Side::from_u8(c[9]).ok_or(IoError::Truncated)?,
            })
        })
        .collect()
}
