//! One-parameter sweeps written as CSV.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::SessionCounts;
use crate::error::{Error, Result};
use crate::photon_source::Basis;

use super::config::HarnessConfig;
use super::fixture::{inject_qber, reference_counts};
use super::report::RunReport;
use super::{replay, simulate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Time slot `T` in seconds; the pulse count scales with it.
    TimeSlot,
    /// Final key cap `N_bar`.
    NBar,
    /// Position on the line from the configured sending ratios (0) to
    /// uniform sending over all classes (1).
    SendProb,
    /// Injected signal QBER on both bases, replaying recorded counts.
    Qber,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "time_slot_s" => Ok(SweepParam::TimeSlot),
            "N_bar" | "n_bar" | "max_final_bits" => Ok(SweepParam::NBar),
            "send_prob" => Ok(SweepParam::SendProb),
            "qber" => Ok(SweepParam::Qber),
            _ => Err(Error::InvalidParameter(format!(
                "unknown sweep parameter {s:?}; expected T, N_bar, send_prob or qber"
            ))),
        }
    }
}

/// `start:stop:count` (inclusive, evenly spaced), a comma list, or one value.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::InvalidParameter(format!("range {text:?}: {what}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("{s:?} is not a number")));
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:count"));
        }
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let n: usize = parts[2].trim().parse().map_err(|_| bad("count is not an integer"))?;
        match n {
            0 => Vec::new(),
            1 => vec![a],
            // rounded to 12 significant digits so 0.05:0.07:3 gives 0.06
            _ => (0..n)
                .map(|i| {
                    let v = a + (b - a) * i as f64 / (n - 1) as f64;
                    format!("{v:.11e}").parse().expect("formatted float parses")
                })
                .collect(),
        }
    } else {
        text.split(',').filter(|s| !s.trim().is_empty()).map(num).collect::<Result<_>>()?
    };
    if values.is_empty() {
        return Err(bad("empty range"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite"));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub final_bits: u64,
    pub key_rate_bps: f64,
    pub m_max_cross: Option<f64>,
    pub m_max_plus: Option<f64>,
    pub aborted: bool,
    pub reason: String,
}

impl SweepRow {
    fn from_report(value: f64, report: &RunReport) -> SweepRow {
        let s = &report.session;
        let m_max = |basis: Basis| {
            s.bases
                .iter()
                .find(|b| b.basis == basis)
                .and_then(|b| b.estimation.as_ref())
                .map(|e| e.m_max)
        };
        let mut reasons: Vec<String> = Vec::new();
        for a in s.abort.iter().chain(s.bases.iter().filter_map(|b| b.abort.as_ref())) {
            let text = a.to_string();
            if !reasons.contains(&text) {
                reasons.push(text);
            }
        }
        let reason = reasons.join("; ");
        SweepRow {
            value,
            final_bits: s.total_final_bits,
            key_rate_bps: s.key_rate_bps,
            m_max_cross: m_max(Basis::Cross),
            m_max_plus: m_max(Basis::Plus),
            aborted: s.abort.is_some(),
            reason,
        }
    }
}

fn point_config(base: &HarnessConfig, param: SweepParam, value: f64) -> Result<HarnessConfig> {
    let mut c = base.clone();
    match param {
        SweepParam::TimeSlot => {
            if let Some(n) = c.channel.total_pulses {
                let scaled = n as f64 * value / c.protocol.time_slot_s;
                c.channel.total_pulses = Some(scaled.round().max(0.0) as u64);
            }
            c.protocol.time_slot_s = value;
        }
        SweepParam::NBar => {
            if value < 0.0 {
                return Err(Error::InvalidParameter(format!("N_bar = {value} is negative")));
            }
            c.protocol.max_final_bits = value.round() as u64;
        }
        SweepParam::SendProb => {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParameter(format!("send_prob position {value} outside [0, 1]")));
            }
            let n = c.source.send_prob.len() as f64;
            for p in &mut c.source.send_prob {
                *p = (1.0 - value) * *p + value / n;
            }
        }
        SweepParam::Qber => {}
    }
    Ok(c)
}

/// Runs every point. `counts` is replayed when given; a QBER sweep without
/// counts replays the recorded reference counts. Points run in parallel
/// and each uses `seed`, so rows differ only through the swept value.
pub fn run_sweep(
    config: &HarnessConfig,
    param: SweepParam,
    values: &[f64],
    seed: u64,
    counts: Option<&SessionCounts>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty sweep range".into()));
    }
    if counts.is_some() && matches!(param, SweepParam::TimeSlot | SweepParam::SendProb) {
        return Err(Error::InvalidParameter(
            "T and send_prob sweeps change the sampled session and cannot replay counts".into(),
        ));
    }
    let fixture;
    let counts = match (param, counts) {
        (SweepParam::Qber, None) => {
            fixture = reference_counts();
            Some(&fixture)
        }
        (_, c) => c,
    };
    values
        .par_iter()
        .map(|&value| {
            let c = point_config(config, param, value)?;
            let report = match (param, counts) {
                (SweepParam::Qber, Some(counts)) => {
                    if !(0.0..0.5).contains(&value) {
                        return Err(Error::InvalidParameter(format!("qber {value} outside [0, 0.5)")));
                    }
                    let injected = inject_qber(counts, c.protocol.dark_count_prob_per_pulse, [value, value]);
                    replay(&c, &injected, seed)?
                }
                (_, Some(counts)) => replay(&c, counts, seed)?,
                (_, None) => simulate(&c, seed)?,
            };
            Ok(SweepRow::from_report(value, &report))
        })
        .collect()
}

pub fn write_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
    w.write_record(["value", "final_bits", "key_rate_bps", "m_max_cross", "m_max_plus", "aborted", "reason"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.final_bits.to_string(),
            format!("{:.4}", r.key_rate_bps),
            opt(r.m_max_cross),
            opt(r.m_max_plus),
            r.aborted.to_string(),
            r.reason.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}
