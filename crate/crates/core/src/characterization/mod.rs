//! Probing of idle lines and per-span parameter retrieval.

mod fit;
mod phy;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit_span, initial_guess};
pub use phy::{build_phy_topology, DeviceDescriptions, LineDevices, VirtualLink, VirtualTopology};
pub use store::JsonlStore;

use crate::control::{MonitorPoint, OlcError, OlcHandle};
use crate::twin::{EdfaOperatingPoint, FiberSpanParams, OlsDescriptor};
use crate::units::{dbm_to_watt, watt_to_dbm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharacterizationError {
    #[error("line {0} has no spans to probe")]
    NothingToProbe(String),
    #[error("probe level {level_dbm:.1} dBm outside the limits of {amplifier}")]
    ProbeLevel { amplifier: String, level_dbm: f64 },
    #[error("line controller: {0}")]
    Olc(#[from] OlcError),
    #[error("records for span {expected} mixed with span {found}")]
    SpanMismatch { expected: String, found: String },
    #[error("probes of span {0} were taken at the same level")]
    IdenticalProbeLevels(String),
    #[error("inconsistent probe record for span {span}: {reason}")]
    BadProbe { span: String, reason: String },
    #[error("fit of span {span} did not converge within {iterations} iterations")]
    NotConverged { span: String, iterations: usize },
    #[error("fit of span {span} left {rms_db:.3} dB RMS residual (limit {limit_db} dB)")]
    ResidualTooHigh { span: String, rms_db: f64, limit_db: f64 },
    #[error("no characterization record for span {0}")]
    MissingRecord(String),
    #[error("line {line} ends at unknown node {node}")]
    DanglingEndpoint { line: String, node: String },
    #[error("no device description for line {0}")]
    MissingDevices(String),
    #[error("line {line}: {reason}")]
    InvalidLine { line: String, reason: String },
    #[error("store: {0}")]
    Store(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtdrEvent {
    pub position_km: f64,
    pub loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtdrTrace {
    pub span_id: String,
    pub measured_length_km: f64,
    pub events: Vec<OtdrEvent>,
    pub noise_sigma_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AseProbeRecord {
    pub span_id: String,
    pub probe_level_index: u8,
    /// OCM reading at the span input, dBm per channel.
    pub input_spectrum_dbm: Vec<f64>,
    /// OCM reading at the span output, dBm per channel.
    pub output_spectrum_dbm: Vec<f64>,
    pub ocm_sigma_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationRecord {
    pub span_id: String,
    pub fitted: FiberSpanParams,
    pub residual_rms_db: f64,
    pub iterations: usize,
    /// Emulated time of the fit, seconds.
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharacterizationConfig {
    /// Probe levels below the amplifier maximum output, dB.
    pub probe_offsets_db: [f64; 2],
    pub alpha_knots: usize,
    pub max_iterations: usize,
    pub reject_rms_db: f64,
    /// OTDR events closer than this to a span end count as connector loss.
    pub end_event_window_km: f64,
    /// OCM polls averaged per probe level.
    pub ocm_reads: usize,
}

impl Default for CharacterizationConfig {
    fn default() -> Self {
        CharacterizationConfig {
            probe_offsets_db: [2.0, 8.0],
            alpha_knots: 5,
            max_iterations: 500,
            reject_rms_db: 0.5,
            end_event_window_km: 0.5,
            ocm_reads: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeData {
    pub ols_id: String,
    pub traces: Vec<OtdrTrace>,
    pub probes: Vec<[AseProbeRecord; 2]>,
}

/// Runs OTDR and two-level ASE probing on every span of an idle line, then
/// restores the original amplifier settings.
pub fn run_probe_sequence(
    ols: &OlsDescriptor,
    olc: &mut dyn OlcHandle,
    config: &CharacterizationConfig,
) -> Result<ProbeData, CharacterizationError> {
    if ols.spans.is_empty() {
        return Err(CharacterizationError::NothingToProbe(ols.id.clone()));
    }
    let saved: Vec<(String, EdfaOperatingPoint)> = ols
        .amplifiers()
        .iter()
        .map(|a| Ok((a.id.clone(), olc.amplifier_setting(&a.id)?)))
        .collect::<Result<_, OlcError>>()?;
    let result = probe_all(ols, olc, config);
    let restored = saved.into_iter().try_for_each(|(id, s)| olc.set_amplifier(&id, s));
    let data = result?;
    restored?;
    Ok(data)
}

fn probe_all(
    ols: &OlsDescriptor,
    olc: &mut dyn OlcHandle,
    config: &CharacterizationConfig,
) -> Result<ProbeData, CharacterizationError> {
    let mut traces = Vec::with_capacity(ols.spans.len());
    let mut probes = Vec::with_capacity(ols.spans.len());
    for k in 0..ols.spans.len() {
        traces.push(olc.run_otdr(k)?);
        let amp = ols.amplifier_before_span(k);
        let limits = &amp.model.limits;
        let mut pair = Vec::with_capacity(2);
        for (idx, offset) in config.probe_offsets_db.iter().enumerate() {
            let level = limits.output_power_max_dbm - offset;
            if limits.check_output(level).is_err() || !level.is_finite() {
                return Err(CharacterizationError::ProbeLevel {
                    amplifier: amp.id.clone(),
                    level_dbm: level,
                });
            }
            olc.set_amplifier(&amp.id, EdfaOperatingPoint::ase_probe(level))?;
            let reads = config.ocm_reads.max(1);
            pair.push(AseProbeRecord {
                span_id: ols.span_id(k),
                probe_level_index: idx as u8,
                input_spectrum_dbm: averaged_ocm(olc, MonitorPoint::SpanInput(k), reads)?,
                output_spectrum_dbm: averaged_ocm(olc, MonitorPoint::SpanOutput(k), reads)?,
                ocm_sigma_db: olc.ocm_sigma_db() / (reads as f64).sqrt(),
            });
        }
        let [a, b]: [AseProbeRecord; 2] = pair.try_into().expect("two probe levels");
        probes.push([a, b]);
    }
    Ok(ProbeData {
        ols_id: ols.id.clone(),
        traces,
        probes,
    })
}

/// Mean of `reads` OCM polls, averaged in linear units.
fn averaged_ocm(olc: &mut dyn OlcHandle, point: MonitorPoint, reads: usize) -> Result<Vec<f64>, OlcError> {
    let mut acc: Vec<f64> = Vec::new();
    for _ in 0..reads {
        let r = olc.read_ocm(point)?;
        if acc.is_empty() {
            acc = vec![0.0; r.len()];
        }
        for (a, x) in acc.iter_mut().zip(r) {
            *a += dbm_to_watt(x);
        }
    }
    Ok(acc.into_iter().map(|w| watt_to_dbm(w / reads as f64)).collect())
}
