//! Southbound handles the control plane uses to drive line equipment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::characterization::OtdrTrace;
use crate::topology::LineState;
use crate::twin::EdfaOperatingPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OlcError {
    #[error("line controller {0} timed out")]
    Timeout(String),
    #[error("amplifier {amplifier} rejected setting: {reason}")]
    Rejected { amplifier: String, reason: String },
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("{0}")]
    Unsupported(String),
}

/// Where an optical channel monitor reads the line spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", content = "span", rename_all = "snake_case")]
pub enum MonitorPoint {
    /// Output of the amplifier feeding span `k`.
    SpanInput(usize),
    /// Input of the amplifier following span `k`.
    SpanOutput(usize),
}

/// Handle on the optical line controller of one OLS.
pub trait OlcHandle {
    fn ols_id(&self) -> &str;
    fn amplifier_setting(&mut self, amplifier: &str) -> Result<EdfaOperatingPoint, OlcError>;
    fn set_amplifier(&mut self, amplifier: &str, setting: EdfaOperatingPoint) -> Result<(), OlcError>;
    /// Per-channel power in dBm.
    fn read_ocm(&mut self, point: MonitorPoint) -> Result<Vec<f64>, OlcError>;
    /// Standard deviation of OCM readings, dB.
    fn ocm_sigma_db(&self) -> f64 {
        0.0
    }
    fn run_otdr(&mut self, span: usize) -> Result<OtdrTrace, OlcError>;
    fn set_line_state(&mut self, state: LineState) -> Result<(), OlcError>;
}
