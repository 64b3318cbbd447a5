//! Frequency-resolved digital twin of an optical line system.
//!
//! Every function in this module is pure: spectra go in, new spectra come out.
//! A [`PowerSpectrum`] carries three per-channel power vectors (signal, ASE and
//! NLI) that are propagated together through fiber spans and amplifiers; the
//! generalized SNR of a channel is its signal power over the sum of the two
//! noise vectors.

mod edfa;
mod fiber;
mod nli;
mod ols;
mod plan;
mod spectrum;

pub use edfa::{edfa_apply, AmplifierModel, AmplifierOutput, EdfaLimits, EdfaMode, EdfaOperatingPoint, ParametricEdfa};
pub use fiber::{
    effective_length_km, span_transfer, srs_exchange, FiberSpanParams, LumpedLoss, PiecewiseLinear, DEFAULT_GAMMA,
    RAMAN_PEAK_OFFSET_HZ,
};
pub use nli::{nli_span, NliKernel};
pub use ols::{propagate_ols, Amplifier, OlsDescriptor, OlsTwin, PropagationOptions};
pub use plan::{build_channel_plan, ChannelPlan, DEFAULT_SLOT_GRANULARITY};
pub use spectrum::{gsnr, PowerSpectrum};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwinError {
    #[error("invalid channel plan: {0}")]
    InvalidPlan(String),
    #[error("invalid span parameters: {0}")]
    InvalidSpan(String),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("spectrum plan does not match the line plan")]
    PlanMismatch,
    #[error("required gain {required_db:.2} dB outside [{min_db:.1}, {max_db:.1}] dB")]
    GainOutOfRange { required_db: f64, min_db: f64, max_db: f64 },
    #[error("tilt {tilt_db:.2} dB outside [{min_db:.1}, {max_db:.1}] dB")]
    TiltOutOfRange { tilt_db: f64, min_db: f64, max_db: f64 },
    #[error("output power {output_dbm:.2} dBm exceeds device maximum {max_dbm:.1} dBm")]
    OutputPowerExceeded { output_dbm: f64, max_dbm: f64 },
    #[error("input power {input_dbm:.2} dBm below sensitivity floor {floor_dbm:.1} dBm")]
    InputBelowFloor { input_dbm: f64, floor_dbm: f64 },
    #[error("dispersion too small for the GN model (|beta2| = {beta2_abs:e} s^2/m)")]
    ZeroDispersion { beta2_abs: f64 },
    #[error("channel {channel} has no accumulated noise; GSNR is unbounded")]
    ZeroNoise { channel: usize },
    #[error("element {index} ({element}): {source}")]
    Element {
        index: usize,
        element: String,
        #[source]
        source: Box<TwinError>,
    },
}

impl TwinError {
    pub(crate) fn at(self, index: usize, element: impl Into<String>) -> Self {
        TwinError::Element {
            index,
            element: element.into(),
            source: Box::new(self),
        }
    }

    /// Strips element annotations.
    pub fn root(&self) -> &TwinError {
        match self {
            TwinError::Element { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = TwinError> = std::result::Result<T, E>;
