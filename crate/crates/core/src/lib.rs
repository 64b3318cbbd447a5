//! Digital-twin driven control of partially disaggregated optical networks.
//!
//! - [`twin`]: frequency-resolved physical-layer model of optical lines (GSNR).
//! - [`characterization`]: probing of idle lines and per-span parameter fitting.
//! - [`ampopt`]: amplifier working-point optimization at full spectral load.
//! - [`lpce`]: lightpath computation engine and transceiver back-to-back curves.
//! - [`oonc`]: orchestrator (topology abstraction, RSA, deployment, restoration).
//! - [`emu`]: emulated data plane (ROADM, transceiver and line-controller agents).
//! - [`scenario`], [`pipeline`], [`report`]: scenario files, the end-to-end
//!   workflow and table-style reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ampopt;
pub mod characterization;
pub mod control;
pub mod emu;
pub mod lpce;
pub mod oonc;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod topology;
pub mod twin;
pub mod units;
