//! Lightpath computation engine: per path and channel, the highest
//! modulation format the twin GSNR supports.

mod b2b;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use b2b::{
    ber_to_snr, load_b2b_table, B2BConfig, CurveShape, FormatCurve, ModulationFormat, SnrEstimate, TrxB2BCurve, TrxType,
};

use crate::topology::{PhyPath, PhyTopology, TopologyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpceError {
    #[error("source and destination are both {0}")]
    SameEndpoints(String),
    #[error("no path between {src} and {dst}")]
    NoPath { src: String, dst: String },
    #[error("BER {0} outside the invertible range of the curve")]
    BerOutOfRange(f64),
    #[error("{trx_type} transceivers do not support {format}")]
    UnsupportedFormat {
        trx_type: TrxType,
        format: ModulationFormat,
    },
    #[error("invalid B2B curve: {0}")]
    InvalidCurve(String),
    #[error("no transceiver curves given")]
    NoCurves,
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LpceConfig {
    pub design_margin_db: f64,
    pub max_paths: usize,
}

impl Default for LpceConfig {
    fn default() -> Self {
        LpceConfig {
            design_margin_db: 0.0,
            max_paths: 16,
        }
    }
}

/// Per-format SNR thresholds used for feasibility: the worst case across the
/// transceiver types in the inventory, plus the design margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatThresholds {
    pub thresholds_db: BTreeMap<ModulationFormat, f64>,
}

impl FormatThresholds {
    pub fn conservative(curves: &[TrxB2BCurve], design_margin_db: f64) -> Result<Self, LpceError> {
        if curves.is_empty() {
            return Err(LpceError::NoCurves);
        }
        let mut thresholds_db = BTreeMap::new();
        for format in ModulationFormat::ALL {
            let mut worst = f64::NEG_INFINITY;
            for c in curves {
                worst = worst.max(c.snr_threshold(format)?);
            }
            thresholds_db.insert(format, worst + design_margin_db);
        }
        Ok(FormatThresholds { thresholds_db })
    }

    pub fn threshold(&self, format: ModulationFormat) -> f64 {
        self.thresholds_db[&format]
    }

    /// Highest-cardinality format whose threshold `gsnr_db` meets.
    pub fn max_format(&self, gsnr_db: f64) -> Option<ModulationFormat> {
        ModulationFormat::ALL
            .into_iter()
            .rev()
            .find(|f| gsnr_db >= self.threshold(*f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFormats {
    pub channel: usize,
    pub gsnr_db: f64,
    pub max_format: Option<ModulationFormat>,
    pub margin_db: BTreeMap<ModulationFormat, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFormatMap {
    pub path: PhyPath,
    pub channels: Vec<ChannelFormats>,
}

impl PathFormatMap {
    pub fn path_id(&self) -> &str {
        &self.path.id
    }

    pub fn max_format(&self, channel: usize) -> Option<ModulationFormat> {
        self.channels[channel].max_format
    }
}

pub fn format_map(path: PhyPath, gsnr_db: &[f64], thresholds: &FormatThresholds) -> PathFormatMap {
    let channels = gsnr_db
        .iter()
        .enumerate()
        .map(|(channel, &g)| ChannelFormats {
            channel,
            gsnr_db: g,
            max_format: thresholds.max_format(g),
            margin_db: ModulationFormat::ALL
                .into_iter()
                .map(|f| (f, g - thresholds.threshold(f)))
                .collect(),
        })
        .collect();
    PathFormatMap { path, channels }
}

/// One map per loop-free path from `src` to `dst`, shortest first.
pub fn compute_path_formats(
    src: &str,
    dst: &str,
    topology: &PhyTopology,
    curves: &[TrxB2BCurve],
    config: &LpceConfig,
) -> Result<Vec<PathFormatMap>, LpceError> {
    if src == dst {
        return Err(LpceError::SameEndpoints(src.into()));
    }
    let thresholds = FormatThresholds::conservative(curves, config.design_margin_db)?;
    let paths = topology.paths(src, dst, config.max_paths)?;
    if paths.is_empty() {
        return Err(LpceError::NoPath {
            src: src.into(),
            dst: dst.into(),
        });
    }
    paths
        .into_par_iter()
        .map(|path| {
            let g = topology.path_gsnr(&path)?;
            Ok(format_map(path, &g, &thresholds))
        })
        .collect()
}

/// Estimated minus predicted GSNR.
pub fn compute_margin(estimated_gsnr_db: f64, predicted_gsnr_db: f64) -> f64 {
    estimated_gsnr_db - predicted_gsnr_db
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpsk_threshold_matches_awgn_inversion() {
        let c = TrxB2BCurve::ideal(TrxType::Dco);
        let t = c.snr_threshold(ModulationFormat::DpQpsk).unwrap();
        assert!((t - 7.3335).abs() < 0.01, "{t}");
        let t16 = c.snr_threshold(ModulationFormat::Dp16Qam).unwrap();
        assert!((t16 - 13.9025).abs() < 0.01, "{t16}");
    }

    #[test]
    fn inverse_of_forward() {
        let c = B2BConfig::default().curve(TrxType::Aco);
        let ber = c.ber(ModulationFormat::DpQpsk, 12.0).unwrap();
        let s = ber_to_snr(ber, ModulationFormat::DpQpsk, &c).unwrap();
        assert_eq!(s, SnrEstimate::Exact(s.value()));
        assert!((s.value() - 12.0).abs() < 0.01);
    }

    #[test]
    fn out_of_range_ber() {
        let c = TrxB2BCurve::ideal(TrxType::Aco);
        assert_eq!(
            ber_to_snr(0.6, ModulationFormat::DpQpsk, &c),
            Err(LpceError::BerOutOfRange(0.6))
        );
        assert!(ber_to_snr(1e-30, ModulationFormat::DpQpsk, &c)
            .unwrap()
            .is_lower_bound());
    }

    #[test]
    fn margins() {
        assert!((compute_margin(27.1, 24.0) - 3.1).abs() < 1e-12);
        assert!((compute_margin(17.7, 17.8) + 0.1).abs() < 1e-12);
        assert_eq!(compute_margin(5.0, 5.0), 0.0);
    }

    #[test]
    fn tabulated_curve_round_trip() {
        let csv = "trx_type,format,snr_db,ber\n\
                   ACO,DP-QPSK,6,3e-2\nACO,DP-QPSK,10,1e-3\nACO,DP-QPSK,14,1e-6\n";
        let curves = load_b2b_table(csv.as_bytes(), &B2BConfig::default()).unwrap();
        assert_eq!(curves.len(), 1);
        let c = &curves[0];
        let s = ber_to_snr(1e-3, ModulationFormat::DpQpsk, c).unwrap().value();
        assert!((s - 10.0).abs() < 1e-6);
        let bad = "trx_type,format,snr_db,ber\nACO,DP-QPSK,6,1e-3\nACO,DP-QPSK,10,1e-2\n";
        assert!(load_b2b_table(bad.as_bytes(), &B2BConfig::default()).is_err());
    }
}
