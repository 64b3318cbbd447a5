use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::LpceError;
use crate::units::db_to_lin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModulationFormat {
    #[serde(rename = "DP-QPSK")]
    DpQpsk,
    #[serde(rename = "DP-16QAM")]
    Dp16Qam,
}

impl ModulationFormat {
    /// Ascending cardinality.
    pub const ALL: [ModulationFormat; 2] = [ModulationFormat::DpQpsk, ModulationFormat::Dp16Qam];

    pub fn name(self) -> &'static str {
        match self {
            ModulationFormat::DpQpsk => "DP-QPSK",
            ModulationFormat::Dp16Qam => "DP-16QAM",
        }
    }

    /// Net line rate at 32 GBd.
    pub fn rate_gbps(self) -> u32 {
        match self {
            ModulationFormat::DpQpsk => 100,
            ModulationFormat::Dp16Qam => 200,
        }
    }

    pub fn cardinality(self) -> u32 {
        match self {
            ModulationFormat::DpQpsk => 4,
            ModulationFormat::Dp16Qam => 16,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(s.trim()))
    }

    /// AWGN Gray-coded bit error ratio at the given SNR (dB), per polarization.
    pub fn awgn_ber(self, snr_db: f64) -> f64 {
        let snr = db_to_lin(snr_db);
        match self {
            ModulationFormat::DpQpsk => 0.5 * erfc((snr / 2.0).sqrt()),
            ModulationFormat::Dp16Qam => {
                let x = (snr / 10.0).sqrt();
                (3.0 * erfc(x) + 2.0 * erfc(3.0 * x) - erfc(5.0 * x)) / 8.0
            }
        }
    }
}

impl fmt::Display for ModulationFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrxType {
    Aco,
    Dco,
}

impl TrxType {
    pub fn name(self) -> &'static str {
        match self {
            TrxType::Aco => "ACO",
            TrxType::Dco => "DCO",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ACO" => Some(TrxType::Aco),
            "DCO" => Some(TrxType::Dco),
            _ => None,
        }
    }
}

impl fmt::Display for TrxType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveShape {
    /// AWGN formula shifted right by `penalty_db`.
    Analytic { penalty_db: f64 },
    /// (SNR dB, BER) samples, SNR strictly increasing and BER strictly
    /// decreasing; log-BER is interpolated linearly.
    Tabulated { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatCurve {
    pub format: ModulationFormat,
    pub shape: CurveShape,
}

const ANALYTIC_SNR_MIN_DB: f64 = -10.0;
const ANALYTIC_SNR_MAX_DB: f64 = 40.0;

impl FormatCurve {
    fn range(&self) -> (f64, f64) {
        match &self.shape {
            CurveShape::Analytic { penalty_db } => (ANALYTIC_SNR_MIN_DB + penalty_db, ANALYTIC_SNR_MAX_DB + penalty_db),
            CurveShape::Tabulated { points } => (points[0].0, points[points.len() - 1].0),
        }
    }

    fn ber(&self, snr_db: f64) -> f64 {
        match &self.shape {
            CurveShape::Analytic { penalty_db } => self.format.awgn_ber(snr_db - penalty_db),
            CurveShape::Tabulated { points } => {
                if snr_db <= points[0].0 {
                    return points[0].1;
                }
                let last = points[points.len() - 1];
                if snr_db >= last.0 {
                    return last.1;
                }
                let k = points.partition_point(|p| p.0 <= snr_db);
                let (a, b) = (points[k - 1], points[k]);
                let t = (snr_db - a.0) / (b.0 - a.0);
                10f64.powf(a.1.log10() + t * (b.1.log10() - a.1.log10()))
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match &self.shape {
            CurveShape::Analytic { penalty_db } if !penalty_db.is_finite() => {
                Err(format!("{} penalty must be finite", self.format))
            }
            CurveShape::Analytic { .. } => Ok(()),
            CurveShape::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(format!("{} table needs at least two points", self.format));
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(format!("{} table SNR must be strictly increasing", self.format));
                    }
                    if !(w[1].1 < w[0].1) {
                        return Err(format!("{} table BER must be strictly decreasing", self.format));
                    }
                }
                if points.iter().any(|p| !(p.1 > 0.0 && p.1 < 0.5) || !p.0.is_finite()) {
                    return Err(format!("{} table BER must lie in (0, 0.5)", self.format));
                }
                Ok(())
            }
        }
    }
}

/// Result of inverting a B2B curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "snr_db", rename_all = "snake_case")]
pub enum SnrEstimate {
    Exact(f64),
    /// BER was below what the receiver can resolve; the SNR is at least this.
    AtLeast(f64),
}

impl SnrEstimate {
    pub fn value(self) -> f64 {
        match self {
            SnrEstimate::Exact(v) | SnrEstimate::AtLeast(v) => v,
        }
    }

    pub fn is_lower_bound(self) -> bool {
        matches!(self, SnrEstimate::AtLeast(_))
    }
}

/// Back-to-back BER/SNR characterization of one transceiver type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrxB2BCurve {
    pub trx_type: TrxType,
    pub pre_fec_ber: f64,
    /// Smallest BER the receiver reports; one error in a 15 s window at
    /// 128 Gb/s is about 5e-13.
    pub ber_floor: f64,
    pub formats: Vec<FormatCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct B2BConfig {
    pub pre_fec_ber: f64,
    pub ber_floor: f64,
    /// Implementation penalty per transceiver type, all formats.
    pub trx_penalty_db: BTreeMap<TrxType, f64>,
    /// Extra penalty per format on top of the transceiver penalty.
    pub format_penalty_db: BTreeMap<ModulationFormat, f64>,
}

impl Default for B2BConfig {
    fn default() -> Self {
        B2BConfig {
            pre_fec_ber: 1e-2,
            ber_floor: 1e-13,
            trx_penalty_db: BTreeMap::from([(TrxType::Aco, 1.5), (TrxType::Dco, 0.5)]),
            format_penalty_db: BTreeMap::from([(ModulationFormat::DpQpsk, 0.0), (ModulationFormat::Dp16Qam, 5.5)]),
        }
    }
}

impl B2BConfig {
    pub fn curve(&self, trx_type: TrxType) -> TrxB2BCurve {
        let base = self.trx_penalty_db.get(&trx_type).copied().unwrap_or(0.0);
        TrxB2BCurve {
            trx_type,
            pre_fec_ber: self.pre_fec_ber,
            ber_floor: self.ber_floor,
            formats: ModulationFormat::ALL
                .into_iter()
                .map(|format| FormatCurve {
                    format,
                    shape: CurveShape::Analytic {
                        penalty_db: base + self.format_penalty_db.get(&format).copied().unwrap_or(0.0),
                    },
                })
                .collect(),
        }
    }
}

impl TrxB2BCurve {
    /// Plain AWGN curves without implementation penalty.
    pub fn ideal(trx_type: TrxType) -> Self {
        B2BConfig {
            trx_penalty_db: BTreeMap::new(),
            format_penalty_db: BTreeMap::new(),
            ..B2BConfig::default()
        }
        .curve(trx_type)
    }

    pub fn validate(&self) -> Result<(), LpceError> {
        let bad = |m: String| LpceError::InvalidCurve(format!("{}: {m}", self.trx_type));
        if !(self.pre_fec_ber > 0.0 && self.pre_fec_ber < 0.5) {
            return Err(bad("pre-FEC BER must lie in (0, 0.5)".into()));
        }
        if !(self.ber_floor > 0.0 && self.ber_floor < self.pre_fec_ber) {
            return Err(bad("BER floor must lie in (0, pre-FEC BER)".into()));
        }
        for f in &self.formats {
            f.validate().map_err(bad)?;
        }
        let mut last: Option<(ModulationFormat, f64)> = None;
        for format in ModulationFormat::ALL {
            if self.format_curve(format).is_err() {
                continue;
            }
            let t = self.snr_threshold(format)?;
            if let Some((prev, pt)) = last {
                if !(t > pt) {
                    return Err(bad(format!("threshold of {format} must exceed that of {prev}")));
                }
            }
            last = Some((format, t));
        }
        Ok(())
    }

    pub fn supports(&self, format: ModulationFormat) -> bool {
        self.formats.iter().any(|f| f.format == format)
    }

    fn format_curve(&self, format: ModulationFormat) -> Result<&FormatCurve, LpceError> {
        self.formats
            .iter()
            .find(|f| f.format == format)
            .ok_or(LpceError::UnsupportedFormat {
                trx_type: self.trx_type,
                format,
            })
    }

    /// Forward curve: BER at the given SNR, clamped to the supported range.
    pub fn ber(&self, format: ModulationFormat, snr_db: f64) -> Result<f64, LpceError> {
        let curve = self.format_curve(format)?;
        let (lo, hi) = curve.range();
        Ok(curve.ber(snr_db.clamp(lo, hi)))
    }

    pub fn snr_threshold(&self, format: ModulationFormat) -> Result<f64, LpceError> {
        match ber_to_snr(self.pre_fec_ber, format, self)? {
            SnrEstimate::Exact(v) => Ok(v),
            SnrEstimate::AtLeast(_) => Err(LpceError::InvalidCurve(format!(
                "{}: {format} never reaches the pre-FEC BER",
                self.trx_type
            ))),
        }
    }
}

/// Inverts the B2B curve by bisection on log-BER.
pub fn ber_to_snr(ber: f64, format: ModulationFormat, curve: &TrxB2BCurve) -> Result<SnrEstimate, LpceError> {
    if !(ber > 0.0 && ber < 0.5) {
        return Err(LpceError::BerOutOfRange(ber));
    }
    let fc = curve.format_curve(format)?;
    let (lo, hi) = fc.range();
    let floor = curve.ber_floor.max(fc.ber(hi));
    if ber < floor {
        return Ok(SnrEstimate::AtLeast(invert(fc, floor, lo, hi)));
    }
    if ber > fc.ber(lo) {
        return Err(LpceError::BerOutOfRange(ber));
    }
    Ok(SnrEstimate::Exact(invert(fc, ber, lo, hi)))
}

fn invert(fc: &FormatCurve, ber: f64, mut lo: f64, mut hi: f64) -> f64 {
    let target = ber.log10();
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if fc.ber(mid).log10() > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Deserialize)]
struct TableRow {
    trx_type: String,
    format: String,
    snr_db: f64,
    ber: f64,
}

/// Reads tabulated B2B curves from CSV with header
/// `trx_type,format,snr_db,ber`. Formats missing from the table keep the
/// analytic shape of `defaults`.
pub fn load_b2b_table<R: Read>(reader: R, defaults: &B2BConfig) -> Result<Vec<TrxB2BCurve>, LpceError> {
    let mut rows: BTreeMap<(TrxType, ModulationFormat), Vec<(f64, f64)>> = BTreeMap::new();
    let mut csv = csv::Reader::from_reader(reader);
    for (line, row) in csv.deserialize::<TableRow>().enumerate() {
        let row = row.map_err(|e| LpceError::InvalidCurve(format!("row {}: {e}", line + 2)))?;
        let trx = TrxType::parse(&row.trx_type)
            .ok_or_else(|| LpceError::InvalidCurve(format!("row {}: unknown trx type {}", line + 2, row.trx_type)))?;
        let format = ModulationFormat::parse(&row.format)
            .ok_or_else(|| LpceError::InvalidCurve(format!("row {}: unknown format {}", line + 2, row.format)))?;
        rows.entry((trx, format)).or_default().push((row.snr_db, row.ber));
    }
    let mut curves: BTreeMap<TrxType, TrxB2BCurve> = BTreeMap::new();
    for ((trx, format), mut points) in rows {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let curve = curves.entry(trx).or_insert_with(|| defaults.curve(trx));
        let slot = curve
            .formats
            .iter_mut()
            .find(|f| f.format == format)
            .expect("all formats present");
        slot.shape = CurveShape::Tabulated { points };
    }
    let curves: Vec<_> = curves.into_values().collect();
    for c in &curves {
        c.validate()?;
    }
    Ok(curves)
}
