use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::{ChannelPlan, PiecewiseLinear, PowerSpectrum, Result, TwinError};
use crate::units::{db_to_lin, lin_to_db, watt_to_dbm, PLANCK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdfaMode {
    ConstantGain,
    ConstantOutputPower,
    /// Amplifier emits a flat ASE comb at `output_power_dbm`, ignoring its input.
    AseProbe,
}

/// Amplifier working point. In constant-gain mode `gain_db` is authoritative,
/// in the two output-power modes `output_power_dbm` is.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EdfaOperatingPoint {
    pub mode: EdfaMode,
    #[serde(default = "unset", with = "nan_as_null")]
    pub gain_db: f64,
    /// Edge-to-edge gain tilt; negative means gain falls with frequency.
    #[serde(default)]
    pub tilt_db: f64,
    #[serde(default = "unset", with = "nan_as_null")]
    pub output_power_dbm: f64,
}

impl PartialEq for EdfaOperatingPoint {
    fn eq(&self, other: &Self) -> bool {
        let same = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.mode == other.mode
            && same(self.gain_db, other.gain_db)
            && same(self.tilt_db, other.tilt_db)
            && same(self.output_power_dbm, other.output_power_dbm)
    }
}

fn unset() -> f64 {
    f64::NAN
}

/// Unset working-point fields are NaN in memory and absent/null on the wire.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl EdfaOperatingPoint {
    pub fn constant_gain(gain_db: f64, tilt_db: f64) -> Self {
        EdfaOperatingPoint {
            mode: EdfaMode::ConstantGain,
            gain_db,
            tilt_db,
            output_power_dbm: f64::NAN,
        }
    }

    pub fn constant_output_power(output_power_dbm: f64, tilt_db: f64) -> Self {
        EdfaOperatingPoint {
            mode: EdfaMode::ConstantOutputPower,
            gain_db: f64::NAN,
            tilt_db,
            output_power_dbm,
        }
    }

    pub fn ase_probe(output_power_dbm: f64) -> Self {
        EdfaOperatingPoint {
            mode: EdfaMode::AseProbe,
            gain_db: f64::NAN,
            tilt_db: 0.0,
            output_power_dbm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfaLimits {
    pub gain_min_db: f64,
    pub gain_max_db: f64,
    pub output_power_max_dbm: f64,
    #[serde(default = "default_tilt_min")]
    pub tilt_min_db: f64,
    #[serde(default = "default_tilt_max")]
    pub tilt_max_db: f64,
    /// Total input power below which the device reports loss of input.
    #[serde(default = "default_input_floor")]
    pub input_floor_dbm: f64,
}

fn default_tilt_min() -> f64 {
    -5.0
}
fn default_tilt_max() -> f64 {
    5.0
}
fn default_input_floor() -> f64 {
    -50.0
}

impl EdfaLimits {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.gain_min_db <= self.gain_max_db) {
            return Err(format!(
                "gain_min_db {} exceeds gain_max_db {}",
                self.gain_min_db, self.gain_max_db
            ));
        }
        if !(self.tilt_min_db <= self.tilt_max_db) {
            return Err(format!(
                "tilt_min_db {} exceeds tilt_max_db {}",
                self.tilt_min_db, self.tilt_max_db
            ));
        }
        if !self.output_power_max_dbm.is_finite() {
            return Err("output_power_max_dbm must be finite".into());
        }
        Ok(())
    }

    pub fn check_gain(&self, gain_db: f64) -> Result<()> {
        const EPS: f64 = 1e-9;
        if gain_db < self.gain_min_db - EPS || gain_db > self.gain_max_db + EPS || !gain_db.is_finite() {
            return Err(TwinError::GainOutOfRange {
                required_db: gain_db,
                min_db: self.gain_min_db,
                max_db: self.gain_max_db,
            });
        }
        Ok(())
    }

    pub fn check_tilt(&self, tilt_db: f64) -> Result<()> {
        if tilt_db < self.tilt_min_db - 1e-9 || tilt_db > self.tilt_max_db + 1e-9 || !tilt_db.is_finite() {
            return Err(TwinError::TiltOutOfRange {
                tilt_db,
                min_db: self.tilt_min_db,
                max_db: self.tilt_max_db,
            });
        }
        Ok(())
    }

    pub fn check_output(&self, output_dbm: f64) -> Result<()> {
        if output_dbm > self.output_power_max_dbm + 1e-9 {
            return Err(TwinError::OutputPowerExceeded {
                output_dbm,
                max_dbm: self.output_power_max_dbm,
            });
        }
        Ok(())
    }
}

/// Behavioral amplifier model: gain shape and noise figure for a setting.
///
/// [`ParametricEdfa`] is the built-in implementation; a table-driven model
/// fitted on measurements can be plugged in through this trait.
pub trait AmplifierModel: Debug + Send + Sync {
    fn limits(&self) -> &EdfaLimits;

    /// Gain in dB seen by a channel at `freq` for the nominal gain and tilt.
    fn channel_gain_db(&self, gain_db: f64, tilt_db: f64, freq: f64, plan: &ChannelPlan) -> f64 {
        let span = plan.band_span();
        if span > 0.0 {
            gain_db + tilt_db * (freq - plan.center_frequency) / span
        } else {
            gain_db
        }
    }

    fn noise_figure_db(&self, freq: f64) -> f64;
}

/// Flat gain with linear tilt and a frequency-dependent noise figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricEdfa {
    pub limits: EdfaLimits,
    pub noise_figure: PiecewiseLinear,
}

impl ParametricEdfa {
    pub fn new(limits: EdfaLimits, noise_figure_db: f64) -> Self {
        ParametricEdfa {
            limits,
            noise_figure: PiecewiseLinear::constant(noise_figure_db),
        }
    }
}

impl AmplifierModel for ParametricEdfa {
    fn limits(&self) -> &EdfaLimits {
        &self.limits
    }

    fn noise_figure_db(&self, freq: f64) -> f64 {
        self.noise_figure.eval(freq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplifierOutput {
    pub spectrum: PowerSpectrum,
    /// Nominal gain actually applied (derived in output-power modes).
    pub gain_db: f64,
    pub output_power_dbm: f64,
}

/// Amplifies a spectrum and adds the amplifier's ASE in `ref_bandwidth`.
pub fn edfa_apply(
    spectrum: &PowerSpectrum,
    model: &dyn AmplifierModel,
    op: &EdfaOperatingPoint,
    ref_bandwidth: f64,
) -> Result<AmplifierOutput> {
    spectrum.validate()?;
    let limits = model.limits();
    let plan = &spectrum.plan;
    let freqs = plan.frequencies();
    let input_total = spectrum.total_power();

    if op.mode == EdfaMode::AseProbe {
        limits.check_output(op.output_power_dbm)?;
        let per_channel = crate::units::dbm_to_watt(op.output_power_dbm) / spectrum.len() as f64;
        let out = PowerSpectrum::flat(plan, per_channel);
        let gain_db = if input_total > 0.0 {
            op.output_power_dbm - watt_to_dbm(input_total)
        } else {
            0.0
        };
        return Ok(AmplifierOutput {
            spectrum: out,
            gain_db,
            output_power_dbm: op.output_power_dbm,
        });
    }

    limits.check_tilt(op.tilt_db)?;
    let input_dbm = watt_to_dbm(input_total);
    if input_dbm < limits.input_floor_dbm {
        return Err(TwinError::InputBelowFloor {
            input_dbm,
            floor_dbm: limits.input_floor_dbm,
        });
    }

    // Relative gain shape s_i and the per-channel ASE coefficient c_i so that
    // added ASE = c_i * (x * s_i - 1) with x the nominal linear gain.
    let shape: Vec<f64> = freqs
        .iter()
        .map(|&f| db_to_lin(model.channel_gain_db(0.0, op.tilt_db, f, plan)))
        .collect();
    let ase_coef: Vec<f64> = freqs
        .iter()
        .map(|&f| PLANCK * f * db_to_lin(model.noise_figure_db(f)) * ref_bandwidth)
        .collect();
    let totals = spectrum.channel_totals();
    let output_at = |x: f64| -> f64 {
        (0..totals.len())
            .map(|i| {
                let g = x * shape[i];
                g * totals[i] + if g > 1.0 { ase_coef[i] * (g - 1.0) } else { 0.0 }
            })
            .sum()
    };

    let gain_db = match op.mode {
        EdfaMode::ConstantGain => op.gain_db,
        EdfaMode::ConstantOutputPower => solve_gain_db(
            &output_at,
            crate::units::dbm_to_watt(op.output_power_dbm),
            &shape,
            &totals,
            &ase_coef,
        ),
        EdfaMode::AseProbe => unreachable!(),
    };
    limits.check_gain(gain_db)?;

    let x = db_to_lin(gain_db);
    let mut out = spectrum.clone();
    for i in 0..out.len() {
        let g = x * shape[i];
        out.signal[i] *= g;
        out.ase[i] *= g;
        out.nli[i] *= g;
        if g > 1.0 {
            out.ase[i] += ase_coef[i] * (g - 1.0);
        }
    }
    let output_power_dbm = watt_to_dbm(out.total_power());
    limits.check_output(output_power_dbm)?;
    Ok(AmplifierOutput {
        spectrum: out,
        gain_db,
        output_power_dbm,
    })
}

/// Nominal gain (dB) that brings the total output to `target_w`.
fn solve_gain_db(
    output_at: &dyn Fn(f64) -> f64,
    target_w: f64,
    shape: &[f64],
    totals: &[f64],
    ase_coef: &[f64],
) -> f64 {
    if !(target_w > 0.0) {
        return f64::NEG_INFINITY;
    }
    // When every channel sees gain > 1 the output is affine in x.
    let slope: f64 = (0..shape.len()).map(|i| shape[i] * (totals[i] + ase_coef[i])).sum();
    let offset: f64 = ase_coef.iter().sum();
    let x = (target_w + offset) / slope;
    if shape.iter().all(|s| x * s > 1.0) {
        return lin_to_db(x);
    }
    let (mut lo, mut hi) = (-60.0f64, 80.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if output_at(db_to_lin(mid)) < target_w {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::build_channel_plan;
    use crate::units::{dbm_to_watt, GHZ, THZ};

    fn limits() -> EdfaLimits {
        EdfaLimits {
            gain_min_db: -5.0,
            gain_max_db: 30.0,
            output_power_max_dbm: 25.0,
            tilt_min_db: -5.0,
            tilt_max_db: 5.0,
            input_floor_dbm: -50.0,
        }
    }

    #[test]
    fn ase_level_matches_direct_evaluation() {
        let plan = build_channel_plan(193.5 * THZ, 50.0 * GHZ, 1, 32.0 * GHZ).unwrap();
        let amp = ParametricEdfa::new(limits(), 5.0);
        let out = edfa_apply(
            &PowerSpectrum::flat_dbm(&plan, -20.0),
            &amp,
            &EdfaOperatingPoint::constant_gain(15.0, 0.0),
            12.5 * GHZ,
        )
        .unwrap();
        // h f 10^0.5 (10^1.5 - 1) 12.5 GHz evaluated independently: -38.091 dBm
        assert!((watt_to_dbm(out.spectrum.ase[0]) + 38.091).abs() < 0.001);
    }

    #[test]
    fn unity_gain_is_identity() {
        let plan = build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap();
        let amp = ParametricEdfa::new(limits(), 5.0);
        let input = PowerSpectrum::flat_dbm(&plan, -3.0);
        let out = edfa_apply(&input, &amp, &EdfaOperatingPoint::constant_gain(0.0, 0.0), 32.0 * GHZ).unwrap();
        assert_eq!(out.spectrum.signal, input.signal);
        assert!(out.spectrum.ase.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn tilt_is_edge_to_edge() {
        let plan = build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap();
        let amp = ParametricEdfa::new(limits(), 5.0);
        let out = edfa_apply(
            &PowerSpectrum::flat_dbm(&plan, -10.0),
            &amp,
            &EdfaOperatingPoint::constant_gain(15.7, -1.0),
            32.0 * GHZ,
        )
        .unwrap();
        let s = &out.spectrum.signal;
        let tilt = watt_to_dbm(s[74]) - watt_to_dbm(s[0]);
        assert!((tilt + 1.0).abs() < 1e-9);
        assert!((watt_to_dbm(s[37]) - 5.7).abs() < 1e-9);
    }

    #[test]
    fn constant_output_power_hits_target() {
        let plan = build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap();
        let amp = ParametricEdfa::new(limits(), 6.0);
        let out = edfa_apply(
            &PowerSpectrum::flat_dbm(&plan, -12.0),
            &amp,
            &EdfaOperatingPoint::constant_output_power(21.8, 0.0),
            32.0 * GHZ,
        )
        .unwrap();
        assert!((out.output_power_dbm - 21.8).abs() < 1e-9);
        assert!((out.spectrum.total_power() - dbm_to_watt(21.8)).abs() < 1e-12);
        assert!(out.gain_db > 15.0 && out.gain_db < 16.0);
    }

    #[test]
    fn limits_are_enforced() {
        let plan = build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap();
        let amp = ParametricEdfa::new(limits(), 5.0);
        let input = PowerSpectrum::flat_dbm(&plan, -20.0);
        let bw = 32.0 * GHZ;
        let err = edfa_apply(&input, &amp, &EdfaOperatingPoint::constant_gain(31.0, 0.0), bw).unwrap_err();
        assert!(matches!(err, TwinError::GainOutOfRange { .. }));
        let err = edfa_apply(&input, &amp, &EdfaOperatingPoint::constant_gain(20.0, 6.0), bw).unwrap_err();
        assert!(matches!(err, TwinError::TiltOutOfRange { .. }));
        let weak = PowerSpectrum::flat_dbm(&plan, -40.0);
        let err = edfa_apply(&weak, &amp, &EdfaOperatingPoint::constant_output_power(24.0, 0.0), bw).unwrap_err();
        assert!(matches!(err, TwinError::GainOutOfRange { .. }));
        let err = edfa_apply(&input, &amp, &EdfaOperatingPoint::constant_output_power(26.0, 0.0), bw).unwrap_err();
        assert!(matches!(err, TwinError::OutputPowerExceeded { .. }));
        let faint = PowerSpectrum::flat_dbm(&plan, -80.0);
        let err = edfa_apply(&faint, &amp, &EdfaOperatingPoint::constant_gain(10.0, 0.0), bw).unwrap_err();
        assert!(matches!(err, TwinError::InputBelowFloor { .. }));
    }

    #[test]
    fn unset_fields_round_trip_as_null() {
        let op = EdfaOperatingPoint::constant_output_power(21.8, -0.5);
        let json = serde_json::to_string(&op).unwrap();
        assert!(json.contains("\"gain_db\":null"));
        let back: EdfaOperatingPoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, op);
    }
}
