use serde::{Deserialize, Serialize};

use super::{ChannelPlan, PowerSpectrum, Result, TwinError};
use crate::units::{db_per_km_to_neper, db_to_lin, SPEED_OF_LIGHT};

/// Frequency offset at which the triangular Raman gain profile peaks.
pub const RAMAN_PEAK_OFFSET_HZ: f64 = 13e12;

/// Nonlinear coefficient of standard single-mode fiber, 1/W/km.
pub const DEFAULT_GAMMA: f64 = 1.27;

/// Piecewise-linear function over frequency, held constant outside the knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(TwinError::InvalidSpan(
                "piecewise function needs at least one knot".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(TwinError::InvalidSpan(
                "knot abscissae must be strictly increasing".into(),
            ));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(TwinError::InvalidSpan("knots must be finite".into()));
        }
        Ok(PiecewiseLinear { knots })
    }

    pub fn constant(value: f64) -> Self {
        PiecewiseLinear {
            knots: vec![(0.0, value)],
        }
    }

    /// `values.len()` knots evenly spread over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, values: &[f64]) -> Result<Self> {
        match values.len() {
            0 => Err(TwinError::InvalidSpan("no knot values".into())),
            1 => Ok(Self::constant(values[0])),
            n => {
                let step = (hi - lo) / (n - 1) as f64;
                Self::new(
                    values
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| (lo + step * i as f64, v))
                        .collect(),
                )
            }
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn values(&self) -> Vec<f64> {
        self.knots.iter().map(|k| k.1).collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0].0 {
            return k[0].1;
        }
        if x >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let hi = k.partition_point(|(kx, _)| *kx <= x);
        let (x0, y0) = k[hi - 1];
        let (x1, y1) = k[hi];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn min_value(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LumpedLoss {
    pub position_km: f64,
    pub loss_db: f64,
}

/// Physical description of one fiber span between two amplifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberSpanParams {
    pub length_km: f64,
    /// Raman efficiency scale factor C_R, 1/W/km.
    pub raman_efficiency: f64,
    /// Chromatic dispersion, ps/nm/km.
    pub dispersion: f64,
    /// Loss coefficient alpha(f) in dB/km.
    pub loss_coefficient: PiecewiseLinear,
    pub input_connector_loss_db: f64,
    pub output_connector_loss_db: f64,
    #[serde(default)]
    pub lumped_losses: Vec<LumpedLoss>,
    /// Nonlinear coefficient, 1/W/km.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl FiberSpanParams {
    /// Span with a flat loss coefficient and no lumped losses.
    pub fn flat(length_km: f64, alpha_db_per_km: f64, raman_efficiency: f64, dispersion: f64) -> Self {
        FiberSpanParams {
            length_km,
            raman_efficiency,
            dispersion,
            loss_coefficient: PiecewiseLinear::constant(alpha_db_per_km),
            input_connector_loss_db: 0.0,
            output_connector_loss_db: 0.0,
            lumped_losses: Vec::new(),
            gamma: DEFAULT_GAMMA,
        }
    }

    pub fn with_connectors(mut self, input_db: f64, output_db: f64) -> Self {
        self.input_connector_loss_db = input_db;
        self.output_connector_loss_db = output_db;
        self
    }

    pub fn validate(&self, plan: &ChannelPlan) -> Result<()> {
        let bad = |m: String| Err(TwinError::InvalidSpan(m));
        if !(self.length_km > 0.0) || !self.length_km.is_finite() {
            return bad(format!("length must be positive, got {} km", self.length_km));
        }
        if !(self.raman_efficiency >= 0.0) {
            return bad(format!(
                "Raman efficiency must be non-negative, got {}",
                self.raman_efficiency
            ));
        }
        if !(self.input_connector_loss_db >= 0.0) || !(self.output_connector_loss_db >= 0.0) {
            return bad("connector losses must be non-negative".into());
        }
        if !(self.gamma >= 0.0) {
            return bad("nonlinear coefficient must be non-negative".into());
        }
        for l in &self.lumped_losses {
            if !(l.loss_db >= 0.0) {
                return bad(format!("lumped loss {} dB is negative", l.loss_db));
            }
            if !(l.position_km > 0.0 && l.position_km < self.length_km) {
                return bad(format!(
                    "lumped loss position {} km outside (0, {})",
                    l.position_km, self.length_km
                ));
            }
        }
        let lo = plan.lowest_frequency();
        let hi = plan.highest_frequency();
        let inside_min = self
            .loss_coefficient
            .knots()
            .iter()
            .filter(|(f, _)| *f > lo && *f < hi)
            .map(|k| k.1)
            .fold(f64::INFINITY, f64::min);
        let edge_min = self.alpha_db_at(lo).min(self.alpha_db_at(hi)).min(inside_min);
        if !(edge_min > 0.0) {
            return bad(format!(
                "loss coefficient must be positive over the band, min {edge_min}"
            ));
        }
        Ok(())
    }

    pub fn alpha_db_at(&self, freq: f64) -> f64 {
        self.loss_coefficient.eval(freq)
    }

    pub fn mean_alpha_db(&self, plan: &ChannelPlan) -> f64 {
        let f = plan.frequencies();
        f.iter().map(|&x| self.alpha_db_at(x)).sum::<f64>() / f.len() as f64
    }

    pub fn lumped_total_db(&self) -> f64 {
        self.lumped_losses.iter().map(|l| l.loss_db).sum()
    }

    /// Loss in dB at `freq` excluding SRS: connectors, fiber and lumped events.
    pub fn passive_loss_db(&self, freq: f64) -> f64 {
        self.input_connector_loss_db
            + self.alpha_db_at(freq) * self.length_km
            + self.lumped_total_db()
            + self.output_connector_loss_db
    }

    pub fn effective_length_km(&self, plan: &ChannelPlan) -> f64 {
        effective_length_km(self.mean_alpha_db(plan), self.length_km)
    }

    /// Group-velocity dispersion at `freq` in s^2/m.
    pub fn beta2(&self, freq: f64) -> f64 {
        let d = self.dispersion * 1e-6; // ps/nm/km -> s/m^2
        let lambda = SPEED_OF_LIGHT / freq;
        -d * lambda * lambda / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT)
    }
}

/// Effective length `(1 - exp(-a L)) / a` with `a` the power attenuation in 1/km.
pub fn effective_length_km(alpha_db_per_km: f64, length_km: f64) -> f64 {
    let a = db_per_km_to_neper(alpha_db_per_km);
    if a * length_km < 1e-12 {
        return length_km;
    }
    -(-a * length_km).exp_m1() / a
}

/// First-order SRS power exchange.
///
/// Power moves from high to low frequencies with an exponent linear in
/// frequency; the total is preserved exactly by normalization.
pub fn srs_exchange(powers: &[f64], frequencies: &[f64], raman_efficiency: f64, effective_length_km: f64) -> Vec<f64> {
    let total: f64 = powers.iter().sum();
    if powers.len() < 2 || total <= 0.0 || raman_efficiency == 0.0 {
        return powers.to_vec();
    }
    let f_mean = frequencies.iter().sum::<f64>() / frequencies.len() as f64;
    let slope = raman_efficiency / RAMAN_PEAK_OFFSET_HZ * total * effective_length_km;
    let weights: Vec<f64> = frequencies.iter().map(|f| (-slope * (f - f_mean)).exp()).collect();
    let norm: f64 = powers.iter().zip(&weights).map(|(p, w)| p * w).sum();
    powers.iter().zip(&weights).map(|(p, w)| p * w * total / norm).collect()
}

/// Propagates a spectrum through one fiber span.
///
/// Signal, ASE and NLI see identical per-channel factors: input connector,
/// SRS exchange driven by the total in-fiber power, distributed loss
/// alpha(f), lumped events and output connector.
pub fn span_transfer(spectrum: &PowerSpectrum, span: &FiberSpanParams) -> Result<PowerSpectrum> {
    spectrum.validate()?;
    span.validate(&spectrum.plan)?;
    let freqs = spectrum.plan.frequencies();
    let a_in = db_to_lin(-span.input_connector_loss_db);
    let in_fiber: Vec<f64> = spectrum.channel_totals().iter().map(|p| p * a_in).collect();
    let exchanged = srs_exchange(
        &in_fiber,
        &freqs,
        span.raman_efficiency,
        span.effective_length_km(&spectrum.plan),
    );
    let tail_db = span.lumped_total_db() + span.output_connector_loss_db;
    let factors: Vec<f64> = freqs
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let srs = if in_fiber[i] > 0.0 {
                exchanged[i] / in_fiber[i]
            } else {
                1.0
            };
            a_in * srs * db_to_lin(-(span.alpha_db_at(f) * span.length_km + tail_db))
        })
        .collect();
    let mut out = spectrum.clone();
    out.scale_by(&factors);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::build_channel_plan;
    use crate::units::{watt_to_dbm, GHZ, THZ};

    fn c_band() -> ChannelPlan {
        build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap()
    }

    #[test]
    fn piecewise_interpolates_and_clamps() {
        let p = PiecewiseLinear::new(vec![(1.0, 0.0), (3.0, 2.0)]).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(2.0), 1.0);
        assert_eq!(p.eval(5.0), 2.0);
        assert!(PiecewiseLinear::new(vec![(1.0, 0.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn line1_span1_output_level_and_tilt() {
        let plan = c_band();
        let span = FiberSpanParams::flat(65.5, 0.2, 0.34, 16.6).with_connectors(5.5, 0.1);
        let out = span_transfer(&PowerSpectrum::flat_dbm(&plan, 0.0), &span).unwrap();
        let dbm: Vec<f64> = out.channel_totals().iter().map(|&p| watt_to_dbm(p)).collect();
        let mean = dbm.iter().sum::<f64>() / dbm.len() as f64;
        assert!((mean + 18.7).abs() < 0.05, "mean {mean}");
        assert!(dbm[0] > dbm[74], "red {} blue {}", dbm[0], dbm[74]);
    }

    #[test]
    fn vanishing_span_is_identity() {
        let plan = c_band();
        let span = FiberSpanParams::flat(1e-9, 0.2, 0.4, 16.6);
        let input = PowerSpectrum::flat_dbm(&plan, 0.0);
        let out = span_transfer(&input, &span).unwrap();
        for (a, b) in out.signal.iter().zip(&input.signal) {
            assert!((a / b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_channel_sees_no_tilt() {
        let plan = build_channel_plan(193.5 * THZ, 50.0 * GHZ, 1, 32.0 * GHZ).unwrap();
        let span = FiberSpanParams::flat(80.0, 0.2, 5.0, 16.6);
        let out = span_transfer(&PowerSpectrum::flat_dbm(&plan, 20.0), &span).unwrap();
        assert!((watt_to_dbm(out.signal[0]) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn srs_conserves_total_power() {
        let plan = c_band();
        let p: Vec<f64> = (0..75).map(|i| 1e-3 * (1.0 + (i % 7) as f64)).collect();
        let out = srs_exchange(&p, &plan.frequencies(), 0.44, 21.0);
        let (a, b): (f64, f64) = (p.iter().sum(), out.iter().sum());
        assert!(((a - b) / a).abs() < 1e-12);
        assert!(out[0] / p[0] > out[74] / p[74]);
    }

    #[test]
    fn rejects_invalid_spans() {
        let plan = c_band();
        let mut span = FiberSpanParams::flat(65.0, 0.2, 0.3, 16.6);
        span.lumped_losses.push(LumpedLoss {
            position_km: 70.0,
            loss_db: 0.3,
        });
        assert!(span.validate(&plan).is_err());
        assert!(FiberSpanParams::flat(65.0, 0.0, 0.3, 16.6).validate(&plan).is_err());
        assert!(FiberSpanParams::flat(-1.0, 0.2, 0.3, 16.6).validate(&plan).is_err());
    }

    #[test]
    fn beta2_of_ssmf() {
        let span = FiberSpanParams::flat(65.0, 0.2, 0.3, 16.7);
        let b2_ps2_km = span.beta2(193.5 * THZ) * 1e27;
        assert!((b2_ps2_km + 21.3).abs() < 0.2, "{b2_ps2_km}");
    }
}
