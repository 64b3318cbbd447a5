use serde::{Deserialize, Serialize};

use super::{ChannelPlan, Result, TwinError};
use crate::units::{dbm_to_watt, lin_to_db, POWER_FLOOR_W};

/// Per-channel signal, ASE and NLI powers in watts on a channel plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub plan: ChannelPlan,
    pub signal: Vec<f64>,
    pub ase: Vec<f64>,
    pub nli: Vec<f64>,
}

impl PowerSpectrum {
    pub fn new(plan: ChannelPlan, signal: Vec<f64>, ase: Vec<f64>, nli: Vec<f64>) -> Result<Self> {
        let spectrum = PowerSpectrum { plan, signal, ase, nli };
        spectrum.validate()?;
        Ok(spectrum)
    }

    /// Noise-free spectrum with the same power on every channel.
    pub fn flat(plan: &ChannelPlan, per_channel_w: f64) -> Self {
        Self::from_signal(plan, vec![per_channel_w; plan.channel_count])
    }

    pub fn flat_dbm(plan: &ChannelPlan, per_channel_dbm: f64) -> Self {
        Self::flat(plan, dbm_to_watt(per_channel_dbm))
    }

    pub fn from_signal(plan: &ChannelPlan, signal: Vec<f64>) -> Self {
        let n = signal.len();
        PowerSpectrum {
            plan: plan.clone(),
            signal,
            ase: vec![0.0; n],
            nli: vec![0.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.plan.channel_count;
        if self.signal.is_empty() {
            return Err(TwinError::InvalidSpectrum("empty spectrum".into()));
        }
        if self.signal.len() != n || self.ase.len() != n || self.nli.len() != n {
            return Err(TwinError::InvalidSpectrum(format!(
                "vector lengths ({}, {}, {}) differ from channel count {n}",
                self.signal.len(),
                self.ase.len(),
                self.nli.len()
            )));
        }
        let all = self.signal.iter().chain(&self.ase).chain(&self.nli);
        if let Some(v) = all.into_iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(TwinError::InvalidSpectrum(format!(
                "power {v} is negative or not finite"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    /// Signal plus noise in channel `i`, as an OCM would see it.
    pub fn channel_total(&self, i: usize) -> f64 {
        self.signal[i] + self.ase[i] + self.nli[i]
    }

    pub fn channel_totals(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.channel_total(i)).collect()
    }

    pub fn total_power(&self) -> f64 {
        (0..self.len()).map(|i| self.channel_total(i)).sum()
    }

    /// Multiplies all three power vectors channel by channel.
    pub fn scale_by(&mut self, factors: &[f64]) {
        for (i, k) in factors.iter().enumerate() {
            self.signal[i] *= k;
            self.ase[i] *= k;
            self.nli[i] *= k;
        }
    }

    pub fn scaled_uniform(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.scale_by(&vec![k; self.len()]);
        out
    }

    /// Keeps only the channels where `lit` is true; the rest carry no power.
    pub fn masked(&self, lit: &[bool]) -> Self {
        let mut out = self.clone();
        let factors: Vec<f64> = lit.iter().map(|&on| if on { 1.0 } else { 0.0 }).collect();
        out.scale_by(&factors);
        out
    }
}

/// Per-channel GSNR in dB: signal over accumulated ASE plus NLI.
pub fn gsnr(spectrum: &PowerSpectrum) -> Result<Vec<f64>> {
    (0..spectrum.len())
        .map(|i| {
            let noise = spectrum.ase[i] + spectrum.nli[i];
            if !(noise > 0.0) {
                return Err(TwinError::ZeroNoise { channel: i });
            }
            let signal = if spectrum.signal[i] < POWER_FLOOR_W {
                0.0
            } else {
                spectrum.signal[i]
            };
            Ok(lin_to_db(signal / noise))
        })
        .collect()
}
