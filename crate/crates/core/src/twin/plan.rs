use serde::{Deserialize, Serialize};

use super::{Result, TwinError};
use crate::units::GHZ;

pub const DEFAULT_SLOT_GRANULARITY: f64 = 12.5 * GHZ;

/// Fixed-grid WDM channel plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub center_frequency: f64,
    pub spacing: f64,
    pub channel_count: usize,
    pub symbol_rate: f64,
    #[serde(default = "default_granularity")]
    pub slot_granularity: f64,
}

fn default_granularity() -> f64 {
    DEFAULT_SLOT_GRANULARITY
}

pub fn build_channel_plan(center: f64, spacing: f64, count: usize, symbol_rate: f64) -> Result<ChannelPlan> {
    ChannelPlan::new(center, spacing, count, symbol_rate)
}

impl ChannelPlan {
    pub fn new(center: f64, spacing: f64, count: usize, symbol_rate: f64) -> Result<Self> {
        let plan = ChannelPlan {
            center_frequency: center,
            spacing,
            channel_count: count,
            symbol_rate,
            slot_granularity: DEFAULT_SLOT_GRANULARITY,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_slot_granularity(mut self, granularity: f64) -> Result<Self> {
        self.slot_granularity = granularity;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TwinError::InvalidPlan(m));
        if self.channel_count == 0 {
            return bad("channel_count must be at least 1".into());
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return bad(format!("spacing must be positive, got {}", self.spacing));
        }
        if !(self.symbol_rate > 0.0) {
            return bad(format!("symbol rate must be positive, got {}", self.symbol_rate));
        }
        if self.symbol_rate > self.spacing {
            return bad(format!(
                "symbol rate {:.1} GBd exceeds spacing {:.1} GHz (carriers overlap)",
                self.symbol_rate / GHZ,
                self.spacing / GHZ
            ));
        }
        if !(self.slot_granularity > 0.0) {
            return bad("slot granularity must be positive".into());
        }
        let ratio = self.spacing / self.slot_granularity;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!(
                "spacing {:.3} GHz is not a multiple of the {:.3} GHz slot granularity",
                self.spacing / GHZ,
                self.slot_granularity / GHZ
            ));
        }
        if !(self.center_frequency - self.spacing * (self.channel_count as f64 - 1.0) / 2.0 > 0.0) {
            return bad("lowest channel frequency must be positive".into());
        }
        Ok(())
    }

    pub fn frequency(&self, index: usize) -> f64 {
        self.center_frequency + (index as f64 - (self.channel_count as f64 - 1.0) / 2.0) * self.spacing
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.channel_count).map(|i| self.frequency(i)).collect()
    }

    pub fn lowest_frequency(&self) -> f64 {
        self.frequency(0)
    }

    pub fn highest_frequency(&self) -> f64 {
        self.frequency(self.channel_count - 1)
    }

    /// Edge-to-edge span of the channel centers (zero for a single channel).
    pub fn band_span(&self) -> f64 {
        self.highest_frequency() - self.lowest_frequency()
    }

    pub fn slots_per_channel(&self) -> usize {
        (self.spacing / self.slot_granularity).round() as usize
    }

    /// Number of flexgrid slots covering the whole plan.
    pub fn slot_count(&self) -> usize {
        self.slots_per_channel() * self.channel_count
    }

    /// Slots `[start, end)` occupied by channel `index`.
    pub fn channel_slots(&self, index: usize) -> std::ops::Range<usize> {
        let n = self.slots_per_channel();
        index * n..(index + 1) * n
    }

    /// Index of the channel centered at `freq`, if any (1 MHz tolerance).
    pub fn index_of(&self, freq: f64) -> Option<usize> {
        let pos = (freq - self.lowest_frequency()) / self.spacing;
        let idx = pos.round();
        if idx < 0.0 || idx as usize >= self.channel_count {
            return None;
        }
        ((pos - idx).abs() * self.spacing < 1e6).then_some(idx as usize)
    }
}
