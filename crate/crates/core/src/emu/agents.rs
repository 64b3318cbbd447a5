//! Device agents. Each one owns its own state and is only reached through
//! the emulator's message dispatch.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmuError;
use crate::lpce::{ModulationFormat, TrxType};
use crate::topology::LineState;
use crate::twin::{EdfaMode, EdfaOperatingPoint, OlsDescriptor};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "port", content = "id", rename_all = "snake_case")]
pub enum Port {
    Line(String),
    /// Add/drop port wired to a local transceiver.
    Local(String),
    /// Channel sourced outside the controlled network.
    External(String),
}

/// Bidirectional switching of one channel between two ports.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CrossConnect {
    pub channel: usize,
    pub a: Port,
    pub b: Port,
}

impl CrossConnect {
    pub fn new(channel: usize, a: Port, b: Port) -> Self {
        CrossConnect { channel, a, b }
    }

    pub fn touches(&self, port: &Port) -> bool {
        &self.a == port || &self.b == port
    }

    pub fn other(&self, port: &Port) -> Option<&Port> {
        if &self.a == port {
            Some(&self.b)
        } else if &self.b == port {
            Some(&self.a)
        } else {
            None
        }
    }

    /// Same connection regardless of port order.
    pub fn same_as(&self, other: &CrossConnect) -> bool {
        self.channel == other.channel
            && ((self.a == other.a && self.b == other.b) || (self.a == other.b && self.b == other.a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrxTuning {
    pub format: ModulationFormat,
    pub channel: usize,
}

#[derive(Debug, Clone)]
pub struct RoadmAgent {
    pub id: String,
    pub online: bool,
    pub lines: Vec<String>,
    pub trxs: Vec<String>,
    pub cross_connects: Vec<CrossConnect>,
}

impl RoadmAgent {
    fn port_known(&self, port: &Port) -> bool {
        match port {
            Port::Line(l) => self.lines.contains(l),
            Port::Local(t) => self.trxs.contains(t),
            Port::External(_) => true,
        }
    }

    pub fn connect(&mut self, xc: CrossConnect) -> Result<(), EmuError> {
        if self.cross_connects.iter().any(|c| c.same_as(&xc)) {
            return Ok(());
        }
        for port in [&xc.a, &xc.b] {
            if !self.port_known(port) {
                return Err(EmuError::Rejected {
                    device: self.id.clone(),
                    reason: format!("no port {port:?}"),
                });
            }
        }
        if xc.a == xc.b {
            return Err(EmuError::Rejected {
                device: self.id.clone(),
                reason: "cross-connect loops back on one port".into(),
            });
        }
        for port in [&xc.a, &xc.b] {
            let clash = self
                .cross_connects
                .iter()
                .find(|c| c.touches(port) && (c.channel == xc.channel || matches!(port, Port::Local(_))));
            if let Some(c) = clash {
                return Err(EmuError::Conflict {
                    device: self.id.clone(),
                    reason: format!("channel {} on {port:?} already used by {c:?}", xc.channel),
                });
            }
        }
        self.cross_connects.push(xc);
        Ok(())
    }

    pub fn disconnect(&mut self, xc: &CrossConnect) -> Result<(), EmuError> {
        let before = self.cross_connects.len();
        self.cross_connects.retain(|c| !c.same_as(xc));
        if self.cross_connects.len() == before {
            return Err(EmuError::Rejected {
                device: self.id.clone(),
                reason: format!("no cross-connect {xc:?}"),
            });
        }
        Ok(())
    }

    /// Cross-connect carrying `channel` through `port`, if any.
    pub fn find(&self, port: &Port, channel: usize) -> Option<&CrossConnect> {
        self.cross_connects
            .iter()
            .find(|c| c.channel == channel && c.touches(port))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerReading {
    pub value: f64,
    /// End of the averaging window, emulated seconds.
    pub window_end: f64,
}

#[derive(Debug, Clone)]
pub struct TrxAgent {
    pub id: String,
    pub node: String,
    pub trx_type: TrxType,
    pub online: bool,
    pub tuning: Option<TrxTuning>,
    /// Bumped on every retune so stale window events are dropped.
    pub generation: u64,
    pub last_ber: Option<BerReading>,
    /// Fault hook: refuse the next tuning commands.
    pub refuse_tuning: bool,
    pub rng: ChaCha8Rng,
}

impl TrxAgent {
    pub fn tune(&mut self, format: ModulationFormat, channel: usize, channels: usize) -> Result<(), EmuError> {
        if self.refuse_tuning {
            return Err(EmuError::Rejected {
                device: self.id.clone(),
                reason: format!("{} not accepted", format.name()),
            });
        }
        if channel >= channels {
            return Err(EmuError::Rejected {
                device: self.id.clone(),
                reason: format!("channel {channel} outside the {channels}-channel grid"),
            });
        }
        self.tuning = Some(TrxTuning { format, channel });
        self.generation += 1;
        self.last_ber = None;
        Ok(())
    }

    pub fn release(&mut self) {
        self.tuning = None;
        self.generation += 1;
        self.last_ber = None;
    }
}

#[derive(Debug, Clone)]
pub struct OlcAgent {
    pub ols: OlsDescriptor,
    pub state: LineState,
    pub online: bool,
    /// Span holding the fiber cut, if any.
    pub cut: Option<usize>,
    pub rng: ChaCha8Rng,
}

impl OlcAgent {
    pub fn id(&self) -> &str {
        &self.ols.id
    }

    pub fn setting(&self, amplifier: &str) -> Result<EdfaOperatingPoint, EmuError> {
        self.ols
            .amplifiers()
            .into_iter()
            .find(|a| a.id == amplifier)
            .map(|a| a.setting)
            .ok_or_else(|| EmuError::UnknownDevice(format!("{}/{amplifier}", self.ols.id)))
    }

    pub fn set_amplifier(&mut self, amplifier: &str, setting: EdfaOperatingPoint) -> Result<(), EmuError> {
        let line = self.ols.id.clone();
        let amp = self
            .ols
            .amplifiers_mut()
            .into_iter()
            .find(|a| a.id == amplifier)
            .ok_or_else(|| EmuError::UnknownDevice(format!("{line}/{amplifier}")))?;
        let limits = &amp.model.limits;
        let check = match setting.mode {
            EdfaMode::ConstantGain => limits
                .check_gain(setting.gain_db)
                .and(limits.check_tilt(setting.tilt_db)),
            EdfaMode::ConstantOutputPower => limits
                .check_output(setting.output_power_dbm)
                .and(limits.check_tilt(setting.tilt_db)),
            EdfaMode::AseProbe => limits.check_output(setting.output_power_dbm),
        };
        check.map_err(|e| EmuError::Rejected {
            device: amplifier.to_string(),
            reason: e.to_string(),
        })?;
        amp.setting = setting;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roadm() -> RoadmAgent {
        RoadmAgent {
            id: "A".into(),
            online: true,
            lines: vec!["L1".into(), "L2".into()],
            trxs: vec!["t1".into(), "t2".into()],
            cross_connects: Vec::new(),
        }
    }

    #[test]
    fn channel_reuse_on_a_line_port_conflicts() {
        let mut r = roadm();
        r.connect(CrossConnect::new(3, Port::Local("t1".into()), Port::Line("L1".into())))
            .unwrap();
        let e = r
            .connect(CrossConnect::new(3, Port::Local("t2".into()), Port::Line("L1".into())))
            .unwrap_err();
        assert!(matches!(e, EmuError::Conflict { .. }));
        r.connect(CrossConnect::new(3, Port::Local("t2".into()), Port::Line("L2".into())))
            .unwrap();
    }

    #[test]
    fn a_transceiver_carries_one_connection() {
        let mut r = roadm();
        r.connect(CrossConnect::new(3, Port::Local("t1".into()), Port::Line("L1".into())))
            .unwrap();
        let e = r
            .connect(CrossConnect::new(4, Port::Local("t1".into()), Port::Line("L2".into())))
            .unwrap_err();
        assert!(matches!(e, EmuError::Conflict { .. }));
    }

    #[test]
    fn connect_is_idempotent_and_disconnect_is_order_free() {
        let mut r = roadm();
        let xc = CrossConnect::new(5, Port::Line("L1".into()), Port::Line("L2".into()));
        r.connect(xc.clone()).unwrap();
        r.connect(xc.clone()).unwrap();
        assert_eq!(r.cross_connects.len(), 1);
        r.disconnect(&CrossConnect::new(5, Port::Line("L2".into()), Port::Line("L1".into())))
            .unwrap();
        assert!(r.cross_connects.is_empty());
        assert!(r.disconnect(&xc).is_err());
    }

    #[test]
    fn unknown_ports_are_rejected() {
        let mut r = roadm();
        let e = r
            .connect(CrossConnect::new(1, Port::Line("L9".into()), Port::Local("t1".into())))
            .unwrap_err();
        assert!(matches!(e, EmuError::Rejected { .. }));
    }
}
