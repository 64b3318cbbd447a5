use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CharacterizationError, CharacterizationRecord};
use crate::topology::{LineState, PhyTopology, RoadmDescription};
use crate::twin::{Amplifier, ChannelPlan, OlsDescriptor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualLink {
    pub id: String,
    pub from: String,
    pub to: String,
    pub span_ids: Vec<String>,
}

/// Nodes and lines as discovered by the network operating system, without
/// any physical-layer detail.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VirtualTopology {
    pub nodes: Vec<String>,
    pub links: Vec<VirtualLink>,
}

/// Static, installation-time data about one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineDevices {
    pub booster: Amplifier,
    pub inline_amplifiers: Vec<Amplifier>,
    pub preamp: Amplifier,
    /// Per-span chromatic dispersion, ps/nm/km, measured before installation.
    pub dispersion: Vec<f64>,
    /// Per-span nonlinear coefficient, 1/W/km.
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDescriptions {
    pub plan: ChannelPlan,
    pub roadms: Vec<RoadmDescription>,
    pub lines: BTreeMap<String, LineDevices>,
    pub trx_launch_dbm: f64,
}

/// Joins characterization records, the virtual topology and device data into
/// a twin-ready topology. Every line starts NOT_READY.
pub fn build_phy_topology(
    records: &[CharacterizationRecord],
    virtual_topology: &VirtualTopology,
    devices: &DeviceDescriptions,
) -> Result<PhyTopology, CharacterizationError> {
    let by_span: BTreeMap<&str, &CharacterizationRecord> = records.iter().map(|r| (r.span_id.as_str(), r)).collect();
    let mut lines = Vec::with_capacity(virtual_topology.links.len());
    let mut line_state = BTreeMap::new();
    for link in &virtual_topology.links {
        for node in [&link.from, &link.to] {
            let known = virtual_topology.nodes.contains(node) && devices.roadms.iter().any(|r| &r.id == node);
            if !known {
                return Err(CharacterizationError::DanglingEndpoint {
                    line: link.id.clone(),
                    node: node.clone(),
                });
            }
        }
        let dev = devices
            .lines
            .get(&link.id)
            .ok_or_else(|| CharacterizationError::MissingDevices(link.id.clone()))?;
        let n = link.span_ids.len();
        if dev.dispersion.len() != n || dev.gamma.len() != n || dev.inline_amplifiers.len() + 1 != n.max(1) {
            return Err(CharacterizationError::InvalidLine {
                line: link.id.clone(),
                reason: format!("device data does not match {n} spans"),
            });
        }
        let spans = link
            .span_ids
            .iter()
            .enumerate()
            .map(|(k, id)| {
                let rec = by_span
                    .get(id.as_str())
                    .ok_or_else(|| CharacterizationError::MissingRecord(id.clone()))?;
                let mut span = rec.fitted.clone();
                span.dispersion = dev.dispersion[k];
                span.gamma = dev.gamma[k];
                Ok(span)
            })
            .collect::<Result<Vec<_>, CharacterizationError>>()?;
        let ols = OlsDescriptor {
            id: link.id.clone(),
            from_roadm: link.from.clone(),
            to_roadm: link.to.clone(),
            booster: dev.booster.clone(),
            spans,
            inline_amplifiers: dev.inline_amplifiers.clone(),
            preamp: dev.preamp.clone(),
        };
        ols.validate(&devices.plan)
            .map_err(|e| CharacterizationError::InvalidLine {
                line: link.id.clone(),
                reason: e.to_string(),
            })?;
        line_state.insert(link.id.clone(), LineState::NotReady);
        lines.push(ols);
    }
    Ok(PhyTopology {
        plan: devices.plan.clone(),
        roadms: devices.roadms.clone(),
        lines,
        line_state,
        trx_launch_dbm: devices.trx_launch_dbm,
    })
}
