use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Lightpath, LightpathState, OoncError};
use crate::lpce::TrxType;
use crate::topology::{PhyPath, PhyTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LinkState {
    Up,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrxInfo {
    pub id: String,
    pub trx_type: TrxType,
    /// Lightpath (or foreign owner) using the transceiver.
    pub assigned_to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub id: String,
    pub trxs: Vec<TrxInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkInfo {
    pub id: String,
    pub a: String,
    pub b: String,
    pub ols_id: String,
    pub state: LinkState,
    /// Owner of each spectrum slot.
    pub occupancy: Vec<Option<String>>,
}

impl LinkInfo {
    pub fn other_end(&self, node: &str) -> Option<&str> {
        if self.a == node {
            Some(&self.b)
        } else if self.b == node {
            Some(&self.a)
        } else {
            None
        }
    }
}

/// Prefix for slot owners the controller did not place.
pub const FOREIGN: &str = "foreign:";

/// Controller's view of nodes, links and spectrum occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyAbstraction {
    pub channel_count: usize,
    pub slots_per_channel: usize,
    pub nodes: Vec<NodeInfo>,
    pub links: Vec<LinkInfo>,
}

impl TopologyAbstraction {
    pub fn slot_count(&self) -> usize {
        self.channel_count * self.slots_per_channel
    }

    pub fn slots(&self, channel: usize) -> std::ops::Range<usize> {
        channel * self.slots_per_channel..(channel + 1) * self.slots_per_channel
    }

    pub fn link(&self, id: &str) -> Result<&LinkInfo, OoncError> {
        self.links
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| OoncError::UnknownLink(id.into()))
    }

    pub fn link_mut(&mut self, id: &str) -> Result<&mut LinkInfo, OoncError> {
        self.links
            .iter_mut()
            .find(|l| l.id == id)
            .ok_or_else(|| OoncError::UnknownLink(id.into()))
    }

    pub fn node(&self, id: &str) -> Result<&NodeInfo, OoncError> {
        self.nodes
            .iter()
            .find(|n| n.id == id)
            .ok_or_else(|| OoncError::UnknownNode(id.into()))
    }

    pub fn node_mut(&mut self, id: &str) -> Result<&mut NodeInfo, OoncError> {
        self.nodes
            .iter_mut()
            .find(|n| n.id == id)
            .ok_or_else(|| OoncError::UnknownNode(id.into()))
    }

    pub fn channel_free(&self, link: &str, channel: usize) -> bool {
        match self.link(link) {
            Ok(l) => l.state == LinkState::Up && self.slots(channel).all(|s| l.occupancy[s].is_none()),
            Err(_) => false,
        }
    }

    pub fn occupy(&mut self, link: &str, channel: usize, owner: &str) -> Result<(), OoncError> {
        let range = self.slots(channel);
        let l = self.link_mut(link)?;
        if let Some(s) = range.clone().find(|&s| l.occupancy[s].is_some()) {
            return Err(OoncError::DoubleBooking {
                link: link.into(),
                slot: s,
            });
        }
        for s in range {
            l.occupancy[s] = Some(owner.to_string());
        }
        Ok(())
    }

    pub fn release_owner(&mut self, owner: &str) {
        for l in &mut self.links {
            for s in &mut l.occupancy {
                if s.as_deref() == Some(owner) {
                    *s = None;
                }
            }
        }
        for n in &mut self.nodes {
            for t in &mut n.trxs {
                if t.assigned_to.as_deref() == Some(owner) {
                    t.assigned_to = None;
                }
            }
        }
    }

    pub fn free_trxs(&self, node: &str) -> Vec<&TrxInfo> {
        self.node(node)
            .map(|n| n.trxs.iter().filter(|t| t.assigned_to.is_none()).collect())
            .unwrap_or_default()
    }

    pub fn occupied_slots(&self, link: &str) -> usize {
        self.link(link)
            .map(|l| l.occupancy.iter().filter(|s| s.is_some()).count())
            .unwrap_or(0)
    }

    /// Structural invariants against the controller's lightpath table.
    pub fn violations(&self, lightpaths: &[&Lightpath]) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.links {
            if l.occupancy.len() != self.slot_count() {
                out.push(format!(
                    "{}: occupancy has {} slots, expected {}",
                    l.id,
                    l.occupancy.len(),
                    self.slot_count()
                ));
            }
        }
        let mut claims: BTreeMap<(&str, usize), Vec<&str>> = BTreeMap::new();
        for lp in lightpaths.iter().filter(|lp| lp.state == LightpathState::Active) {
            for link in &lp.links {
                let Ok(info) = self.link(link) else {
                    out.push(format!("{} uses unknown link {link}", lp.id));
                    continue;
                };
                if info.state == LinkState::Failed {
                    out.push(format!("{} is ACTIVE on FAILED link {link}", lp.id));
                }
                for s in self.slots(lp.channel) {
                    claims.entry((link.as_str(), s)).or_default().push(&lp.id);
                    if info.occupancy.get(s).and_then(|o| o.as_deref()) != Some(lp.id.as_str()) {
                        out.push(format!("{link} slot {s} not held by {}", lp.id));
                    }
                }
            }
            for l in &self.links {
                for (s, owner) in l.occupancy.iter().enumerate() {
                    if owner.as_deref() == Some(lp.id.as_str())
                        && !(lp.links.contains(&l.id) && self.slots(lp.channel).contains(&s))
                    {
                        out.push(format!("{} holds {} slot {s} off its channel or path", lp.id, l.id));
                    }
                }
            }
        }
        for ((link, s), who) in claims {
            if who.len() > 1 {
                out.push(format!("{link} slot {s} booked by {who:?}"));
            }
        }
        let active: Vec<&str> = lightpaths
            .iter()
            .filter(|lp| lp.state == LightpathState::Active)
            .map(|lp| lp.id.as_str())
            .collect();
        for l in &self.links {
            for (s, owner) in l.occupancy.iter().enumerate() {
                if let Some(o) = owner {
                    if !o.starts_with(FOREIGN) && !active.contains(&o.as_str()) {
                        out.push(format!("{} slot {s} held by inactive {o}", l.id));
                    }
                }
            }
        }
        out
    }
}

/// Candidate path with the channels currently usable end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAvailability {
    pub path: PhyPath,
    pub available: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub src: String,
    pub dst: String,
    pub paths: Vec<PathAvailability>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingSpace {
    pub entries: Vec<RouteEntry>,
}

impl RoutingSpace {
    /// Every ordered node pair, paths over links that are up, channels
    /// restricted to `eligible` and free on every link of the path.
    pub fn build(
        abstraction: &TopologyAbstraction,
        phy: &PhyTopology,
        max_paths: usize,
        eligible: &[usize],
    ) -> Result<Self, OoncError> {
        let mut entries = Vec::new();
        for src in &abstraction.nodes {
            for dst in &abstraction.nodes {
                if src.id == dst.id {
                    continue;
                }
                entries.push(Self::entry_for(
                    abstraction,
                    phy,
                    &src.id,
                    &dst.id,
                    max_paths,
                    eligible,
                )?);
            }
        }
        Ok(RoutingSpace { entries })
    }

    pub fn entry_for(
        abstraction: &TopologyAbstraction,
        phy: &PhyTopology,
        src: &str,
        dst: &str,
        max_paths: usize,
        eligible: &[usize],
    ) -> Result<RouteEntry, OoncError> {
        let paths = phy
            .paths(src, dst, max_paths)?
            .into_iter()
            .filter(|p| {
                p.lines
                    .iter()
                    .all(|l| abstraction.link(l).map(|i| i.state == LinkState::Up).unwrap_or(false))
            })
            .map(|path| {
                let available = eligible
                    .iter()
                    .copied()
                    .filter(|&c| path.lines.iter().all(|l| abstraction.channel_free(l, c)))
                    .collect();
                PathAvailability { path, available }
            })
            .collect();
        Ok(RouteEntry {
            src: src.into(),
            dst: dst.into(),
            paths,
        })
    }

    pub fn entry(&self, src: &str, dst: &str) -> Option<&RouteEntry> {
        self.entries.iter().find(|e| e.src == src && e.dst == dst)
    }

    /// Per node pair: number of paths and of (path, channel) options.
    pub fn summary(&self) -> Vec<RouteSummary> {
        self.entries
            .iter()
            .map(|e| RouteSummary {
                src: e.src.clone(),
                dst: e.dst.clone(),
                paths: e.paths.iter().map(|p| (p.path.id.clone(), p.available.len())).collect(),
            })
            .collect()
    }

    /// Every channel listed as available is free on all links of its path.
    pub fn violations(&self, abstraction: &TopologyAbstraction) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.entries {
            for p in &e.paths {
                for &c in &p.available {
                    for l in &p.path.lines {
                        if !abstraction.channel_free(l, c) {
                            out.push(format!(
                                "{}->{} {} lists channel {c} busy on {l}",
                                e.src, e.dst, p.path.id
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSummary {
    pub src: String,
    pub dst: String,
    /// (path id, available channels)
    pub paths: Vec<(String, usize)>,
}
