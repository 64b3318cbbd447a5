//! Orchestrator: topology abstraction, routing space, RSA, lightpath
//! deployment, failure handling and best-effort recovery.
//!
//! Workflows run one at a time on `&mut Controller`; emulated time for
//! controller-side computation is charged to the data plane clock so that
//! stage durations are reproducible.

pub mod abstraction;
pub mod nos;
pub mod rsa;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use abstraction::{
    LinkInfo, LinkState, NodeInfo, PathAvailability, RouteEntry, RouteSummary, RoutingSpace, TopologyAbstraction,
    TrxInfo, FOREIGN,
};
pub use nos::{NosClient, NosOlc};
pub use rsa::{rsa, Candidate, PlannedLightpath, RsaPlan};

use crate::emu::{Command, CrossConnect, EmuError, Port, Query, SampleValue, TrxTuning};
use crate::lpce::{compute_path_formats, LpceConfig, LpceError, ModulationFormat, PathFormatMap, TrxB2BCurve};
use crate::topology::{LineState, PhyPath, PhyTopology, TopologyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OoncError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error("network not provisioned yet")]
    NotProvisioned,
    #[error("provisioning failed: {0}")]
    ProvisioningFailed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{link} slot {slot} is already booked")]
    DoubleBooking { link: String, slot: usize },
    #[error("channel {channel} is taken on {link}")]
    SlotConflict { link: String, channel: usize },
    #[error("link {0} is down")]
    LinkDown(String),
    #[error("no free transceiver at {0}")]
    NoTransceiver(String),
    #[error("device: {0}")]
    Device(#[from] EmuError),
    #[error("L-PCE: {0}")]
    Lpce(#[from] LpceError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestState {
    Pending,
    Satisfied,
    Partial,
    Failed,
    Released,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficRequest {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub rate_gbps: u32,
    pub state: RequestState,
    /// Requested rate not carried by active lightpaths.
    pub shortfall_gbps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LightpathState {
    Planned,
    Active,
    Failed,
    Released,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lightpath {
    pub id: String,
    pub request_id: String,
    pub path_id: String,
    pub links: Vec<String>,
    pub roadms: Vec<String>,
    pub channel: usize,
    pub format: ModulationFormat,
    pub state: LightpathState,
    pub src_trx: String,
    pub dst_trx: String,
    /// Twin GSNR at deployment, dB.
    pub predicted_gsnr_db: f64,
}

impl Lightpath {
    pub fn rate_gbps(&self) -> u32 {
        self.format.rate_gbps()
    }

    /// Cross-connect at every ROADM along the path.
    pub fn cross_connects(&self) -> Vec<(String, CrossConnect)> {
        let n = self.links.len();
        (0..=n)
            .map(|i| {
                let a = if i == 0 {
                    Port::Local(self.src_trx.clone())
                } else {
                    Port::Line(self.links[i - 1].clone())
                };
                let b = if i == n {
                    Port::Local(self.dst_trx.clone())
                } else {
                    Port::Line(self.links[i].clone())
                };
                (self.roadms[i].clone(), CrossConnect::new(self.channel, a, b))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeployOutcome {
    pub lightpath: Option<String>,
    pub path_id: String,
    pub channel: usize,
    pub format: ModulationFormat,
    pub error: Option<String>,
    pub replanned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub request: TrafficRequest,
    pub lightpaths: Vec<Lightpath>,
    pub outcomes: Vec<DeployOutcome>,
}

/// Emulated seconds per recovery stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDurations {
    pub topology_update: f64,
    pub lost_traffic_estimation: f64,
    pub lpce: f64,
    pub establishment: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub link: String,
    /// The link was already down; nothing was done.
    pub noop: bool,
    pub lost_gbps: u32,
    pub restored_gbps: u32,
    pub shortfall_gbps: u32,
    pub failed_lightpaths: Vec<String>,
    pub affected_requests: Vec<String>,
    pub new_lightpaths: Vec<Lightpath>,
    pub stages: StageDurations,
}

/// Emulated cost of controller-side computation, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComputeCosts {
    pub topology_update_s: f64,
    pub lost_traffic_s: f64,
    pub lost_traffic_per_lightpath_s: f64,
    pub lpce_per_path_s: f64,
    pub rsa_s: f64,
}

impl Default for ComputeCosts {
    fn default() -> Self {
        ComputeCosts {
            topology_update_s: 0.015,
            lost_traffic_s: 0.01,
            lost_traffic_per_lightpath_s: 0.002,
            lpce_per_path_s: 2.0,
            rsa_s: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub lpce: LpceConfig,
    /// Channels transceivers may be tuned to; all when absent.
    pub eligible_channels: Option<Vec<usize>>,
    pub polling_interval_s: f64,
    pub detect_by_interrupt: bool,
    pub detect_by_polling: bool,
    pub costs: ComputeCosts,
    pub time_scale: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            lpce: LpceConfig::default(),
            eligible_channels: None,
            polling_interval_s: 1.0,
            detect_by_interrupt: true,
            detect_by_polling: true,
            costs: ComputeCosts::default(),
            time_scale: 1.0,
        }
    }
}

pub struct Controller {
    nos: NosClient,
    phy: PhyTopology,
    curves: Vec<TrxB2BCurve>,
    config: ControllerConfig,
    abstraction: Option<TopologyAbstraction>,
    requests: BTreeMap<String, TrafficRequest>,
    lightpaths: BTreeMap<String, Lightpath>,
    next_request: usize,
    next_lightpath: usize,
    reported: BTreeSet<String>,
}

impl Controller {
    pub fn new(nos: NosClient, phy: PhyTopology, curves: Vec<TrxB2BCurve>, config: ControllerConfig) -> Self {
        Controller {
            nos,
            phy,
            curves,
            config,
            abstraction: None,
            requests: BTreeMap::new(),
            lightpaths: BTreeMap::new(),
            next_request: 0,
            next_lightpath: 0,
            reported: BTreeSet::new(),
        }
    }

    pub fn nos(&mut self) -> &mut NosClient {
        &mut self.nos
    }

    pub fn phy(&self) -> &PhyTopology {
        &self.phy
    }

    pub fn phy_mut(&mut self) -> &mut PhyTopology {
        &mut self.phy
    }

    pub fn curves(&self) -> &[TrxB2BCurve] {
        &self.curves
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn abstraction(&self) -> Option<&TopologyAbstraction> {
        self.abstraction.as_ref()
    }

    pub fn requests(&self) -> impl Iterator<Item = &TrafficRequest> {
        self.requests.values()
    }

    pub fn request(&self, id: &str) -> Option<&TrafficRequest> {
        self.requests.get(id)
    }

    pub fn lightpaths(&self) -> impl Iterator<Item = &Lightpath> {
        self.lightpaths.values()
    }

    pub fn active_lightpaths(&self) -> Vec<&Lightpath> {
        self.lightpaths
            .values()
            .filter(|l| l.state == LightpathState::Active)
            .collect()
    }

    pub fn lightpaths_of(&self, request: &str) -> Vec<&Lightpath> {
        self.lightpaths.values().filter(|l| l.request_id == request).collect()
    }

    fn eligible(&self) -> Vec<usize> {
        match &self.config.eligible_channels {
            Some(v) => v.iter().copied().filter(|&c| c < self.phy.plan.channel_count).collect(),
            None => (0..self.phy.plan.channel_count).collect(),
        }
    }

    fn abs(&self) -> Result<&TopologyAbstraction, OoncError> {
        self.abstraction.as_ref().ok_or(OoncError::NotProvisioned)
    }

    fn abs_mut(&mut self) -> Result<&mut TopologyAbstraction, OoncError> {
        self.abstraction.as_mut().ok_or(OoncError::NotProvisioned)
    }

    fn charge(&mut self, seconds: f64) -> Result<f64, OoncError> {
        Ok(self.nos.spend(seconds * self.config.time_scale)?)
    }

    fn note<T: Serialize + ?Sized>(&mut self, verb: &str, payload: &T) -> Result<(), OoncError> {
        let now = self.nos.now()?;
        self.nos.log().record(now, "oonc", verb, payload);
        Ok(())
    }

    /// Reads nodes, links, transceivers and spectrum occupancy from the
    /// devices and rebuilds the abstraction. Nothing changes if any device
    /// cannot be read.
    pub fn provision(&mut self) -> Result<RoutingSpace, OoncError> {
        let inv = self.nos.discover()?;
        let fail = |what: &str, e: EmuError| OoncError::ProvisioningFailed(format!("{what}: {e}"));
        let mut xcs = BTreeMap::new();
        let mut tunings: BTreeMap<String, Option<TrxTuning>> = BTreeMap::new();
        for n in &inv.nodes {
            let s = self.nos.poll(&n.id, Query::CrossConnects).map_err(|e| fail(&n.id, e))?;
            if let SampleValue::CrossConnects(v) = s.value {
                xcs.insert(n.id.clone(), v);
            }
            for t in &n.trxs {
                let s = self.nos.poll(&t.id, Query::TrxStatus).map_err(|e| fail(&t.id, e))?;
                if let SampleValue::Trx(st) = s.value {
                    tunings.insert(t.id.clone(), st.tuning);
                }
            }
        }
        let mut down = BTreeSet::new();
        for l in &inv.links {
            let s = self.nos.poll(&l.id, Query::LineStatus).map_err(|e| fail(&l.id, e))?;
            if let SampleValue::Line(st) = s.value {
                if st.loss_of_signal || st.state == LineState::Failed {
                    down.insert(l.id.clone());
                }
            }
        }

        let active: Vec<&Lightpath> = self
            .lightpaths
            .values()
            .filter(|l| l.state == LightpathState::Active)
            .collect();
        let spc = self.phy.plan.slots_per_channel();
        let channels = self.phy.plan.channel_count;
        let mut abs = TopologyAbstraction {
            channel_count: channels,
            slots_per_channel: spc,
            nodes: inv
                .nodes
                .iter()
                .map(|n| NodeInfo {
                    id: n.id.clone(),
                    trxs: n
                        .trxs
                        .iter()
                        .map(|t| {
                            let ours = active.iter().find(|lp| lp.src_trx == t.id || lp.dst_trx == t.id);
                            let assigned_to = match (ours, tunings.get(&t.id).copied().flatten()) {
                                (Some(lp), _) => Some(lp.id.clone()),
                                (None, Some(_)) => Some(format!("{FOREIGN}{}", t.id)),
                                (None, None) => None,
                            };
                            TrxInfo {
                                id: t.id.clone(),
                                trx_type: t.trx_type,
                                assigned_to,
                            }
                        })
                        .collect(),
                })
                .collect(),
            links: inv
                .links
                .iter()
                .map(|l| LinkInfo {
                    id: l.id.clone(),
                    a: l.from.clone(),
                    b: l.to.clone(),
                    ols_id: l.id.clone(),
                    state: if down.contains(&l.id) {
                        LinkState::Failed
                    } else {
                        LinkState::Up
                    },
                    occupancy: vec![None; channels * spc],
                })
                .collect(),
        };
        for (node, list) in &xcs {
            for xc in list {
                for port in [&xc.a, &xc.b] {
                    let Port::Line(link) = port else { continue };
                    if xc.channel >= channels {
                        continue;
                    }
                    let owner = active
                        .iter()
                        .find(|lp| lp.channel == xc.channel && lp.links.contains(link))
                        .map(|lp| lp.id.clone())
                        .unwrap_or_else(|| format!("{FOREIGN}{node}"));
                    let range = abs.slots(xc.channel);
                    if let Ok(info) = abs.link_mut(link) {
                        for s in range {
                            if info.occupancy[s].is_none() {
                                info.occupancy[s] = Some(owner.clone());
                            }
                        }
                    }
                }
            }
        }
        for l in &abs.links {
            let target = if l.state == LinkState::Failed {
                Some(LineState::Failed)
            } else if self.phy.state(&l.id) == LineState::Failed {
                Some(LineState::Ready)
            } else {
                None
            };
            if let Some(s) = target {
                self.phy.set_state(&l.id, s)?;
            }
        }
        self.abstraction = Some(abs);
        self.note("provision", &inv)?;
        self.routing_space()
    }

    /// Replaces the controller's view with a previously exported one. Its
    /// links must be the lines of the physical topology and its spectrum
    /// grid must match the channel plan.
    pub fn import_abstraction(&mut self, abs: TopologyAbstraction) -> Result<RoutingSpace, OoncError> {
        if abs.channel_count != self.phy.plan.channel_count
            || abs.slots_per_channel != self.phy.plan.slots_per_channel()
        {
            return Err(OoncError::InvalidRequest(format!(
                "spectrum grid {}x{} does not match the channel plan",
                abs.channel_count, abs.slots_per_channel
            )));
        }
        for l in &abs.links {
            let line = self.phy.line(&l.id).map_err(|_| OoncError::UnknownLink(l.id.clone()))?;
            if (line.from_roadm.as_str(), line.to_roadm.as_str()) != (l.a.as_str(), l.b.as_str()) {
                return Err(OoncError::InvalidRequest(format!(
                    "{} endpoints differ from the line",
                    l.id
                )));
            }
            if l.occupancy.len() != abs.slot_count() {
                return Err(OoncError::InvalidRequest(format!(
                    "{} occupancy has {} slots",
                    l.id,
                    l.occupancy.len()
                )));
            }
            if !abs.nodes.iter().any(|n| n.id == l.a) || !abs.nodes.iter().any(|n| n.id == l.b) {
                return Err(OoncError::UnknownNode(format!("{} endpoint", l.id)));
            }
        }
        if let Some(missing) = self
            .phy
            .lines
            .iter()
            .find(|line| !abs.links.iter().any(|l| l.id == line.id))
        {
            return Err(OoncError::UnknownLink(missing.id.clone()));
        }
        self.abstraction = Some(abs);
        self.note("provision", &"import")?;
        self.routing_space()
    }

    pub fn routing_space(&self) -> Result<RoutingSpace, OoncError> {
        RoutingSpace::build(self.abs()?, &self.phy, self.config.lpce.max_paths, &self.eligible())
    }

    /// New traffic intent, served at once.
    pub fn submit_request(&mut self, src: &str, dst: &str, rate_gbps: u32) -> Result<RequestOutcome, OoncError> {
        let abs = self.abs()?;
        abs.node(src)?;
        abs.node(dst)?;
        if src == dst {
            return Err(OoncError::InvalidRequest("source and destination coincide".into()));
        }
        if rate_gbps == 0 || !rate_gbps.is_multiple_of(100) {
            return Err(OoncError::InvalidRequest(format!(
                "rate {rate_gbps}G is not a positive multiple of 100G"
            )));
        }
        self.next_request += 1;
        let id = format!("req-{:04}", self.next_request);
        let req = TrafficRequest {
            id: id.clone(),
            src: src.into(),
            dst: dst.into(),
            rate_gbps,
            state: RequestState::Pending,
            shortfall_gbps: rate_gbps,
        };
        self.note("request", &req)?;
        self.requests.insert(id.clone(), req);
        let maps = self.run_lpce(src, dst)?;
        let (lightpaths, outcomes) = self.establish(&id, &maps)?;
        Ok(RequestOutcome {
            request: self.requests[&id].clone(),
            lightpaths,
            outcomes,
        })
    }

    fn run_lpce(&mut self, src: &str, dst: &str) -> Result<Vec<PathFormatMap>, OoncError> {
        let maps = match compute_path_formats(src, dst, &self.phy, &self.curves, &self.config.lpce) {
            Ok(m) => m,
            Err(LpceError::NoPath { .. }) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        self.charge(self.config.costs.lpce_per_path_s * maps.len() as f64)?;
        let summary: Vec<(&str, usize)> = maps
            .iter()
            .map(|m| {
                (
                    m.path_id(),
                    m.channels.iter().filter(|c| c.max_format.is_some()).count(),
                )
            })
            .collect();
        self.note("lpce", &summary)?;
        Ok(maps)
    }

    fn run_rsa(&mut self, request: &str, maps: &[PathFormatMap]) -> Result<RsaPlan, OoncError> {
        let req = self
            .requests
            .get(request)
            .ok_or_else(|| OoncError::UnknownRequest(request.into()))?
            .clone();
        let abs = self.abs()?;
        let entry = RoutingSpace::entry_for(
            abs,
            &self.phy,
            &req.src,
            &req.dst,
            self.config.lpce.max_paths,
            &self.eligible(),
        )?;
        let budget = abs.free_trxs(&req.src).len().min(abs.free_trxs(&req.dst).len());
        let plan = rsa(req.shortfall_gbps, maps, &entry, budget);
        self.charge(self.config.costs.rsa_s)?;
        self.note("rsa", &plan)?;
        Ok(plan)
    }

    /// RSA then deployment for the request's current shortfall; a plan hit
    /// by a spectrum conflict is re-planned once on refreshed occupancy.
    fn establish(
        &mut self,
        request: &str,
        maps: &[PathFormatMap],
    ) -> Result<(Vec<Lightpath>, Vec<DeployOutcome>), OoncError> {
        let mut created = Vec::new();
        let mut outcomes = Vec::new();
        let mut replanned = false;
        loop {
            let plan = self.run_rsa(request, maps)?;
            let mut conflict = false;
            for p in &plan.lightpaths {
                let mut outcome = DeployOutcome {
                    lightpath: None,
                    path_id: p.path.id.clone(),
                    channel: p.channel,
                    format: p.format,
                    error: None,
                    replanned,
                };
                match self.deploy_one(request, p) {
                    Ok(lp) => {
                        outcome.lightpath = Some(lp.id.clone());
                        created.push(lp);
                    }
                    Err(e) => {
                        conflict |= matches!(e, OoncError::SlotConflict { .. });
                        outcome.error = Some(e.to_string());
                    }
                }
                outcomes.push(outcome);
            }
            self.update_request(request);
            if !conflict || replanned {
                break;
            }
            replanned = true;
            self.provision()?;
        }
        Ok((created, outcomes))
    }

    fn deploy_one(&mut self, request: &str, p: &PlannedLightpath) -> Result<Lightpath, OoncError> {
        let abs = self.abs()?;
        for l in &p.path.lines {
            if abs.link(l)?.state != LinkState::Up {
                return Err(OoncError::LinkDown(l.clone()));
            }
            if !abs.channel_free(l, p.channel) {
                return Err(OoncError::SlotConflict {
                    link: l.clone(),
                    channel: p.channel,
                });
            }
        }
        let src = p.path.roadms.first().cloned().unwrap_or_default();
        let dst = p.path.roadms.last().cloned().unwrap_or_default();
        let src_trx = abs
            .free_trxs(&src)
            .first()
            .map(|t| t.id.clone())
            .ok_or_else(|| OoncError::NoTransceiver(src.clone()))?;
        let dst_trx = abs
            .free_trxs(&dst)
            .first()
            .map(|t| t.id.clone())
            .ok_or_else(|| OoncError::NoTransceiver(dst.clone()))?;
        self.next_lightpath += 1;
        let mut lp = Lightpath {
            id: format!("lp-{:04}", self.next_lightpath),
            request_id: request.into(),
            path_id: p.path.id.clone(),
            links: p.path.lines.clone(),
            roadms: p.path.roadms.clone(),
            channel: p.channel,
            format: p.format,
            state: LightpathState::Planned,
            src_trx,
            dst_trx,
            predicted_gsnr_db: f64::NAN,
        };
        self.note("deploy", &lp)?;

        let mut done: Vec<(String, Command)> = Vec::new();
        let mut steps: Vec<(String, Command, Command)> = Vec::new();
        for trx in [&lp.src_trx, &lp.dst_trx] {
            steps.push((
                trx.clone(),
                Command::Tune {
                    format: lp.format,
                    channel: lp.channel,
                },
                Command::Release,
            ));
        }
        for (node, xc) in lp.cross_connects() {
            steps.push((
                node,
                Command::Connect {
                    cross_connect: xc.clone(),
                },
                Command::Disconnect { cross_connect: xc },
            ));
        }
        for (device, apply, undo) in steps {
            if let Err(e) = self.nos.configure(&device, apply) {
                for (d, u) in done.into_iter().rev() {
                    let _ = self.nos.configure(&d, u);
                }
                self.note("rollback", &lp)?;
                return Err(match e {
                    EmuError::Conflict { .. } => OoncError::SlotConflict {
                        link: lp.links.first().cloned().unwrap_or_default(),
                        channel: lp.channel,
                    },
                    other => other.into(),
                });
            }
            done.push((device, undo));
        }

        let path = PhyPath {
            id: lp.path_id.clone(),
            lines: lp.links.clone(),
            roadms: lp.roadms.clone(),
            length_km: p.path.length_km,
        };
        lp.predicted_gsnr_db = self.phy.path_gsnr(&path).map(|g| g[lp.channel]).unwrap_or(f64::NAN);
        let abs = self.abs_mut()?;
        for l in &lp.links {
            abs.occupy(l, lp.channel, &lp.id)?;
        }
        for (node, trx) in [
            (&lp.roadms[0], &lp.src_trx),
            (lp.roadms.last().expect("path"), &lp.dst_trx),
        ] {
            if let Some(t) = abs.node_mut(node)?.trxs.iter_mut().find(|t| &t.id == trx) {
                t.assigned_to = Some(lp.id.clone());
            }
        }
        lp.state = LightpathState::Active;
        self.lightpaths.insert(lp.id.clone(), lp.clone());
        Ok(lp)
    }

    /// Best-effort teardown on the devices, then release in the abstraction.
    fn teardown(&mut self, lp_id: &str, state: LightpathState) -> Result<(), OoncError> {
        let Some(lp) = self.lightpaths.get(lp_id).cloned() else {
            return Err(OoncError::UnknownRequest(lp_id.into()));
        };
        for (node, xc) in lp.cross_connects() {
            let _ = self.nos.configure(&node, Command::Disconnect { cross_connect: xc });
        }
        for trx in [&lp.src_trx, &lp.dst_trx] {
            let _ = self.nos.configure(trx, Command::Release);
        }
        self.abs_mut()?.release_owner(lp_id);
        if let Some(l) = self.lightpaths.get_mut(lp_id) {
            l.state = state;
        }
        Ok(())
    }

    fn update_request(&mut self, id: &str) {
        let carried: u32 = self
            .lightpaths
            .values()
            .filter(|l| l.request_id == id && l.state == LightpathState::Active)
            .map(|l| l.rate_gbps())
            .sum();
        if let Some(r) = self.requests.get_mut(id) {
            if r.state == RequestState::Released {
                return;
            }
            r.shortfall_gbps = r.rate_gbps.saturating_sub(carried);
            r.state = if carried >= r.rate_gbps {
                RequestState::Satisfied
            } else if carried > 0 {
                RequestState::Partial
            } else {
                RequestState::Failed
            };
        }
    }

    pub fn release_request(&mut self, id: &str) -> Result<(), OoncError> {
        if !self.requests.contains_key(id) {
            return Err(OoncError::UnknownRequest(id.into()));
        }
        let lps: Vec<String> = self
            .lightpaths
            .values()
            .filter(|l| l.request_id == id && l.state == LightpathState::Active)
            .map(|l| l.id.clone())
            .collect();
        for lp in lps {
            self.teardown(&lp, LightpathState::Released)?;
        }
        let r = self.requests.get_mut(id).expect("checked");
        r.state = RequestState::Released;
        r.shortfall_gbps = 0;
        let r = r.clone();
        self.note("release", &r)
    }

    /// Polls for hard failures for up to `intervals` polling periods and
    /// returns each newly failed link once.
    pub fn detect_failures(&mut self, intervals: usize) -> Result<Vec<String>, OoncError> {
        for _ in 0..intervals {
            self.nos.spend(self.config.polling_interval_s)?;
            let mut found = BTreeSet::new();
            if self.config.detect_by_interrupt {
                for irq in self.nos.take_interrupts()? {
                    found.insert(irq.link);
                }
            }
            if self.config.detect_by_polling {
                let up: Vec<String> = self
                    .abs()?
                    .links
                    .iter()
                    .filter(|l| l.state == LinkState::Up)
                    .map(|l| l.id.clone())
                    .collect();
                for l in up {
                    if let Ok(s) = self.nos.poll(&l, Query::LineStatus) {
                        if let SampleValue::Line(st) = s.value {
                            if st.loss_of_signal || st.state == LineState::Failed {
                                found.insert(l);
                            }
                        }
                    }
                }
                let trxs: Vec<String> = self.active_lightpaths().iter().map(|l| l.dst_trx.clone()).collect();
                for t in trxs {
                    let _ = self.nos.poll(&t, Query::TrxStatus);
                }
            }
            let abs = self.abs()?;
            let fresh: Vec<String> = found
                .into_iter()
                .filter(|l| !self.reported.contains(l))
                .filter(|l| abs.link(l).map(|i| i.state == LinkState::Up).unwrap_or(false))
                .collect();
            if !fresh.is_empty() {
                for l in &fresh {
                    self.reported.insert(l.clone());
                    let now = self.nos.now()?;
                    self.nos.log().record(now, "nos", "link_failure", l);
                }
                return Ok(fresh);
            }
        }
        Ok(Vec::new())
    }

    /// Marks the link failed, tears down what it carried and re-serves the
    /// lost traffic on the remaining topology.
    pub fn handle_failure(&mut self, link: &str) -> Result<RecoveryReport, OoncError> {
        let info = self.abs()?.link(link)?;
        if info.state == LinkState::Failed {
            return Ok(RecoveryReport {
                link: link.into(),
                noop: true,
                lost_gbps: 0,
                restored_gbps: 0,
                shortfall_gbps: 0,
                failed_lightpaths: Vec::new(),
                affected_requests: Vec::new(),
                new_lightpaths: Vec::new(),
                stages: StageDurations::default(),
            });
        }
        self.reported.insert(link.to_string());
        let t0 = self.nos.now()?;

        self.abs_mut()?.link_mut(link)?.state = LinkState::Failed;
        self.phy.set_state(link, LineState::Failed)?;
        self.charge(self.config.costs.topology_update_s)?;
        self.note("topology_update", link)?;
        let t1 = self.nos.now()?;

        let hit: Vec<Lightpath> = self
            .lightpaths
            .values()
            .filter(|l| l.state == LightpathState::Active && l.links.iter().any(|x| x == link))
            .cloned()
            .collect();
        let lost_gbps: u32 = hit.iter().map(|l| l.rate_gbps()).sum();
        let mut affected: Vec<String> = hit.iter().map(|l| l.request_id.clone()).collect();
        affected.sort();
        affected.dedup();
        for lp in &hit {
            if let Some(l) = self.lightpaths.get_mut(&lp.id) {
                l.state = LightpathState::Failed;
            }
        }
        for r in &affected {
            self.update_request(r);
        }
        self.charge(
            self.config.costs.lost_traffic_s + self.config.costs.lost_traffic_per_lightpath_s * hit.len() as f64,
        )?;
        self.note("lost_traffic_estimation", &(lost_gbps, &affected))?;
        let t2 = self.nos.now()?;

        let mut maps = Vec::new();
        for r in &affected {
            let req = self.requests[r].clone();
            maps.push(self.run_lpce(&req.src, &req.dst)?);
        }
        let t3 = self.nos.now()?;

        let mut new_lightpaths = Vec::new();
        if !affected.is_empty() {
            self.note("establish", &affected)?;
        }
        for lp in &hit {
            self.teardown(&lp.id, LightpathState::Failed)?;
        }
        for (r, m) in affected.iter().zip(&maps) {
            let (created, _) = self.establish(r, m)?;
            new_lightpaths.extend(created);
        }
        let t4 = self.nos.now()?;

        let restored_gbps = new_lightpaths.iter().map(|l| l.rate_gbps()).sum();
        let shortfall_gbps = affected.iter().map(|r| self.requests[r].shortfall_gbps).sum();
        Ok(RecoveryReport {
            link: link.into(),
            noop: false,
            lost_gbps,
            restored_gbps,
            shortfall_gbps,
            failed_lightpaths: hit.into_iter().map(|l| l.id).collect(),
            affected_requests: affected,
            new_lightpaths,
            stages: StageDurations {
                topology_update: t1 - t0,
                lost_traffic_estimation: t2 - t1,
                lpce: t3 - t2,
                establishment: t4 - t3,
                total: t4 - t0,
            },
        })
    }

    /// The fiber was spliced: the link is usable again. Traffic is not
    /// moved back.
    pub fn handle_repair(&mut self, link: &str) -> Result<(), OoncError> {
        self.abs()?.link(link)?;
        self.nos.configure(
            link,
            Command::SetLineState {
                state: LineState::Ready,
            },
        )?;
        self.abs_mut()?.link_mut(link)?.state = LinkState::Up;
        self.phy.set_state(link, LineState::Ready)?;
        self.reported.remove(link);
        self.note("link_repair", link)
    }

    /// Differences between the controller's view and device state.
    pub fn reconcile(&mut self) -> Result<Vec<String>, OoncError> {
        let mut out = Vec::new();
        let abs = self.abs()?.clone();
        let active: Vec<Lightpath> = self.active_lightpaths().into_iter().cloned().collect();
        for n in &abs.nodes {
            let s = self.nos.poll(&n.id, Query::CrossConnects)?;
            let SampleValue::CrossConnects(actual) = s.value else {
                continue;
            };
            let expected: Vec<CrossConnect> = active
                .iter()
                .flat_map(|lp| lp.cross_connects())
                .filter(|(node, _)| node == &n.id)
                .map(|(_, xc)| xc)
                .collect();
            let ours: Vec<&CrossConnect> = actual
                .iter()
                .filter(|x| !matches!(x.a, Port::External(_)) && !matches!(x.b, Port::External(_)))
                .collect();
            for e in &expected {
                if !ours.iter().any(|a| a.same_as(e)) {
                    out.push(format!("{}: missing {e:?}", n.id));
                }
            }
            for a in ours {
                if !expected.iter().any(|e| e.same_as(a)) {
                    out.push(format!("{}: unexpected {a:?}", n.id));
                }
            }
            for t in &n.trxs {
                if t.assigned_to.as_deref().is_some_and(|o| o.starts_with(FOREIGN)) {
                    continue;
                }
                let s = self.nos.poll(&t.id, Query::TrxStatus)?;
                let SampleValue::Trx(st) = s.value else { continue };
                let want = active
                    .iter()
                    .find(|lp| lp.src_trx == t.id || lp.dst_trx == t.id)
                    .map(|lp| TrxTuning {
                        format: lp.format,
                        channel: lp.channel,
                    });
                if st.tuning != want {
                    out.push(format!("{}: tuned {:?}, expected {want:?}", t.id, st.tuning));
                }
            }
        }
        for line in self.phy.lines.clone() {
            for amp in line.amplifiers() {
                let s = self.nos.poll(
                    &line.id,
                    Query::AmplifierSetting {
                        amplifier: amp.id.clone(),
                    },
                )?;
                if let SampleValue::Amplifier(p) = s.value {
                    if p != amp.setting {
                        out.push(format!("{}/{}: device {p:?}, twin {:?}", line.id, amp.id, amp.setting));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Booking, continuity, failed-link and conservation invariants.
    pub fn invariant_violations(&self) -> Vec<String> {
        let Some(abs) = &self.abstraction else {
            return Vec::new();
        };
        let lps: Vec<&Lightpath> = self.lightpaths.values().collect();
        let mut out = abs.violations(&lps);
        if let Ok(space) = self.routing_space() {
            out.extend(space.violations(abs));
        }
        for lp in lps.iter().filter(|l| l.state == LightpathState::Active) {
            if lp.roadms.len() != lp.links.len() + 1 {
                out.push(format!(
                    "{} has {} nodes for {} links",
                    lp.id,
                    lp.roadms.len(),
                    lp.links.len()
                ));
            }
        }
        for r in self.requests.values().filter(|r| r.state != RequestState::Released) {
            let carried: u32 = lps
                .iter()
                .filter(|l| l.request_id == r.id && l.state == LightpathState::Active)
                .map(|l| l.rate_gbps())
                .sum();
            if r.rate_gbps > carried + r.shortfall_gbps {
                out.push(format!(
                    "{}: {}G requested, {carried}G carried, {}G shortfall",
                    r.id, r.rate_gbps, r.shortfall_gbps
                ));
            }
        }
        out
    }
}
