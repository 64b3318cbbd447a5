//! Emulated optical data plane: ROADM, transceiver and line-controller
//! agents backed by the ground-truth twin, with noisy telemetry, failure
//! injection and a discrete-event clock.

pub mod agents;
mod clock;
pub mod log;
pub mod wire;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use agents::{BerReading, CrossConnect, OlcAgent, Port, RoadmAgent, TrxAgent, TrxTuning};
pub use clock::Scheduler;
pub use log::{payload_digest, EventLog, LogRecord};
pub use wire::{
    serve_tcp, Command, InProcessTransport, Interrupt, Inventory, LineStatus, LinkInventory, NodeInventory, Query,
    Request, Response, SampleKind, SampleValue, TcpServer, TcpTransport, TelemetrySample, Transport, TrxInventory,
    TrxStatus,
};

use crate::characterization::{OtdrEvent, OtdrTrace};
use crate::control::MonitorPoint;
use crate::lpce::{B2BConfig, LpceError, ModulationFormat, TrxB2BCurve, TrxType};
use crate::topology::{LineState, PhyPath, PhyTopology, RoadmDescription};
use crate::twin::{ChannelPlan, OlsDescriptor, OlsTwin, PowerSpectrum, PropagationOptions};
use crate::units::{dbm_to_watt, watt_to_dbm};

/// OCM reading of a dark channel, dBm.
pub const DARK_DBM: f64 = -60.0;

/// BER reported on loss of signal.
pub const LOS_BER: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum EmuError {
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("device {0} is unreachable")]
    Unreachable(String),
    #[error("{device} rejected the command: {reason}")]
    Rejected { device: String, reason: String },
    #[error("{device} does not support {what}")]
    Unsupported { device: String, what: String },
    #[error("{device}: {reason}")]
    Conflict { device: String, reason: String },
    #[error("{device} has no {what} yet")]
    Unavailable { device: String, what: String },
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("link {0} is already cut")]
    AlreadyCut(String),
    #[error("invalid data plane: {0}")]
    Invalid(String),
    #[error("transport: {0}")]
    Transport(String),
}

/// Emulated seconds spent by devices on each kind of message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub message_s: f64,
    pub poll_s: f64,
    pub amplifier_s: f64,
    pub tune_s: f64,
    pub cross_connect_s: f64,
    pub otdr_s: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            message_s: 0.002,
            poll_s: 0.005,
            amplifier_s: 0.2,
            tune_s: 1.0,
            cross_connect_s: 0.25,
            otdr_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmuConfig {
    pub ocm_sigma_db: f64,
    pub otdr_sigma_db: f64,
    pub otdr_length_sigma_km: f64,
    pub ber_jitter_db: f64,
    pub ber_window_s: f64,
    /// Line controllers raise an interrupt on loss of signal.
    pub interrupts: bool,
    /// Per-channel level entering every booster (loader comb), dBm.
    pub line_input_dbm: f64,
    /// Multiplies every device cost.
    pub time_scale: f64,
    pub costs: CostModel,
}

impl Default for EmuConfig {
    fn default() -> Self {
        EmuConfig {
            ocm_sigma_db: 0.1,
            otdr_sigma_db: 0.05,
            otdr_length_sigma_km: 0.005,
            ber_jitter_db: 0.1,
            ber_window_s: 15.0,
            interrupts: true,
            line_input_dbm: -10.0,
            time_scale: 1.0,
            costs: CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrxSpec {
    pub id: String,
    pub node: String,
    pub trx_type: TrxType,
}

/// Channel lit by a third party across one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreexistingChannel {
    pub line: String,
    pub channel: usize,
}

/// Ground truth of the emulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPlaneSpec {
    pub plan: ChannelPlan,
    pub roadms: Vec<RoadmDescription>,
    pub lines: Vec<OlsDescriptor>,
    pub trxs: Vec<TrxSpec>,
    #[serde(default)]
    pub preexisting: Vec<PreexistingChannel>,
    pub b2b: B2BConfig,
    pub trx_launch_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    FiberCut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureInjection {
    pub link: String,
    pub kind: FailureKind,
    /// Activation time, emulated seconds.
    pub at: f64,
    /// Span holding the cut; the first one when absent.
    #[serde(default)]
    pub span: Option<usize>,
}

/// Route a transceiver's signal takes through the cross-connects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPath {
    pub lines: Vec<String>,
    pub roadms: Vec<String>,
    pub far_end: String,
    pub tuning: TrxTuning,
}

#[derive(Debug, Clone)]
enum EmuEvent {
    BerWindow { trx: String, generation: u64 },
    Activate(FailureInjection),
}

pub type SharedEmulator = Arc<Mutex<Emulator>>;

/// Forward B2B curve applied to a (jittered) GSNR, floored at the
/// receiver's reporting limit.
pub fn emulate_ber(
    gsnr_db: f64,
    format: ModulationFormat,
    curve: &TrxB2BCurve,
    jitter_db: f64,
) -> Result<f64, LpceError> {
    Ok(curve.ber(format, gsnr_db + jitter_db)?.max(curve.ber_floor))
}

fn derive_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let d = h.finalize();
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(d[..8].try_into().expect("8 bytes")))
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

pub struct Emulator {
    plan: ChannelPlan,
    config: EmuConfig,
    clock: Scheduler<EmuEvent>,
    roadm_desc: Vec<RoadmDescription>,
    roadms: BTreeMap<String, RoadmAgent>,
    trxs: BTreeMap<String, TrxAgent>,
    olcs: BTreeMap<String, OlcAgent>,
    curves: BTreeMap<TrxType, TrxB2BCurve>,
    trx_launch_dbm: f64,
    pending_cuts: BTreeSet<String>,
    outbox: Vec<Interrupt>,
    gsnr_cache: BTreeMap<String, Vec<f64>>,
    log: EventLog,
}

impl Emulator {
    pub fn new(spec: DataPlaneSpec, config: EmuConfig, seed: u64, log: EventLog) -> Result<Self, EmuError> {
        let invalid = |m: String| EmuError::Invalid(m);
        spec.plan.validate().map_err(|e| invalid(e.to_string()))?;
        let mut ids = BTreeSet::new();
        let mut claim = |id: &str| {
            if ids.insert(id.to_string()) {
                Ok(())
            } else {
                Err(invalid(format!("duplicate device id {id}")))
            }
        };
        for r in &spec.roadms {
            claim(&r.id)?;
        }
        for l in &spec.lines {
            claim(&l.id)?;
        }
        for t in &spec.trxs {
            claim(&t.id)?;
        }
        let known_node = |n: &str| spec.roadms.iter().any(|r| r.id == n);
        for l in &spec.lines {
            l.validate(&spec.plan).map_err(|e| invalid(format!("{}: {e}", l.id)))?;
            for n in [&l.from_roadm, &l.to_roadm] {
                if !known_node(n) {
                    return Err(invalid(format!("{} ends at unknown node {n}", l.id)));
                }
            }
        }
        for t in &spec.trxs {
            if !known_node(&t.node) {
                return Err(invalid(format!("{} sits at unknown node {}", t.id, t.node)));
            }
        }
        let mut roadms: BTreeMap<String, RoadmAgent> = spec
            .roadms
            .iter()
            .map(|r| {
                let agent = RoadmAgent {
                    id: r.id.clone(),
                    online: true,
                    lines: spec
                        .lines
                        .iter()
                        .filter(|l| l.from_roadm == r.id || l.to_roadm == r.id)
                        .map(|l| l.id.clone())
                        .collect(),
                    trxs: spec
                        .trxs
                        .iter()
                        .filter(|t| t.node == r.id)
                        .map(|t| t.id.clone())
                        .collect(),
                    cross_connects: Vec::new(),
                };
                (r.id.clone(), agent)
            })
            .collect();
        for p in &spec.preexisting {
            let line = spec
                .lines
                .iter()
                .find(|l| l.id == p.line)
                .ok_or_else(|| invalid(format!("pre-existing channel on unknown line {}", p.line)))?;
            if p.channel >= spec.plan.channel_count {
                return Err(invalid(format!("pre-existing channel {} outside the grid", p.channel)));
            }
            for node in [&line.from_roadm, &line.to_roadm] {
                let xc = CrossConnect::new(
                    p.channel,
                    Port::Line(line.id.clone()),
                    Port::External(format!("{}#{}", line.id, p.channel)),
                );
                roadms.get_mut(node).expect("validated").connect(xc)?;
            }
        }
        let trxs = spec
            .trxs
            .iter()
            .map(|t| {
                let agent = TrxAgent {
                    id: t.id.clone(),
                    node: t.node.clone(),
                    trx_type: t.trx_type,
                    online: true,
                    tuning: None,
                    generation: 0,
                    last_ber: None,
                    refuse_tuning: false,
                    rng: derive_rng(seed, &t.id),
                };
                (t.id.clone(), agent)
            })
            .collect();
        let olcs = spec
            .lines
            .iter()
            .map(|l| {
                let agent = OlcAgent {
                    ols: l.clone(),
                    state: LineState::NotReady,
                    online: true,
                    cut: None,
                    rng: derive_rng(seed, &l.id),
                };
                (l.id.clone(), agent)
            })
            .collect();
        let curves = [TrxType::Aco, TrxType::Dco]
            .map(|t| (t, spec.b2b.curve(t)))
            .into_iter()
            .collect();
        Ok(Emulator {
            plan: spec.plan,
            config,
            clock: Scheduler::default(),
            roadm_desc: spec.roadms,
            roadms,
            trxs,
            olcs,
            curves,
            trx_launch_dbm: spec.trx_launch_dbm,
            pending_cuts: BTreeSet::new(),
            outbox: Vec::new(),
            gsnr_cache: BTreeMap::new(),
            log,
        })
    }

    pub fn into_shared(self) -> SharedEmulator {
        Arc::new(Mutex::new(self))
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn plan(&self) -> &ChannelPlan {
        &self.plan
    }

    pub fn config(&self) -> &EmuConfig {
        &self.config
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn truth_line(&self, id: &str) -> Option<&OlsDescriptor> {
        self.olcs.get(id).map(|o| &o.ols)
    }

    pub fn line_state(&self, id: &str) -> Option<LineState> {
        self.olcs.get(id).map(|o| o.state)
    }

    pub fn cross_connects(&self, node: &str) -> Option<&[CrossConnect]> {
        self.roadms.get(node).map(|r| r.cross_connects.as_slice())
    }

    pub fn trx_tuning(&self, id: &str) -> Option<TrxTuning> {
        self.trxs.get(id).and_then(|t| t.tuning)
    }

    pub fn curve(&self, trx_type: TrxType) -> &TrxB2BCurve {
        &self.curves[&trx_type]
    }

    /// Takes a device on or off the management network.
    pub fn set_online(&mut self, device: &str, online: bool) -> Result<(), EmuError> {
        if let Some(r) = self.roadms.get_mut(device) {
            r.online = online;
        } else if let Some(t) = self.trxs.get_mut(device) {
            t.online = online;
        } else if let Some(o) = self.olcs.get_mut(device) {
            o.online = online;
        } else {
            return Err(EmuError::UnknownDevice(device.into()));
        }
        Ok(())
    }

    /// Makes a transceiver refuse tuning commands.
    pub fn set_refuse_tuning(&mut self, trx: &str, refuse: bool) -> Result<(), EmuError> {
        let t = self
            .trxs
            .get_mut(trx)
            .ok_or_else(|| EmuError::UnknownDevice(trx.into()))?;
        t.refuse_tuning = refuse;
        Ok(())
    }

    /// Third-party cross-connect set up behind the controller's back.
    pub fn add_foreign_cross_connect(&mut self, node: &str, xc: CrossConnect) -> Result<(), EmuError> {
        let r = self
            .roadms
            .get_mut(node)
            .ok_or_else(|| EmuError::UnknownDevice(node.into()))?;
        r.connect(xc)
    }

    /// Advances emulated time, firing every event that falls due.
    pub fn advance(&mut self, seconds: f64) {
        let target = self.clock.now() + seconds.max(0.0);
        while let Some((_, event)) = self.clock.pop_due(target) {
            self.fire(event);
        }
        self.clock.settle(target);
    }

    pub fn inject_failure(&mut self, injection: FailureInjection) -> Result<(), EmuError> {
        let olc = self
            .olcs
            .get(&injection.link)
            .ok_or_else(|| EmuError::UnknownLink(injection.link.clone()))?;
        if olc.cut.is_some() || self.pending_cuts.contains(&injection.link) {
            return Err(EmuError::AlreadyCut(injection.link.clone()));
        }
        if let Some(s) = injection.span {
            if s >= olc.ols.spans.len().max(1) {
                return Err(EmuError::Invalid(format!("{} has no span {s}", injection.link)));
            }
        }
        self.log.record(self.now(), "emulator", "inject_failure", &injection);
        if injection.at <= self.now() {
            self.activate(injection);
        } else {
            self.pending_cuts.insert(injection.link.clone());
            self.clock.schedule(injection.at, EmuEvent::Activate(injection));
        }
        Ok(())
    }

    /// Splices a cut fiber. The line comes back NOT_READY.
    pub fn repair_link(&mut self, link: &str) -> Result<(), EmuError> {
        let olc = self
            .olcs
            .get_mut(link)
            .ok_or_else(|| EmuError::UnknownLink(link.into()))?;
        if olc.cut.take().is_none() {
            return Err(EmuError::Rejected {
                device: link.into(),
                reason: "line is not cut".into(),
            });
        }
        olc.state = LineState::NotReady;
        self.gsnr_cache.clear();
        self.log.record(self.now(), link, "repair", link);
        Ok(())
    }

    fn activate(&mut self, injection: FailureInjection) {
        self.pending_cuts.remove(&injection.link);
        let now = self.now();
        let Some(olc) = self.olcs.get_mut(&injection.link) else {
            return;
        };
        olc.cut = Some(injection.span.unwrap_or(0));
        olc.state = LineState::Failed;
        self.gsnr_cache.clear();
        self.log.record(now, &injection.link, "fiber_cut", &injection);
        if self.config.interrupts {
            let irq = Interrupt {
                timestamp: now,
                source: injection.link.clone(),
                link: injection.link.clone(),
                cause: "loss_of_signal".into(),
            };
            self.log.record(now, &irq.source, "interrupt", &irq);
            self.outbox.push(irq);
        }
    }

    fn fire(&mut self, event: EmuEvent) {
        match event {
            EmuEvent::Activate(inj) => self.activate(inj),
            EmuEvent::BerWindow { trx, generation } => {
                let current = self
                    .trxs
                    .get(&trx)
                    .map(|t| t.generation == generation && t.tuning.is_some());
                if current != Some(true) {
                    return;
                }
                let value = self.window_ber(&trx);
                let now = self.now();
                if let Some(t) = self.trxs.get_mut(&trx) {
                    t.last_ber = Some(BerReading { value, window_end: now });
                }
                let next = now + self.config.ber_window_s;
                self.clock.schedule(next, EmuEvent::BerWindow { trx, generation });
            }
        }
    }

    /// Mean of one jittered sample per second over the averaging window.
    fn window_ber(&mut self, trx: &str) -> f64 {
        let Some(path) = self.signal_path(trx) else {
            return LOS_BER;
        };
        let Ok(gsnr) = self.path_gsnr(&path) else {
            return LOS_BER;
        };
        let g = gsnr[path.tuning.channel];
        let samples = self.config.ber_window_s.round().max(1.0) as usize;
        let sigma = self.config.ber_jitter_db;
        let t = self.trxs.get_mut(trx).expect("checked by caller");
        let curve = &self.curves[&t.trx_type];
        let mut sum = 0.0;
        for _ in 0..samples {
            let j = gauss(&mut t.rng, sigma);
            sum += emulate_ber(g, path.tuning.format, curve, j).unwrap_or(LOS_BER);
        }
        sum / samples as f64
    }

    /// Follows cross-connects from a tuned transceiver to the far-end
    /// transceiver; `None` when the light does not get there.
    pub fn signal_path(&self, trx: &str) -> Option<SignalPath> {
        let t = self.trxs.get(trx)?;
        let tuning = t.tuning?;
        if !t.online {
            return None;
        }
        let mut node = t.node.clone();
        let mut port = Port::Local(trx.to_string());
        let mut lines: Vec<String> = Vec::new();
        let mut roadms = vec![node.clone()];
        loop {
            let r = self.roadms.get(&node)?;
            if !r.online {
                return None;
            }
            let next = r.find(&port, tuning.channel)?.other(&port)?.clone();
            match next {
                Port::Local(far) => {
                    let f = self.trxs.get(&far)?;
                    if lines.is_empty() || !f.online || f.tuning != Some(tuning) {
                        return None;
                    }
                    return Some(SignalPath {
                        lines,
                        roadms,
                        far_end: far,
                        tuning,
                    });
                }
                Port::External(_) => return None,
                Port::Line(l) => {
                    let olc = self.olcs.get(&l)?;
                    if olc.cut.is_some() || lines.contains(&l) {
                        return None;
                    }
                    node = if olc.ols.from_roadm == node {
                        olc.ols.to_roadm.clone()
                    } else {
                        olc.ols.from_roadm.clone()
                    };
                    lines.push(l.clone());
                    roadms.push(node.clone());
                    port = Port::Line(l);
                }
            }
        }
    }

    /// Ground-truth GSNR per channel along a signal path, full load.
    pub fn path_gsnr(&mut self, path: &SignalPath) -> Result<Vec<f64>, EmuError> {
        let key = format!("{}|{}", path.roadms.join(","), path.lines.join(","));
        if let Some(g) = self.gsnr_cache.get(&key) {
            return Ok(g.clone());
        }
        let topo = PhyTopology {
            plan: self.plan.clone(),
            roadms: self.roadm_desc.clone(),
            lines: self.olcs.values().map(|o| o.ols.clone()).collect(),
            line_state: self.olcs.keys().map(|k| (k.clone(), LineState::Ready)).collect(),
            trx_launch_dbm: self.trx_launch_dbm,
        };
        let phy = PhyPath {
            id: path.lines.join("+"),
            lines: path.lines.clone(),
            roadms: path.roadms.clone(),
            length_km: 0.0,
        };
        let g = topo.path_gsnr(&phy).map_err(|e| EmuError::Invalid(e.to_string()))?;
        self.gsnr_cache.insert(key, g.clone());
        Ok(g)
    }

    /// Noise-free per-channel power at a line monitor, dBm.
    fn monitor_dbm(&self, line: &str, point: MonitorPoint) -> Result<Vec<f64>, EmuError> {
        let olc = &self.olcs[line];
        let (k, after) = match point {
            MonitorPoint::SpanInput(k) => (k, false),
            MonitorPoint::SpanOutput(k) => (k, true),
        };
        if k >= olc.ols.spans.len() {
            return Err(EmuError::Unsupported {
                device: line.into(),
                what: format!("monitor at span {k}"),
            });
        }
        if let Some(c) = olc.cut {
            if (after && k >= c) || k > c {
                return Ok(vec![DARK_DBM; self.plan.channel_count]);
            }
        }
        let input = PowerSpectrum::flat_dbm(&self.plan, self.config.line_input_dbm);
        let twin = OlsTwin::new(&olc.ols, &self.plan, PropagationOptions::default())
            .map_err(|e| EmuError::Invalid(e.to_string()))?;
        let (_, trace) = twin
            .trace_with(&input, &olc.ols.settings())
            .map_err(|e| EmuError::Rejected {
                device: line.into(),
                reason: e.to_string(),
            })?;
        let s = if after {
            &trace.span_output[k]
        } else {
            &trace.span_input[k]
        };
        Ok(s.channel_totals()
            .into_iter()
            .map(|w| watt_to_dbm(w).max(DARK_DBM))
            .collect())
    }

    fn otdr(&mut self, line: &str, span: usize) -> Result<OtdrTrace, EmuError> {
        let sigma = self.config.otdr_sigma_db;
        let len_sigma = self.config.otdr_length_sigma_km;
        let olc = self.olcs.get_mut(line).expect("checked by caller");
        let s = olc.ols.spans.get(span).cloned().ok_or_else(|| EmuError::Unsupported {
            device: line.into(),
            what: format!("OTDR on span {span}"),
        })?;
        let rng = &mut olc.rng;
        let noisy = |loss: f64, rng: &mut ChaCha8Rng| (loss + gauss(rng, sigma)).max(0.0);
        let length = s.length_km + gauss(rng, len_sigma);
        let mut events = vec![OtdrEvent {
            position_km: 0.05,
            loss_db: noisy(s.input_connector_loss_db, rng),
        }];
        for l in &s.lumped_losses {
            events.push(OtdrEvent {
                position_km: l.position_km,
                loss_db: noisy(l.loss_db, rng),
            });
        }
        events.push(OtdrEvent {
            position_km: length - 0.05,
            loss_db: noisy(s.output_connector_loss_db, rng),
        });
        Ok(OtdrTrace {
            span_id: olc.ols.span_id(span),
            measured_length_km: length,
            events,
            noise_sigma_db: sigma,
        })
    }

    fn cost_of(&self, req: &Request) -> f64 {
        let c = &self.config.costs;
        let base = match req {
            Request::Advance { seconds } => return seconds.max(0.0),
            Request::Discover | Request::TakeInterrupts => c.message_s,
            Request::Poll {
                query: Query::Otdr { .. },
                ..
            } => c.otdr_s,
            Request::Poll { .. } => c.poll_s,
            Request::Configure { command, .. } => match command {
                Command::SetAmplifier { .. } => c.amplifier_s,
                Command::SetLineState { .. } => c.message_s,
                Command::Tune { .. } | Command::Release => c.tune_s,
                Command::Connect { .. } | Command::Disconnect { .. } => c.cross_connect_s,
            },
        };
        base * self.config.time_scale
    }

    /// Serves one management-plane message; device latency elapses before
    /// the reply.
    pub fn handle(&mut self, req: Request) -> Response {
        let cost = self.cost_of(&req);
        self.advance(cost);
        let now = self.now();
        match &req {
            Request::Configure { device, command } => {
                self.log
                    .record(now, device, &format!("configure.{}", command.name()), &req)
            }
            Request::Poll { device, query } => self.log.record(now, device, &format!("poll.{}", query.name()), &req),
            Request::Discover => self.log.record(now, "emulator", "discover", &req),
            Request::Advance { .. } | Request::TakeInterrupts => {}
        }
        let result = match req {
            Request::Discover => Ok(Response::Inventory {
                inventory: self.inventory(),
            }),
            Request::Advance { .. } => Ok(Response::Ack { timestamp: now }),
            Request::TakeInterrupts => Ok(Response::Interrupts {
                interrupts: std::mem::take(&mut self.outbox),
            }),
            Request::Configure { device, command } => self
                .configure(&device, command)
                .map(|()| Response::Ack { timestamp: self.now() }),
            Request::Poll { device, query } => self.poll(&device, &query).map(|sample| Response::Sample { sample }),
        };
        result.unwrap_or_else(|error| Response::Error { error })
    }

    pub fn inventory(&self) -> Inventory {
        Inventory {
            nodes: self
                .roadms
                .values()
                .map(|r| NodeInventory {
                    id: r.id.clone(),
                    trxs: r
                        .trxs
                        .iter()
                        .map(|t| TrxInventory {
                            id: t.clone(),
                            trx_type: self.trxs[t].trx_type,
                        })
                        .collect(),
                })
                .collect(),
            links: self
                .olcs
                .values()
                .map(|o| LinkInventory {
                    id: o.ols.id.clone(),
                    from: o.ols.from_roadm.clone(),
                    to: o.ols.to_roadm.clone(),
                    span_ids: o.ols.span_ids(),
                    amplifiers: o.ols.amplifiers().iter().map(|a| a.id.clone()).collect(),
                })
                .collect(),
        }
    }

    fn reachable(&self, device: &str) -> Result<(), EmuError> {
        let online = if let Some(r) = self.roadms.get(device) {
            r.online
        } else if let Some(t) = self.trxs.get(device) {
            t.online
        } else if let Some(o) = self.olcs.get(device) {
            o.online
        } else {
            return Err(EmuError::UnknownDevice(device.into()));
        };
        if online {
            Ok(())
        } else {
            Err(EmuError::Unreachable(device.into()))
        }
    }

    fn configure(&mut self, device: &str, command: Command) -> Result<(), EmuError> {
        self.reachable(device)?;
        let unsupported = |what: &str| EmuError::Unsupported {
            device: device.into(),
            what: what.into(),
        };
        if let Some(olc) = self.olcs.get_mut(device) {
            return match command {
                Command::SetAmplifier { amplifier, setting } => {
                    olc.set_amplifier(&amplifier, setting)?;
                    self.gsnr_cache.clear();
                    Ok(())
                }
                Command::SetLineState { state } => {
                    if olc.cut.is_some() && state != LineState::Failed {
                        return Err(EmuError::Rejected {
                            device: device.into(),
                            reason: "line is cut".into(),
                        });
                    }
                    olc.state = state;
                    Ok(())
                }
                other => Err(unsupported(other.name())),
            };
        }
        if let Some(t) = self.trxs.get_mut(device) {
            return match command {
                Command::Tune { format, channel } => {
                    t.tune(format, channel, self.plan.channel_count)?;
                    let generation = t.generation;
                    let at = self.clock.now() + self.config.ber_window_s;
                    self.clock.schedule(
                        at,
                        EmuEvent::BerWindow {
                            trx: device.into(),
                            generation,
                        },
                    );
                    Ok(())
                }
                Command::Release => {
                    t.release();
                    Ok(())
                }
                other => Err(unsupported(other.name())),
            };
        }
        let r = self.roadms.get_mut(device).expect("reachable checked the id");
        match command {
            Command::Connect { cross_connect } => r.connect(cross_connect),
            Command::Disconnect { cross_connect } => r.disconnect(&cross_connect),
            other => Err(unsupported(other.name())),
        }
    }

    /// Current sample of one telemetry stream, noise applied.
    pub fn poll(&mut self, device: &str, query: &Query) -> Result<TelemetrySample, EmuError> {
        self.reachable(device)?;
        let now = self.now();
        let unsupported = || EmuError::Unsupported {
            device: device.into(),
            what: query.name().into(),
        };
        let sample = |kind, value, sigma| TelemetrySample {
            source: device.into(),
            kind,
            value,
            timestamp: now,
            noise_sigma_db: sigma,
        };
        if self.olcs.contains_key(device) {
            let sigma = self.config.ocm_sigma_db;
            return match query {
                Query::OcmSpectrum { point } => {
                    let clean = self.monitor_dbm(device, *point)?;
                    let rng = &mut self.olcs.get_mut(device).expect("present").rng;
                    let noisy = clean.into_iter().map(|p| p + gauss(rng, sigma)).collect();
                    Ok(sample(SampleKind::OcmSpectrum, SampleValue::Spectrum(noisy), sigma))
                }
                Query::TotalPower { point } => {
                    let clean = self.monitor_dbm(device, *point)?;
                    let total = watt_to_dbm(clean.iter().map(|&p| dbm_to_watt(p)).sum());
                    let rng = &mut self.olcs.get_mut(device).expect("present").rng;
                    let v = total + gauss(rng, sigma);
                    Ok(sample(SampleKind::TotalPower, SampleValue::Scalar(v), sigma))
                }
                Query::Otdr { span } => {
                    let trace = self.otdr(device, *span)?;
                    let s = trace.noise_sigma_db;
                    Ok(sample(SampleKind::Otdr, SampleValue::Otdr(trace), s))
                }
                Query::AmplifierSetting { amplifier } => {
                    let setting = self.olcs[device].setting(amplifier)?;
                    Ok(sample(SampleKind::State, SampleValue::Amplifier(setting), 0.0))
                }
                Query::LineStatus => {
                    let olc = &self.olcs[device];
                    let status = LineStatus {
                        state: olc.state,
                        loss_of_signal: olc.cut.is_some(),
                    };
                    Ok(sample(SampleKind::State, SampleValue::Line(status), 0.0))
                }
                _ => Err(unsupported()),
            };
        }
        if self.trxs.contains_key(device) {
            return match query {
                Query::Ber => {
                    let t = &self.trxs[device];
                    if t.tuning.is_none() {
                        return Err(EmuError::Unavailable {
                            device: device.into(),
                            what: "BER: transceiver idle".into(),
                        });
                    }
                    let sigma = self.config.ber_jitter_db;
                    let value = if self.signal_path(device).is_none() {
                        LOS_BER
                    } else {
                        match t.last_ber {
                            Some(r) => r.value,
                            None => {
                                return Err(EmuError::Unavailable {
                                    device: device.into(),
                                    what: "completed BER window".into(),
                                })
                            }
                        }
                    };
                    Ok(sample(SampleKind::Ber, SampleValue::Scalar(value), sigma))
                }
                Query::TrxStatus => {
                    let t = &self.trxs[device];
                    let status = TrxStatus {
                        trx_type: t.trx_type,
                        tuning: t.tuning,
                        loss_of_signal: t.tuning.is_some() && self.signal_path(device).is_none(),
                    };
                    Ok(sample(SampleKind::State, SampleValue::Trx(status), 0.0))
                }
                _ => Err(unsupported()),
            };
        }
        match query {
            Query::CrossConnects => {
                let xcs = self.roadms[device].cross_connects.clone();
                Ok(sample(SampleKind::State, SampleValue::CrossConnects(xcs), 0.0))
            }
            _ => Err(unsupported()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn ber_at_threshold_is_pre_fec() {
        let curve = TrxB2BCurve::ideal(TrxType::Dco);
        let t = curve.snr_threshold(ModulationFormat::DpQpsk).unwrap();
        let ber = emulate_ber(t, ModulationFormat::DpQpsk, &curve, 0.0).unwrap();
        assert!((ber / 1e-2 - 1.0).abs() < 1e-3, "{ber}");
    }

    #[test]
    fn ber_is_floored() {
        let curve = TrxB2BCurve::ideal(TrxType::Dco);
        let ber = emulate_ber(30.0, ModulationFormat::DpQpsk, &curve, 0.0).unwrap();
        assert_eq!(ber, curve.ber_floor);
    }

    #[test]
    fn derived_streams_differ_per_device() {
        let a = derive_rng(7, "A").random::<u64>();
        let b = derive_rng(7, "B").random::<u64>();
        assert_ne!(a, b);
        assert_eq!(a, derive_rng(7, "A").random::<u64>());
    }
}
