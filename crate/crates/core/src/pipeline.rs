//! End-to-end run of a scenario: bring-up of the emulated network, probing
//! and fitting of every span, working-point optimization, provisioning and
//! the timed script of requests and failures.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ampopt::{apply_working_point, optimize_ols, AmpOptError, WorkingPointSolution};
use crate::characterization::{
    build_phy_topology, fit_span, run_probe_sequence, CharacterizationError, CharacterizationRecord, JsonlStore,
    ProbeData, VirtualLink, VirtualTopology,
};
use crate::emu::{
    serve_tcp, EmuError, Emulator, EventLog, FailureInjection, FailureKind, InProcessTransport, Inventory, Query,
    SampleValue, SharedEmulator, TcpServer, TcpTransport, Transport,
};
use crate::lpce::{ber_to_snr, compute_margin, ModulationFormat, TrxType};
use crate::oonc::{Controller, OoncError, RecoveryReport, RequestOutcome, TrafficRequest};
use crate::scenario::{Scenario, ScriptAction};
use crate::topology::{LineState, PhyTopology, TopologyError};
use crate::twin::{FiberSpanParams, OlsDescriptor, PowerSpectrum};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("emulator: {0}")]
    Emu(#[from] EmuError),
    #[error("characterization: {0}")]
    Characterization(#[from] CharacterizationError),
    #[error("working point of {line}: {source}")]
    AmpOpt {
        line: String,
        #[source]
        source: AmpOptError,
    },
    #[error("controller: {0}")]
    Oonc(#[from] OoncError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    InProcess,
    Tcp,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    pub seed: Option<u64>,
    /// Where characterization records and working points are persisted.
    pub data_dir: Option<PathBuf>,
    pub time_scale: Option<f64>,
    pub transport: TransportKind,
}

/// Fitted span next to the emulator's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanCharacterization {
    pub line: String,
    pub record: CharacterizationRecord,
    pub truth: FiberSpanParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub phase: String,
    pub lightpath: String,
    pub path: Vec<String>,
    pub channel: usize,
    pub frequency_thz: f64,
    pub trx: String,
    pub trx_type: TrxType,
    pub format: ModulationFormat,
    pub predicted_gsnr_db: f64,
    pub ber: f64,
    pub estimated_gsnr_db: f64,
    /// BER at the receiver floor: the estimate is a lower bound.
    pub at_least: bool,
    pub margin_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsnrCurve {
    pub name: String,
    pub gsnr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything a run produces that goes into the reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub channel_frequencies_thz: Vec<f64>,
    pub characterization: Vec<SpanCharacterization>,
    pub working_points: Vec<WorkingPointSolution>,
    pub curves: Vec<GsnrCurve>,
    pub requests: Vec<RequestOutcome>,
    pub recoveries: Vec<RecoveryReport>,
    pub performance: Vec<PerformanceRow>,
    pub final_requests: Vec<TrafficRequest>,
    pub checks: Vec<CheckResult>,
    pub emulated_end_s: f64,
}

/// Live stack: emulator, its transport and a provisioned controller.
pub struct Session {
    pub emulator: SharedEmulator,
    pub controller: Controller,
    pub log: EventLog,
    pub characterization: Vec<SpanCharacterization>,
    pub working_points: Vec<WorkingPointSolution>,
    pub inventory: Inventory,
    _server: Option<TcpServer>,
}

impl Session {
    pub fn emulator(&self) -> std::sync::MutexGuard<'_, Emulator> {
        self.emulator.lock().expect("emulator lock")
    }
}

/// Line descriptor holding only what the controller knows before probing:
/// amplifiers and the number of spans.
fn skeleton(link: &VirtualLink, scenario: &Scenario) -> Result<OlsDescriptor, PipelineError> {
    let dev = scenario
        .devices
        .lines
        .get(&link.id)
        .ok_or_else(|| CharacterizationError::MissingDevices(link.id.clone()))?;
    Ok(OlsDescriptor {
        id: link.id.clone(),
        from_roadm: link.from.clone(),
        to_roadm: link.to.clone(),
        booster: dev.booster.clone(),
        spans: dev
            .dispersion
            .iter()
            .map(|&d| FiberSpanParams::flat(1.0, 0.2, 0.0, d))
            .collect(),
        inline_amplifiers: dev.inline_amplifiers.clone(),
        preamp: dev.preamp.clone(),
    })
}

/// Brings the network up to a provisioned controller.
pub fn bring_up(scenario: &Scenario, options: &PipelineOptions) -> Result<Session, PipelineError> {
    let log = EventLog::new();
    let seed = options.seed.unwrap_or(scenario.seed());
    let mut emu_config = scenario.file.emulator.clone();
    let mut ctl_config = scenario.file.controller.clone();
    if let Some(s) = options.time_scale {
        emu_config.time_scale = s;
        ctl_config.time_scale = s;
    }
    let line_input_dbm = emu_config.line_input_dbm;
    let emulator = Emulator::new(scenario.data_plane.clone(), emu_config, seed, log.clone())?.into_shared();
    let (transport, server): (Box<dyn Transport>, Option<TcpServer>) = match options.transport {
        TransportKind::InProcess => (Box::new(InProcessTransport::new(emulator.clone())), None),
        TransportKind::Tcp => {
            let server = serve_tcp(emulator.clone(), "127.0.0.1:0")?;
            (Box::new(TcpTransport::connect(server.local_addr())?), Some(server))
        }
    };
    let mut nos = crate::oonc::NosClient::new(transport, log.clone());
    let inventory = nos.discover()?;
    let vt = VirtualTopology {
        nodes: inventory.nodes.iter().map(|n| n.id.clone()).collect(),
        links: inventory
            .links
            .iter()
            .map(|l| VirtualLink {
                id: l.id.clone(),
                from: l.from.clone(),
                to: l.to.clone(),
                span_ids: l.span_ids.clone(),
            })
            .collect(),
    };

    let cfg = &scenario.file.characterization;
    let mut probes: Vec<ProbeData> = Vec::new();
    for link in &vt.links {
        let ols = skeleton(link, scenario)?;
        if ols.spans.is_empty() {
            continue;
        }
        probes.push(run_probe_sequence(&ols, &mut nos.olc(&link.id), cfg)?);
    }
    let fitted_at = nos.now()?;
    let jobs: Vec<(&str, usize)> = probes
        .iter()
        .flat_map(|p| (0..p.traces.len()).map(move |k| (p.ols_id.as_str(), k)))
        .collect();
    let plan = &scenario.plan;
    let records: Vec<CharacterizationRecord> = jobs
        .par_iter()
        .map(|&(line, k)| {
            let p = probes.iter().find(|p| p.ols_id == line).expect("probed line");
            fit_span(&p.traces[k], &p.probes[k], plan, cfg, fitted_at)
        })
        .collect::<Result<_, _>>()?;
    log.record(fitted_at, "plase", "characterize", &records);
    let characterization: Vec<SpanCharacterization> = jobs
        .iter()
        .zip(&records)
        .map(|(&(line, k), rec)| {
            let truth = scenario
                .data_plane
                .lines
                .iter()
                .find(|l| l.id == line)
                .expect("line")
                .spans[k]
                .clone();
            // Dispersion and gamma come from installation data, not the fit.
            let mut record = rec.clone();
            if let Some(dev) = scenario.devices.lines.get(line) {
                record.fitted.dispersion = dev.dispersion[k];
                record.fitted.gamma = dev.gamma[k];
            }
            SpanCharacterization {
                line: line.to_string(),
                record,
                truth,
            }
        })
        .collect();

    let mut phy = build_phy_topology(&records, &vt, &scenario.devices)?;
    let input = PowerSpectrum::flat_dbm(plan, line_input_dbm);
    let solutions: Vec<WorkingPointSolution> = phy
        .lines
        .par_iter()
        .map(|l| {
            optimize_ols(l, plan, &input, &scenario.file.optimizer).map_err(|source| PipelineError::AmpOpt {
                line: l.id.clone(),
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    for sol in &solutions {
        apply_working_point(sol, &mut nos.olc(&sol.ols_id)).map_err(|source| PipelineError::AmpOpt {
            line: sol.ols_id.clone(),
            source,
        })?;
        phy.line_mut(&sol.ols_id)?.set_settings(&sol.settings());
        phy.set_state(&sol.ols_id, LineState::Ready)?;
    }
    let now = nos.now()?;
    log.record(now, "plase", "optimize", &solutions);

    if let Some(dir) = &options.data_dir {
        JsonlStore::<CharacterizationRecord>::open(dir.join("characterization.jsonl"))?.append_all(&records)?;
        JsonlStore::<WorkingPointSolution>::open(dir.join("working_points.jsonl"))?.append_all(&solutions)?;
    }

    let curves = [TrxType::Aco, TrxType::Dco]
        .map(|t| scenario.file.b2b.curve(t))
        .to_vec();
    let mut controller = Controller::new(nos, phy, curves, ctl_config);
    controller.provision()?;
    Ok(Session {
        emulator,
        controller,
        log,
        characterization,
        working_points: solutions,
        inventory,
        _server: server,
    })
}

/// Outcome of a full run plus timing that stays out of the reports.
pub struct RunOutcome {
    pub report: RunReport,
    pub log: EventLog,
    /// Wall-clock time from failure detection to end of recovery, per cut.
    pub recovery_wall: Vec<Duration>,
    pub session: Session,
}

pub fn run(scenario: &Scenario, options: &PipelineOptions) -> Result<RunOutcome, PipelineError> {
    let mut session = bring_up(scenario, options)?;
    let ber_wait = scenario.file.emulator.ber_window_s + 1.0;
    let t0 = session.controller.nos().now()?;
    let mut requests = Vec::new();
    let mut recoveries = Vec::new();
    let mut performance = Vec::new();
    let mut recovery_wall = Vec::new();
    let mut request_ids = Vec::new();
    let mut issues = Vec::new();

    for entry in scenario.script() {
        let ctl = &mut session.controller;
        let now = ctl.nos().now()?;
        if t0 + entry.at > now {
            ctl.nos().spend(t0 + entry.at - now)?;
        }
        match entry.action {
            ScriptAction::Request { src, dst, rate_gbps } => {
                let out = ctl.submit_request(&src, &dst, rate_gbps)?;
                request_ids.push(out.request.id.clone());
                let phase = format!("{} {src}->{dst} {rate_gbps}G", out.request.id);
                requests.push(out);
                ctl.nos().spend(ber_wait)?;
                performance.extend(measure(ctl, &phase)?);
            }
            ScriptAction::FiberCut { link, span } => {
                let at = ctl.nos().now()?;
                session
                    .emulator
                    .lock()
                    .expect("emulator lock")
                    .inject_failure(FailureInjection {
                        link: link.clone(),
                        kind: FailureKind::FiberCut,
                        at,
                        span,
                    })?;
                let ctl = &mut session.controller;
                let failed = ctl.detect_failures(2)?;
                if failed.is_empty() {
                    issues.push(format!("cut of {link} was not detected within two polling intervals"));
                }
                for l in failed {
                    let started = Instant::now();
                    let report = ctl.handle_failure(&l)?;
                    recovery_wall.push(started.elapsed());
                    recoveries.push(report);
                }
                ctl.nos().spend(ber_wait)?;
                performance.extend(measure(ctl, &format!("after {link} cut"))?);
            }
            ScriptAction::Repair { link } => {
                session.emulator.lock().expect("emulator lock").repair_link(&link)?;
                session.controller.handle_repair(&link)?;
            }
            ScriptAction::Release { request } => {
                let id = request_ids
                    .get(request - 1)
                    .cloned()
                    .ok_or_else(|| PipelineError::Other(format!("no request #{request}")))?;
                ctl.release_request(&id)?;
            }
        }
        let ctl = &mut session.controller;
        issues.extend(ctl.invariant_violations());
        issues.extend(ctl.reconcile()?);
    }

    let curves = gsnr_curves(&session)?;
    let checks = run_checks(&session, &recoveries, &issues);
    let emulated_end_s = session.controller.nos().now()?;
    let report = RunReport {
        scenario: scenario.file.name.clone(),
        seed: options.seed.unwrap_or(scenario.seed()),
        channel_frequencies_thz: scenario.plan.frequencies().iter().map(|f| f / 1e12).collect(),
        characterization: session.characterization.clone(),
        working_points: session.working_points.clone(),
        curves,
        requests,
        recoveries,
        performance,
        final_requests: session.controller.requests().cloned().collect(),
        checks,
        emulated_end_s,
    };
    Ok(RunOutcome {
        report,
        log: session.log.clone(),
        recovery_wall,
        session,
    })
}

/// BER of every active lightpath at its receiving transceiver, turned back
/// into GSNR through the B2B curve.
pub fn measure(ctl: &mut Controller, phase: &str) -> Result<Vec<PerformanceRow>, PipelineError> {
    let freqs = ctl.phy().plan.frequencies();
    let lps: Vec<_> = ctl.active_lightpaths().into_iter().cloned().collect();
    let mut rows = Vec::new();
    for lp in lps {
        let trx_type = ctl
            .abstraction()
            .and_then(|a| a.node(lp.roadms.last().expect("path")).ok())
            .and_then(|n| n.trxs.iter().find(|t| t.id == lp.dst_trx))
            .map(|t| t.trx_type)
            .ok_or_else(|| PipelineError::Other(format!("unknown transceiver {}", lp.dst_trx)))?;
        let s = ctl.nos().poll(&lp.dst_trx, Query::Ber)?;
        let SampleValue::Scalar(ber) = s.value else {
            return Err(PipelineError::Other(format!("{} returned no BER", lp.dst_trx)));
        };
        let curve = ctl
            .curves()
            .iter()
            .find(|c| c.trx_type == trx_type)
            .ok_or_else(|| PipelineError::Other(format!("no B2B curve for {trx_type}")))?;
        let est = ber_to_snr(ber, lp.format, curve).map_err(|e| PipelineError::Other(e.to_string()))?;
        rows.push(PerformanceRow {
            phase: phase.to_string(),
            lightpath: lp.id.clone(),
            path: lp.links.clone(),
            channel: lp.channel,
            frequency_thz: freqs[lp.channel] / 1e12,
            trx: lp.dst_trx.clone(),
            trx_type,
            format: lp.format,
            predicted_gsnr_db: lp.predicted_gsnr_db,
            ber,
            estimated_gsnr_db: est.value(),
            at_least: est.is_lower_bound(),
            margin_db: compute_margin(est.value(), lp.predicted_gsnr_db),
        });
    }
    Ok(rows)
}

/// Full-load GSNR per line and per candidate path of every node pair, on
/// the fitted twin with all lines up.
fn gsnr_curves(session: &Session) -> Result<Vec<GsnrCurve>, PipelineError> {
    let mut out: Vec<GsnrCurve> = session
        .working_points
        .iter()
        .map(|w| GsnrCurve {
            name: format!("line {}", w.ols_id),
            gsnr_db: w.gsnr_db.clone(),
        })
        .collect();
    let mut phy: PhyTopology = session.controller.phy().clone();
    for l in phy.lines.iter().map(|l| l.id.clone()).collect::<Vec<_>>() {
        phy.set_state(&l, LineState::Ready)?;
    }
    let nodes: Vec<String> = phy.roadms.iter().map(|r| r.id.clone()).collect();
    let max_paths = session.controller.config().lpce.max_paths;
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            for p in phy.paths(a, b, max_paths)? {
                out.push(GsnrCurve {
                    name: format!("path {a}-{b} via {}", p.lines.join("+")),
                    gsnr_db: phy.path_gsnr(&p)?,
                });
            }
        }
    }
    Ok(out)
}

/// Launch-to-launch loss compensated by in-line amplifier `k` (after span
/// `k`, zero-based) on the fitted line.
pub fn inline_loss_db(line: &OlsDescriptor, k: usize, mid_frequency: f64) -> f64 {
    let a = &line.spans[k];
    let b = &line.spans[k + 1];
    a.output_connector_loss_db
        + a.alpha_db_at(mid_frequency) * a.length_km
        + a.lumped_total_db()
        + b.input_connector_loss_db
}

fn run_checks(session: &Session, recoveries: &[RecoveryReport], issues: &[String]) -> Vec<CheckResult> {
    let mut checks = Vec::new();
    let flat: Vec<String> = session
        .working_points
        .iter()
        .filter(|w| w.flatness_db > 1.0)
        .map(|w| format!("{} spread {:.2} dB", w.ols_id, w.flatness_db))
        .collect();
    checks.push(CheckResult {
        name: "gsnr-flatness".into(),
        passed: flat.is_empty(),
        detail: if flat.is_empty() {
            "every line within 1.0 dB".into()
        } else {
            flat.join("; ")
        },
    });

    let phy = session.controller.phy();
    let mid = phy.plan.center_frequency;
    let mut off = Vec::new();
    for w in &session.working_points {
        let Ok(line) = phy.line(&w.ols_id) else { continue };
        for k in 0..line.inline_amplifiers.len() {
            let loss = inline_loss_db(line, k, mid);
            let gain = w.amplifiers[k + 1].resolved_gain_db;
            if (gain - loss).abs() > 1.5 {
                off.push(format!(
                    "{}/{} gain {gain:.1} dB vs loss {loss:.1} dB",
                    w.ols_id,
                    w.amplifiers[k + 1].amplifier
                ));
            }
        }
    }
    checks.push(CheckResult {
        name: "gain-tracking".into(),
        passed: off.is_empty(),
        detail: if off.is_empty() {
            "in-line gains within 1.5 dB of span loss".into()
        } else {
            off.join("; ")
        },
    });

    checks.push(CheckResult {
        name: "controller-invariants".into(),
        passed: issues.is_empty(),
        detail: if issues.is_empty() {
            "no violations".into()
        } else {
            issues.join("; ")
        },
    });

    let short: Vec<String> = recoveries
        .iter()
        .filter(|r| r.shortfall_gbps > 0)
        .map(|r| format!("{}: {}G not restored", r.link, r.shortfall_gbps))
        .collect();
    checks.push(CheckResult {
        name: "recovery-restores-traffic".into(),
        passed: short.is_empty(),
        detail: if short.is_empty() {
            format!("{} recoveries complete", recoveries.len())
        } else {
            short.join("; ")
        },
    });

    let stages: Vec<String> = recoveries
        .iter()
        .filter(|r| !r.noop)
        .filter(|r| {
            let s = &r.stages;
            let sum = s.topology_update + s.lost_traffic_estimation + s.lpce + s.establishment;
            !(s.topology_update > 0.0 && s.lost_traffic_estimation > 0.0 && (sum - s.total).abs() < 1e-9)
        })
        .map(|r| r.link.clone())
        .collect();
    checks.push(CheckResult {
        name: "recovery-stages".into(),
        passed: stages.is_empty(),
        detail: if stages.is_empty() {
            "stage durations positive and summing to total".into()
        } else {
            stages.join("; ")
        },
    });
    checks
}
