//! Scenario files: ground truth for the emulated network, device data,
//! configuration and a timed script of requests and failures.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::ampopt::OptimizerConfig;
use crate::characterization::{CharacterizationConfig, DeviceDescriptions, LineDevices};
use crate::emu::{DataPlaneSpec, EmuConfig, PreexistingChannel, TrxSpec};
use crate::lpce::{B2BConfig, TrxType};
use crate::oonc::ControllerConfig;
use crate::topology::RoadmDescription;
use crate::twin::{
    Amplifier, ChannelPlan, EdfaLimits, EdfaOperatingPoint, FiberSpanParams, LumpedLoss, OlsDescriptor, ParametricEdfa,
    PiecewiseLinear, DEFAULT_GAMMA,
};
use crate::units::{GHZ, THZ};

/// Problem found while reading a scenario, located by line and field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub center_thz: f64,
    pub spacing_ghz: f64,
    pub channels: usize,
    pub symbol_rate_gbaud: f64,
    #[serde(default = "default_slot_ghz")]
    pub slot_ghz: f64,
}

fn default_slot_ghz() -> f64 {
    12.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub add_loss_db: f64,
    pub express_loss_db: f64,
    pub drop_loss_db: f64,
    /// Transceiver types in slot order; ids are `<node>-T<k>`.
    #[serde(default)]
    pub trxs: Vec<TrxType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifierModel {
    #[serde(flatten)]
    pub limits: EdfaLimits,
    pub noise_figure_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalAmp {
    pub model: String,
    pub output_power_dbm: f64,
    #[serde(default)]
    pub tilt_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanSpec {
    pub length_km: f64,
    pub raman_efficiency: f64,
    pub dispersion: f64,
    pub input_connector_db: f64,
    pub output_connector_db: f64,
    /// Loss coefficient knots, dB/km, spread evenly over the band; the
    /// line's profile when absent.
    #[serde(default)]
    pub alpha_db_per_km: Option<Vec<f64>>,
    #[serde(default)]
    pub lumped: Vec<LumpedLoss>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub booster: TerminalAmp,
    pub preamp: TerminalAmp,
    pub inline_model: String,
    /// Gain the in-line amplifiers hold before optimization.
    #[serde(default = "default_inline_gain")]
    pub inline_gain_db: f64,
    pub alpha_db_per_km: Vec<f64>,
    pub spans: Vec<Spanned<SpanSpec>>,
}

fn default_inline_gain() -> f64 {
    15.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ScriptAction {
    Request {
        src: String,
        dst: String,
        rate_gbps: u32,
    },
    FiberCut {
        link: String,
        #[serde(default)]
        span: Option<usize>,
    },
    Repair {
        link: String,
    },
    /// Requests are numbered in script order, starting at 1.
    Release {
        request: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Emulated seconds after provisioning.
    pub at: f64,
    #[serde(flatten)]
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub plan: PlanSpec,
    #[serde(default)]
    pub trx_launch_dbm: f64,
    pub nodes: Vec<NodeSpec>,
    pub amplifier_models: BTreeMap<String, Spanned<AmplifierModel>>,
    pub lines: Vec<Spanned<LineSpec>>,
    #[serde(default)]
    pub preexisting: Vec<PreexistingChannel>,
    #[serde(default)]
    pub b2b: B2BConfig,
    #[serde(default)]
    pub emulator: EmuConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub characterization: CharacterizationConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub script: Vec<Spanned<ScriptEntry>>,
}

fn default_seed() -> u64 {
    1
}

/// Validated scenario with the derived emulator and device descriptions.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub plan: ChannelPlan,
    pub data_plane: DataPlaneSpec,
    pub devices: DeviceDescriptions,
}

pub const BUNDLED_TRIANGLE: &str = include_str!("../../../scenarios/triangle.toml");

struct Ctx<'a> {
    text: &'a str,
    errors: Vec<ScenarioError>,
}

impl Ctx<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn err(&mut self, at: Option<usize>, field: impl Into<String>, message: impl Into<String>) {
        let line = at.map(|o| self.line_of(o));
        self.errors.push(ScenarioError {
            line,
            field: field.into(),
            message: message.into(),
        });
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Vec<ScenarioError>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            vec![ScenarioError {
                line: None,
                field: path.display().to_string(),
                message: e.to_string(),
            }]
        })?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TRIANGLE).expect("bundled scenario is valid")
    }

    /// Parses and validates; every problem found is reported.
    pub fn parse(text: &str) -> Result<Self, Vec<ScenarioError>> {
        let mut ctx = Ctx {
            text,
            errors: Vec::new(),
        };
        let file: ScenarioFile = match toml::from_str(text) {
            Ok(f) => f,
            Err(e) => {
                let at = e.span().map(|s| s.start);
                ctx.err(at, "scenario", e.message().trim().to_string());
                return Err(ctx.errors);
            }
        };
        let built = build(&file, &mut ctx);
        match built {
            Some((plan, data_plane, devices)) if ctx.errors.is_empty() => Ok(Scenario {
                file,
                plan,
                data_plane,
                devices,
            }),
            _ => Err(ctx.errors),
        }
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    pub fn script(&self) -> Vec<ScriptEntry> {
        self.file.script.iter().map(|s| s.get_ref().clone()).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario serializes")
    }
}

fn build(file: &ScenarioFile, ctx: &mut Ctx) -> Option<(ChannelPlan, DataPlaneSpec, DeviceDescriptions)> {
    let p = &file.plan;
    let plan = match ChannelPlan::new(
        p.center_thz * THZ,
        p.spacing_ghz * GHZ,
        p.channels,
        p.symbol_rate_gbaud * GHZ,
    )
    .and_then(|pl| pl.with_slot_granularity(p.slot_ghz * GHZ))
    {
        Ok(pl) => pl,
        Err(e) => {
            ctx.err(None, "plan", e.to_string());
            return None;
        }
    };

    let mut node_ids = BTreeSet::new();
    let mut roadms = Vec::new();
    let mut trxs = Vec::new();
    for (i, n) in file.nodes.iter().enumerate() {
        if !node_ids.insert(n.id.clone()) {
            ctx.err(None, format!("nodes[{i}].id"), format!("duplicate node {}", n.id));
        }
        for (name, v) in [
            ("add_loss_db", n.add_loss_db),
            ("express_loss_db", n.express_loss_db),
            ("drop_loss_db", n.drop_loss_db),
        ] {
            if !(v >= 0.0) {
                ctx.err(
                    None,
                    format!("nodes[{i}].{name}"),
                    format!("loss must be non-negative, got {v}"),
                );
            }
        }
        roadms.push(RoadmDescription {
            id: n.id.clone(),
            add_loss_db: n.add_loss_db,
            express_loss_db: n.express_loss_db,
            drop_loss_db: n.drop_loss_db,
        });
        for (k, t) in n.trxs.iter().enumerate() {
            trxs.push(TrxSpec {
                id: format!("{}-T{}", n.id, k + 1),
                node: n.id.clone(),
                trx_type: *t,
            });
        }
    }

    for (name, m) in &file.amplifier_models {
        let at = Some(m.span().start);
        if let Err(e) = m.get_ref().limits.validate() {
            ctx.err(at, format!("amplifier_models.{name}"), e);
        }
        let nf = m.get_ref().noise_figure_db;
        if !(3.0..=15.0).contains(&nf) {
            ctx.err(
                at,
                format!("amplifier_models.{name}.noise_figure_db"),
                format!("{nf} dB outside [3, 15]"),
            );
        }
    }
    let model = |name: &str| file.amplifier_models.get(name).map(|m| m.get_ref().clone());

    let mut lines = Vec::new();
    let mut devices = BTreeMap::new();
    let mut line_ids = BTreeSet::new();
    for (i, l) in file.lines.iter().enumerate() {
        let at = Some(l.span().start);
        let l = l.get_ref();
        let field = |f: &str| format!("lines[{i}].{f}");
        if !line_ids.insert(l.id.clone()) {
            ctx.err(at, field("id"), format!("duplicate line {}", l.id));
        }
        for (f, n) in [("from", &l.from), ("to", &l.to)] {
            if !node_ids.contains(n) {
                ctx.err(at, field(f), format!("unknown node {n}"));
            }
        }
        if l.from == l.to {
            ctx.err(at, field("to"), "line loops back to its own node");
        }
        let amp = |ctx: &mut Ctx, id: String, f: &str, name: &str, setting: EdfaOperatingPoint| -> Option<Amplifier> {
            let Some(m) = model(name) else {
                ctx.err(at, format!("lines[{i}].{f}"), format!("unknown amplifier model {name}"));
                return None;
            };
            let check = if setting.output_power_dbm.is_nan() {
                m.limits.check_gain(setting.gain_db)
            } else {
                m.limits.check_output(setting.output_power_dbm)
            }
            .and(m.limits.check_tilt(setting.tilt_db));
            if let Err(e) = check {
                ctx.err(at, format!("lines[{i}].{f}"), e.to_string());
            }
            Some(Amplifier {
                id,
                model: ParametricEdfa::new(m.limits.clone(), m.noise_figure_db),
                setting,
            })
        };
        let booster = amp(
            ctx,
            "BST".into(),
            "booster",
            &l.booster.model,
            EdfaOperatingPoint::constant_output_power(l.booster.output_power_dbm, l.booster.tilt_db),
        );
        let preamp = amp(
            ctx,
            "PRE".into(),
            "preamp",
            &l.preamp.model,
            EdfaOperatingPoint::constant_output_power(l.preamp.output_power_dbm, l.preamp.tilt_db),
        );
        let inline: Vec<Option<Amplifier>> = (1..l.spans.len())
            .map(|k| {
                amp(
                    ctx,
                    format!("ILA{k}"),
                    "inline_model",
                    &l.inline_model,
                    EdfaOperatingPoint::constant_gain(l.inline_gain_db, 0.0),
                )
            })
            .collect();

        let mut spans = Vec::new();
        for (k, s) in l.spans.iter().enumerate() {
            let sat = Some(s.span().start);
            let s = s.get_ref();
            let knots = s.alpha_db_per_km.as_deref().unwrap_or(&l.alpha_db_per_km);
            let alpha = match PiecewiseLinear::uniform(plan.lowest_frequency(), plan.highest_frequency(), knots) {
                Ok(a) => a,
                Err(e) => {
                    ctx.err(sat, format!("lines[{i}].spans[{k}].alpha_db_per_km"), e.to_string());
                    continue;
                }
            };
            let span = FiberSpanParams {
                length_km: s.length_km,
                raman_efficiency: s.raman_efficiency,
                dispersion: s.dispersion,
                loss_coefficient: alpha,
                input_connector_loss_db: s.input_connector_db,
                output_connector_loss_db: s.output_connector_db,
                lumped_losses: s.lumped.clone(),
                gamma: s.gamma.unwrap_or(DEFAULT_GAMMA),
            };
            if let Err(e) = span.validate(&plan) {
                ctx.err(sat, format!("lines[{i}].spans[{k}]"), e.to_string());
            }
            spans.push(span);
        }

        let (Some(booster), Some(preamp)) = (booster, preamp) else {
            continue;
        };
        let Some(inline_amplifiers) = inline.into_iter().collect::<Option<Vec<_>>>() else {
            continue;
        };
        if spans.len() != l.spans.len() {
            continue;
        }
        devices.insert(
            l.id.clone(),
            LineDevices {
                booster: booster.clone(),
                inline_amplifiers: inline_amplifiers.clone(),
                preamp: preamp.clone(),
                dispersion: spans.iter().map(|s| s.dispersion).collect(),
                gamma: spans.iter().map(|s| s.gamma).collect(),
            },
        );
        lines.push(OlsDescriptor {
            id: l.id.clone(),
            from_roadm: l.from.clone(),
            to_roadm: l.to.clone(),
            booster,
            spans,
            inline_amplifiers,
            preamp,
        });
    }

    for (i, p) in file.preexisting.iter().enumerate() {
        if !line_ids.contains(&p.line) {
            ctx.err(
                None,
                format!("preexisting[{i}].line"),
                format!("unknown line {}", p.line),
            );
        }
        if p.channel >= plan.channel_count {
            ctx.err(
                None,
                format!("preexisting[{i}].channel"),
                format!("channel {} outside the plan", p.channel),
            );
        }
    }
    if let Some(ch) = &file.controller.eligible_channels {
        if let Some(c) = ch.iter().find(|&&c| c >= plan.channel_count) {
            ctx.err(
                None,
                "controller.eligible_channels",
                format!("channel {c} outside the plan"),
            );
        }
    }
    if let Err(e) = file.b2b.curve(TrxType::Aco).validate() {
        ctx.err(None, "b2b", e.to_string());
    }

    let mut last: Option<f64> = None;
    let mut requests = 0usize;
    for (i, e) in file.script.iter().enumerate() {
        let at = Some(e.span().start);
        let entry = e.get_ref();
        let field = |f: &str| format!("script[{i}].{f}");
        if !(entry.at >= 0.0) || !entry.at.is_finite() {
            ctx.err(
                at,
                field("at"),
                format!("time must be finite and non-negative, got {}", entry.at),
            );
        }
        if let Some(prev) = last {
            if !(entry.at > prev) {
                ctx.err(
                    at,
                    field("at"),
                    format!("script times must strictly increase ({} after {prev})", entry.at),
                );
            }
        }
        last = Some(entry.at);
        match &entry.action {
            ScriptAction::Request { src, dst, rate_gbps } => {
                requests += 1;
                for (f, n) in [("src", src), ("dst", dst)] {
                    if !node_ids.contains(n) {
                        ctx.err(at, field(f), format!("unknown node {n}"));
                    }
                }
                if src == dst {
                    ctx.err(at, field("dst"), "source and destination coincide");
                }
                if *rate_gbps == 0 || rate_gbps % 100 != 0 {
                    ctx.err(
                        at,
                        field("rate_gbps"),
                        format!("{rate_gbps} is not a positive multiple of 100"),
                    );
                }
            }
            ScriptAction::FiberCut { link, span } => {
                if !line_ids.contains(link) {
                    ctx.err(at, field("link"), format!("unknown line {link}"));
                } else if let Some(s) = span {
                    let n = lines.iter().find(|l| &l.id == link).map(|l| l.spans.len()).unwrap_or(0);
                    if *s >= n {
                        ctx.err(at, field("span"), format!("line {link} has {n} spans"));
                    }
                }
            }
            ScriptAction::Repair { link } => {
                if !line_ids.contains(link) {
                    ctx.err(at, field("link"), format!("unknown line {link}"));
                }
            }
            ScriptAction::Release { request } => {
                if *request == 0 || *request > requests {
                    ctx.err(
                        at,
                        field("request"),
                        format!("no request #{request} earlier in the script"),
                    );
                }
            }
        }
    }

    let data_plane = DataPlaneSpec {
        plan: plan.clone(),
        roadms: roadms.clone(),
        lines,
        trxs,
        preexisting: file.preexisting.clone(),
        b2b: file.b2b.clone(),
        trx_launch_dbm: file.trx_launch_dbm,
    };
    let devices = DeviceDescriptions {
        plan: plan.clone(),
        roadms,
        lines: devices,
        trx_launch_dbm: file.trx_launch_dbm,
    };
    Some((plan, data_plane, devices))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_is_valid() {
        let s = Scenario::bundled();
        assert_eq!(s.data_plane.lines.len(), 3);
        assert_eq!(s.data_plane.lines.iter().map(|l| l.spans.len()).sum::<usize>(), 16);
        assert_eq!(s.data_plane.trxs.len(), 12);
    }

    #[test]
    fn decreasing_script_times_are_reported_with_their_line() {
        let text = BUNDLED_TRIANGLE.replace("at = 60.0", "at = 1.0");
        let errs = Scenario::parse(&text).unwrap_err();
        let e = errs.iter().find(|e| e.field.ends_with(".at")).expect("time error");
        assert!(e.message.contains("strictly increase"));
        let line = e.line.unwrap();
        assert!(
            text.lines().nth(line - 1).unwrap().contains("[[script]]")
                || text.lines().nth(line - 1).unwrap().contains("at =")
        );
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let errs = Scenario::parse("name = \"x\"\nplan = [").unwrap_err();
        assert_eq!(errs[0].line, Some(2));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = BUNDLED_TRIANGLE.replacen("seed =", "sede = 1\nseed =", 1);
        assert!(Scenario::parse(&text).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Scenario::bundled();
        let again = Scenario::parse(&s.to_toml()).unwrap();
        assert_eq!(again.data_plane, s.data_plane);
    }
}
