//! Plain-text tables, JSON and CSV artifacts of a run. Everything here is
//! a pure function of the report, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::emu::EventLog;
use crate::pipeline::RunReport;
use crate::twin::{EdfaMode, FiberSpanParams};

/// Column-aligned table with a header rule.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    fn render(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        // Numeric columns align right, text columns left.
        let numeric: Vec<bool> = (0..widths.len())
            .map(|i| {
                self.rows.iter().all(|r| {
                    r.get(i).is_some_and(|c| {
                        let c = c.trim_start_matches(">=");
                        c == "--" || c.parse::<f64>().is_ok()
                    })
                })
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .zip(&numeric)
                .map(|((c, w), &num)| if num { format!("{c:>w$}") } else { format!("{c:<w$}") })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        let rule: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }
}

fn f(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        "--".into()
    }
}

/// Retrieved span parameters next to the emulator's ground truth.
pub fn characterization_table(r: &RunReport) -> String {
    let plan = channel_plan(r);
    let mut t = Table::new(&[
        "LINE",
        "SPAN",
        "L_S[km]",
        "C_R[1/W/km]",
        "D[ps/nm/km]",
        "l(0)[dB]",
        "l(L_S)[dB]",
        "a_mean[dB/km]",
        "rms[dB]",
        "C_R true",
        "l(0) true",
        "l(L_S) true",
        "a_mean true",
    ]);
    for c in &r.characterization {
        let fit = &c.record.fitted;
        let span = c.record.span_id.rsplit('/').next().unwrap_or("");
        t.row(vec![
            c.line.clone(),
            span.to_string(),
            f(fit.length_km, 1),
            f(fit.raman_efficiency, 3),
            f(fit.dispersion, 1),
            f(fit.input_connector_loss_db, 2),
            f(fit.output_connector_loss_db, 2),
            f(mean_alpha(fit, &plan), 4),
            f(c.record.residual_rms_db, 3),
            f(c.truth.raman_efficiency, 3),
            f(c.truth.input_connector_loss_db, 2),
            f(c.truth.output_connector_loss_db, 2),
            f(mean_alpha(&c.truth, &plan), 4),
        ]);
    }
    format!("Physical layer characterization\n\n{}", t.render())
}

fn channel_plan(r: &RunReport) -> Vec<f64> {
    r.channel_frequencies_thz.iter().map(|f| f * 1e12).collect()
}

fn mean_alpha(span: &FiberSpanParams, freqs: &[f64]) -> f64 {
    if freqs.is_empty() {
        return f64::NAN;
    }
    freqs.iter().map(|&f| span.alpha_db_at(f)).sum::<f64>() / freqs.len() as f64
}

/// Amplifier settings as applied, with the resolved gain and output power
/// at full load.
pub fn working_point_table(r: &RunReport) -> String {
    let mut t = Table::new(&[
        "LINE",
        "AMPLIFIER",
        "MODE",
        "G[dB]",
        "T[dB]",
        "P_OUT[dBm]",
        "G res[dB]",
        "P_OUT res[dBm]",
    ]);
    for w in &r.working_points {
        for a in &w.amplifiers {
            let s = &a.setting;
            let (mode, g, p) = match s.mode {
                EdfaMode::ConstantGain => ("gain", f(s.gain_db, 1), "--".to_string()),
                EdfaMode::ConstantOutputPower => ("power", "--".to_string(), f(s.output_power_dbm, 1)),
                EdfaMode::AseProbe => ("probe", "--".to_string(), f(s.output_power_dbm, 1)),
            };
            t.row(vec![
                w.ols_id.clone(),
                a.amplifier.clone(),
                mode.into(),
                g,
                f(s.tilt_db, 1),
                p,
                f(a.resolved_gain_db, 2),
                f(a.resolved_output_dbm, 2),
            ]);
        }
    }
    let mut out = format!("EDFA working points\n\n{}\n", t.render());
    let mut s = Table::new(&["LINE", "mean GSNR[dB]", "max-min[dB]", "objective[dB]", "evaluations"]);
    for w in &r.working_points {
        s.row(vec![
            w.ols_id.clone(),
            f(w.mean_gsnr_db, 2),
            f(w.flatness_db, 2),
            f(w.objective_db, 2),
            w.evaluations.to_string(),
        ]);
    }
    out.push_str(&s.render());
    out
}

/// Predicted GSNR against the GSNR recovered from the measured BER.
pub fn performance_table(r: &RunReport) -> String {
    let mut out = String::from("Transmission performance\n");
    let mut phases: Vec<&str> = Vec::new();
    for p in &r.performance {
        if !phases.contains(&p.phase.as_str()) {
            phases.push(&p.phase);
        }
    }
    for phase in phases {
        let mut t = Table::new(&[
            "LP",
            "PATH",
            "CH",
            "f[THz]",
            "TRX",
            "TYPE",
            "FORMAT",
            "PRED[dB]",
            "BER",
            "GSNR[dB]",
            "MARGIN[dB]",
        ]);
        for p in r.performance.iter().filter(|p| p.phase == phase) {
            let bound = if p.at_least { ">=" } else { "" };
            t.row(vec![
                p.lightpath.clone(),
                p.path.join("+"),
                p.channel.to_string(),
                f(p.frequency_thz, 3),
                p.trx.clone(),
                p.trx_type.name().to_string(),
                p.format.name().to_string(),
                f(p.predicted_gsnr_db, 2),
                format!("{:.1e}", p.ber),
                format!("{bound}{}", f(p.estimated_gsnr_db, 2)),
                format!("{bound}{}", f(p.margin_db, 2)),
            ]);
        }
        let _ = write!(out, "\n{phase}\n{}", t.render());
    }
    out
}

/// Emulated duration of each recovery stage.
pub fn recovery_table(r: &RunReport) -> String {
    let mut out = String::from("Lightpath recovery\n");
    for rec in r.recoveries.iter().filter(|r| !r.noop) {
        let s = &rec.stages;
        let mut t = Table::new(&["INTERACTION", "TIME[s]"]);
        for (name, v) in [
            ("Topology Update", s.topology_update),
            ("Lost Traffic Estimation", s.lost_traffic_estimation),
            ("L-PCE", s.lpce),
            ("Lightpath Establishment", s.establishment),
            ("Total Recovery", s.total),
        ] {
            t.row(vec![name.into(), f(v, 3)]);
        }
        let _ = write!(
            out,
            "\n{}: lost {}G, restored {}G, shortfall {}G\n{}",
            rec.link,
            rec.lost_gbps,
            rec.restored_gbps,
            rec.shortfall_gbps,
            t.render()
        );
    }
    out
}

/// One row per curve and channel.
pub fn gsnr_curves_csv(r: &RunReport) -> String {
    let mut out = String::from("curve,channel,frequency_thz,gsnr_db\n");
    for c in &r.curves {
        for (i, g) in c.gsnr_db.iter().enumerate() {
            let freq = r.channel_frequencies_thz.get(i).copied().unwrap_or(f64::NAN);
            let _ = writeln!(out, "{},{i},{freq:.4},{g:.4}", c.name);
        }
    }
    out
}

pub fn checks_table(r: &RunReport) -> String {
    let mut t = Table::new(&["CHECK", "RESULT", "DETAIL"]);
    for c in &r.checks {
        t.row(vec![
            c.name.clone(),
            if c.passed { "PASS" } else { "FAIL" }.into(),
            c.detail.clone(),
        ]);
    }
    t.render()
}

pub const REPORT_FILES: [&str; 8] = [
    "characterization.txt",
    "working_point.txt",
    "performance.txt",
    "recovery.txt",
    "checks.txt",
    "gsnr_curves.csv",
    "report.json",
    "events.jsonl",
];

/// Writes every artifact into `dir`, returning the paths in
/// [`REPORT_FILES`] order.
pub fn write_reports(dir: &Path, report: &RunReport, log: &EventLog) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report).map_err(io::Error::other)? + "\n";
    let mut events = Vec::new();
    log.write_jsonl(&mut events)?;
    let contents: [Vec<u8>; 8] = [
        characterization_table(report).into_bytes(),
        working_point_table(report).into_bytes(),
        performance_table(report).into_bytes(),
        recovery_table(report).into_bytes(),
        checks_table(report).into_bytes(),
        gsnr_curves_csv(report).into_bytes(),
        json.into_bytes(),
        events,
    ];
    let mut paths = Vec::new();
    for (name, body) in REPORT_FILES.iter().zip(contents) {
        let p = dir.join(name);
        fs::write(&p, body)?;
        paths.push(p);
    }
    Ok(paths)
}
