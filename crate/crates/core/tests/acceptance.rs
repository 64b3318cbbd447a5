//! Acceptance criteria for the bundled triangle. Runs without the libtest
//! harness so that every criterion reports a PASS or FAIL line.

mod support;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use lightline_core::emu::{SignalPath, TrxTuning};
use lightline_core::lpce::{FormatThresholds, ModulationFormat};
use lightline_core::oonc::LightpathState;
use lightline_core::pipeline::{bring_up, run, PipelineOptions, RunOutcome, Session};
use lightline_core::scenario::{Scenario, BUNDLED_TRIANGLE};
use lightline_core::topology::PhyPath;

/// Channel indices of the four channels under test.
const CUT: [usize; 4] = [7, 27, 47, 67];

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn session() -> Session {
    bring_up(&Scenario::bundled(), &PipelineOptions::default()).expect("bring-up of the bundled scenario")
}

fn characterization_round_trip() -> Outcome {
    let text = format!(
        "{BUNDLED_TRIANGLE}\n[emulator]\nocm_sigma_db = 0.0\notdr_sigma_db = 0.0\notdr_length_sigma_km = 0.0\nber_jitter_db = 0.0\n"
    );
    let scenario = Scenario::parse(&text).map_err(|e| format!("{e:?}"))?;
    let started = Instant::now();
    let s = bring_up(&scenario, &PipelineOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let freqs = scenario.plan.frequencies();
    ensure(s.characterization.len() == 16, || {
        format!("{} spans characterized", s.characterization.len())
    })?;
    let (mut cr, mut conn, mut alpha) = (0.0f64, 0.0f64, 0.0f64);
    for c in &s.characterization {
        let (f, t) = (&c.record.fitted, &c.truth);
        cr = cr.max((f.raman_efficiency - t.raman_efficiency).abs());
        conn = conn
            .max((f.input_connector_loss_db - t.input_connector_loss_db).abs())
            .max((f.output_connector_loss_db - t.output_connector_loss_db).abs());
        for &fr in &freqs {
            alpha = alpha.max((f.alpha_db_at(fr) - t.alpha_db_at(fr)).abs());
        }
    }
    let detail = format!(
        "worst C_R {cr:.4} 1/W/km, connector {conn:.3} dB, alpha {alpha:.5} dB/km, {:.1} s",
        elapsed.as_secs_f64()
    );
    ensure(
        cr <= 0.02 && conn <= 0.1 && alpha <= 0.005 && elapsed < Duration::from_secs(60),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn lp1() -> PhyPath {
    PhyPath {
        id: "LP1".into(),
        lines: vec!["Line1".into()],
        roadms: vec!["A".into(), "C".into()],
        length_km: 0.0,
    }
}

fn lp2() -> PhyPath {
    PhyPath {
        id: "LP2".into(),
        lines: vec!["Line2A".into(), "Line2B".into()],
        roadms: vec!["A".into(), "B".into(), "C".into()],
        length_km: 0.0,
    }
}

/// Ground-truth GSNR at the channels under test with the working points the
/// optimizer installed.
fn truth_gsnr(s: &Session, path: &PhyPath) -> Result<Vec<f64>, String> {
    let signal = SignalPath {
        lines: path.lines.clone(),
        roadms: path.roadms.clone(),
        far_end: String::new(),
        tuning: TrxTuning {
            format: ModulationFormat::DpQpsk,
            channel: CUT[0],
        },
    };
    let g = s.emulator().path_gsnr(&signal).map_err(|e| e.to_string())?;
    Ok(CUT.iter().map(|&c| g[c]).collect())
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/")
}

fn gsnr_bands(s: &Session) -> Outcome {
    let a = truth_gsnr(s, &lp1())?;
    let b = truth_gsnr(s, &lp2())?;
    let detail = format!("LP1 {} dB, LP2 {} dB", fmt(&a), fmt(&b));
    ensure(a.iter().all(|g| (22.5..=25.5).contains(g)), || {
        format!("LP1 outside [22.5, 25.5]: {detail}")
    })?;
    ensure(b.iter().all(|g| (16.0..=19.5).contains(g)), || {
        format!("LP2 outside [16.0, 19.5]: {detail}")
    })?;
    Ok(detail)
}

/// SNR where the curve crosses the pre-FEC BER, by bisection.
fn crossing(curve: &lightline_core::lpce::TrxB2BCurve, format: ModulationFormat) -> f64 {
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if curve.ber(format, mid).unwrap() > 1e-2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn format_ordering(s: &Session) -> Outcome {
    let ctl = &s.controller;
    let th =
        FormatThresholds::conservative(ctl.curves(), ctl.config().lpce.design_margin_db).map_err(|e| e.to_string())?;
    for f in [ModulationFormat::DpQpsk, ModulationFormat::Dp16Qam] {
        let worst = ctl
            .curves()
            .iter()
            .map(|c| crossing(c, f))
            .fold(f64::NEG_INFINITY, f64::max)
            + ctl.config().lpce.design_margin_db;
        ensure((th.threshold(f) - worst).abs() < 1e-3, || {
            format!(
                "{} threshold {:.3} dB, curve crossing {worst:.3} dB",
                f.name(),
                th.threshold(f)
            )
        })?;
    }
    let predicted = |p: &PhyPath| -> Result<Vec<f64>, String> {
        let g = ctl.phy().path_gsnr(p).map_err(|e| e.to_string())?;
        Ok(CUT.iter().map(|&c| g[c]).collect())
    };
    let (a, b) = (predicted(&lp1())?, predicted(&lp2())?);
    let best = |v: &[f64]| v.iter().map(|&g| th.max_format(g)).collect::<Vec<_>>();
    ensure(best(&a).iter().all(|f| *f == Some(ModulationFormat::Dp16Qam)), || {
        format!("LP1 formats {:?} at {} dB", best(&a), fmt(&a))
    })?;
    ensure(best(&b).iter().all(|f| *f == Some(ModulationFormat::DpQpsk)), || {
        format!("LP2 formats {:?} at {} dB", best(&b), fmt(&b))
    })?;
    Ok(format!(
        "thresholds QPSK {:.2} dB, 16QAM {:.2} dB; LP1 {} dB all DP-16QAM, LP2 {} dB all DP-QPSK",
        th.threshold(ModulationFormat::DpQpsk),
        th.threshold(ModulationFormat::Dp16Qam),
        fmt(&a),
        fmt(&b)
    ))
}

fn use_case(out: &RunOutcome) -> Outcome {
    let r = &out.report;
    let first = r.requests.first().ok_or("no request in the script")?;
    let lps = &first.lightpaths;
    ensure(
        lps.len() == 2
            && lps.iter().all(|l| {
                l.format == ModulationFormat::Dp16Qam && l.links == ["Line1"] && l.state == LightpathState::Active
            }),
        || {
            format!(
                "request served by {:?}",
                lps.iter().map(|l| (l.format, &l.links)).collect::<Vec<_>>()
            )
        },
    )?;
    let rec = r.recoveries.first().ok_or("no recovery")?;
    ensure(
        rec.link == "Line1" && rec.lost_gbps == 400 && rec.restored_gbps == 400,
        || format!("{} lost {} restored {}", rec.link, rec.lost_gbps, rec.restored_gbps),
    )?;
    let active = out.session.controller.active_lightpaths();
    ensure(
        active.len() == 4
            && active
                .iter()
                .all(|l| l.format == ModulationFormat::DpQpsk && l.roadms == ["A", "B", "C"]),
        || {
            format!(
                "active after cut: {:?}",
                active.iter().map(|l| (l.format, &l.roadms)).collect::<Vec<_>>()
            )
        },
    )?;

    // Controller interactions in order, repeats collapsed.
    let mut verbs: Vec<String> = Vec::new();
    for rec in out.log.records().into_iter().filter(|r| r.actor == "oonc") {
        if verbs.last() != Some(&rec.verb) {
            verbs.push(rec.verb);
        }
    }
    let expected = [
        "provision",
        "request",
        "lpce",
        "rsa",
        "deploy",
        "topology_update",
        "lost_traffic_estimation",
        "lpce",
        "establish",
        "rsa",
        "deploy",
    ];
    ensure(verbs == expected, || format!("controller verbs {verbs:?}"))?;
    Ok(format!(
        "2 x DP-16QAM on Line1, then 4 x DP-QPSK via B; {}",
        verbs.join(" > ")
    ))
}

fn recovery_stages(out: &RunOutcome, wall: Duration) -> Outcome {
    let rec = out.report.recoveries.first().ok_or("no recovery")?;
    let s = &rec.stages;
    let parts = [s.topology_update, s.lost_traffic_estimation, s.lpce, s.establishment];
    let sum: f64 = parts.iter().sum();
    ensure(parts.iter().all(|&d| d > 0.0), || {
        format!("non-positive stage in {parts:?}")
    })?;
    ensure((sum - s.total).abs() <= 1e-9 * s.total.max(1.0), || {
        format!("stages sum to {sum}, total {}", s.total)
    })?;
    ensure(wall < Duration::from_secs(5), || {
        format!("pipeline took {:.2} s", wall.as_secs_f64())
    })?;
    Ok(format!(
        "{:.3} + {:.3} + {:.3} + {:.3} = {:.3} s emulated; pipeline wall {:.2} s",
        parts[0],
        parts[1],
        parts[2],
        parts[3],
        s.total,
        wall.as_secs_f64()
    ))
}

fn property_suites() -> Outcome {
    let mut failed = Vec::new();
    let mut names = Vec::new();
    for (name, result) in support::props::run_all() {
        names.push(name);
        if let Err(e) = result {
            failed.push(format!("{name}: {e}"));
        }
    }
    match support::sweep::sweep(0xacce, 3, 1000) {
        Ok(n) => names.push(if n == 3000 {
            "3 x 1000 controller operations"
        } else {
            "controller operations"
        }),
        Err(e) => failed.push(format!("controller sweep: {e}")),
    }
    ensure(failed.is_empty(), || failed.join("; "))?;
    Ok(names.join(", "))
}

fn flatness(s: &Session) -> Outcome {
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for w in &s.working_points {
        ensure(w.gsnr_db.len() == 75, || {
            format!("{} has {} channels", w.ols_id, w.gsnr_db.len())
        })?;
        let max = w.gsnr_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = w.gsnr_db.iter().cloned().fold(f64::INFINITY, f64::min);
        parts.push(format!("{} {:.2} dB", w.ols_id, max - min));
        if max - min > 1.0 {
            bad.push(w.ols_id.clone());
        }
    }
    ensure(s.working_points.len() == 3, || {
        format!("{} lines optimized", s.working_points.len())
    })?;
    ensure(bad.is_empty(), || parts.join(", "))?;
    Ok(parts.join(", "))
}

fn main() -> ExitCode {
    let s = session();
    let started = Instant::now();
    let out = run(&Scenario::bundled(), &PipelineOptions::default());
    let wall = started.elapsed();
    let from_run = |f: &dyn Fn(&RunOutcome) -> Outcome| match &out {
        Ok(o) => f(o),
        Err(e) => Err(format!("run failed: {e}")),
    };

    let results = [
        ("1 characterization round trip", characterization_round_trip()),
        ("2 GSNR prediction bands", gsnr_bands(&s)),
        ("3 format feasibility ordering", format_ordering(&s)),
        ("4 use case", from_run(&|o| use_case(o))),
        ("5 recovery stages", from_run(&|o| recovery_stages(o, wall))),
        ("6 property suites", property_suites()),
        ("7 flatness", flatness(&s)),
    ];
    let mut failures = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failures += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failures, results.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
