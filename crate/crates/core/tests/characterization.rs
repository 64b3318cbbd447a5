use lightline_core::characterization::*;
use lightline_core::twin::*;
use lightline_core::units::{dbm_to_watt, watt_to_dbm, GHZ, THZ};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

fn c_band() -> ChannelPlan {
    build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap()
}

/// Forward generation of the two probes and the OTDR trace from a known span.
fn synthesize(
    truth: &FiberSpanParams,
    plan: &ChannelPlan,
    levels_dbm: [f64; 2],
    ocm_sigma: f64,
    otdr_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> (OtdrTrace, [AseProbeRecord; 2]) {
    let noise = |s: f64, rng: &mut ChaCha8Rng| {
        if s > 0.0 {
            Normal::new(0.0, s).unwrap().sample(rng)
        } else {
            0.0
        }
    };
    // Same averaging of repeated OCM polls as the probe sequence performs.
    let reads = CharacterizationConfig::default().ocm_reads;
    let poll = |clean: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        clean
            .iter()
            .map(|&p| {
                let sum: f64 = (0..reads)
                    .map(|_| dbm_to_watt(watt_to_dbm(p) + noise(ocm_sigma, rng)))
                    .sum();
                watt_to_dbm(sum / reads as f64)
            })
            .collect()
    };
    let n = plan.channel_count as f64;
    let probes = [0usize, 1].map(|i| {
        let input = PowerSpectrum::flat(plan, dbm_to_watt(levels_dbm[i]) / n);
        let output = span_transfer(&input, truth).unwrap();
        AseProbeRecord {
            span_id: "S".into(),
            probe_level_index: i as u8,
            input_spectrum_dbm: poll(&input.signal, rng),
            output_spectrum_dbm: poll(&output.signal, rng),
            ocm_sigma_db: ocm_sigma / (reads as f64).sqrt(),
        }
    });
    let mut events = vec![
        OtdrEvent {
            position_km: 0.05,
            loss_db: truth.input_connector_loss_db + noise(otdr_sigma, rng),
        },
        OtdrEvent {
            position_km: truth.length_km - 0.05,
            loss_db: truth.output_connector_loss_db + noise(otdr_sigma, rng),
        },
    ];
    for l in &truth.lumped_losses {
        events.push(OtdrEvent {
            position_km: l.position_km,
            loss_db: l.loss_db,
        });
    }
    let trace = OtdrTrace {
        span_id: "S".into(),
        measured_length_km: truth.length_km,
        events,
        noise_sigma_db: otdr_sigma,
    };
    (trace, probes)
}

fn assert_recovered(truth: &FiberSpanParams, rec: &CharacterizationRecord, plan: &ChannelPlan) {
    let f = &rec.fitted;
    assert_eq!(f.length_km, truth.length_km);
    assert!(
        (f.raman_efficiency - truth.raman_efficiency).abs() <= 0.02,
        "C_R {}",
        f.raman_efficiency
    );
    assert!((f.input_connector_loss_db - truth.input_connector_loss_db).abs() <= 0.1);
    assert!((f.output_connector_loss_db - truth.output_connector_loss_db).abs() <= 0.1);
    for freq in plan.frequencies() {
        let e = (f.alpha_db_at(freq) - truth.alpha_db_at(freq)).abs();
        assert!(e <= 0.005, "alpha error {e} at {freq}");
    }
}

#[test]
fn recovers_line1_span1() {
    let plan = c_band();
    let truth = FiberSpanParams::flat(65.5, 0.20, 0.34, 16.6).with_connectors(5.5, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (trace, probes) = synthesize(&truth, &plan, [22.0, 16.0], 0.0, 0.0, &mut rng);
    let rec = fit_span(&trace, &probes, &plan, &CharacterizationConfig::default(), 0.0).unwrap();
    assert_recovered(&truth, &rec, &plan);
    assert!(rec.residual_rms_db < 1e-3);
}

#[test]
fn recovers_line2b_span5_with_shaped_loss_and_event() {
    let plan = c_band();
    let mut truth = FiberSpanParams::flat(108.3, 0.2, 0.42, 17.8).with_connectors(0.5, 2.3);
    truth.loss_coefficient = PiecewiseLinear::uniform(
        plan.lowest_frequency(),
        plan.highest_frequency(),
        &[0.192, 0.183, 0.179, 0.181, 0.188],
    )
    .unwrap();
    truth.lumped_losses = vec![LumpedLoss {
        position_km: 41.7,
        loss_db: 0.3,
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (trace, probes) = synthesize(&truth, &plan, [22.0, 16.0], 0.0, 0.0, &mut rng);
    let rec = fit_span(&trace, &probes, &plan, &CharacterizationConfig::default(), 0.0).unwrap();
    assert_recovered(&truth, &rec, &plan);
    assert_eq!(rec.fitted.lumped_losses, truth.lumped_losses);
}

#[test]
fn identical_levels_are_rejected() {
    let plan = c_band();
    let truth = FiberSpanParams::flat(65.5, 0.20, 0.34, 16.6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (trace, probes) = synthesize(&truth, &plan, [20.0, 20.0], 0.0, 0.0, &mut rng);
    let err = fit_span(&trace, &probes, &plan, &CharacterizationConfig::default(), 0.0).unwrap_err();
    assert_eq!(err, CharacterizationError::IdenticalProbeLevels("S".into()));
}

#[test]
fn mismatched_span_ids_are_rejected() {
    let plan = c_band();
    let truth = FiberSpanParams::flat(65.5, 0.20, 0.34, 16.6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (trace, mut probes) = synthesize(&truth, &plan, [22.0, 16.0], 0.0, 0.0, &mut rng);
    probes[1].span_id = "other".into();
    assert!(matches!(
        fit_span(&trace, &probes, &plan, &CharacterizationConfig::default(), 0.0),
        Err(CharacterizationError::SpanMismatch { .. })
    ));
}

#[test]
fn fit_is_deterministic() {
    let plan = c_band();
    let truth = FiberSpanParams::flat(80.0, 0.21, 0.4, 16.6).with_connectors(1.0, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (trace, probes) = synthesize(&truth, &plan, [22.0, 16.0], 0.1, 0.05, &mut rng);
    let cfg = CharacterizationConfig::default();
    let a = fit_span(&trace, &probes, &plan, &cfg, 1.0).unwrap();
    let b = fit_span(&trace, &probes, &plan, &cfg, 1.0).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn noisy_telemetry_stays_within_bounds() {
    let plan = c_band();
    let cfg = CharacterizationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut cr_ok, mut conn_ok) = (0, 0);
    let cases = 100;
    for _ in 0..cases {
        let u = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| Uniform::new(lo, hi).unwrap().sample(rng);
        let base = u(0.18, 0.22, &mut rng);
        let knots: Vec<f64> = (0..5).map(|_| base + u(-0.01, 0.01, &mut rng)).collect();
        let mut truth = FiberSpanParams::flat(u(50.0, 110.0, &mut rng), base, u(0.25, 0.5, &mut rng), 16.7)
            .with_connectors(u(0.0, 4.0, &mut rng), u(0.0, 2.5, &mut rng));
        truth.loss_coefficient =
            PiecewiseLinear::uniform(plan.lowest_frequency(), plan.highest_frequency(), &knots).unwrap();
        let (trace, probes) = synthesize(&truth, &plan, [22.0, 16.0], 0.1, 0.1, &mut rng);
        let rec = fit_span(&trace, &probes, &plan, &cfg, 0.0).unwrap();
        if (rec.fitted.raman_efficiency - truth.raman_efficiency).abs() <= 0.05 {
            cr_ok += 1;
        }
        let conn = (rec.fitted.input_connector_loss_db - truth.input_connector_loss_db)
            .abs()
            .max((rec.fitted.output_connector_loss_db - truth.output_connector_loss_db).abs());
        if conn <= 0.3 {
            conn_ok += 1;
        }
    }
    assert!(cr_ok >= 95, "C_R within bound in {cr_ok}/{cases}");
    assert!(conn_ok >= 95, "connectors within bound in {conn_ok}/{cases}");
}

#[test]
fn store_appends_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let store: JsonlStore<CharacterizationRecord> = JsonlStore::open(dir.path().join("db/records.jsonl")).unwrap();
    assert!(store.load().unwrap().is_empty());
    let rec = CharacterizationRecord {
        span_id: "L/1".into(),
        fitted: FiberSpanParams::flat(65.5, 0.2, 0.34, 16.6),
        residual_rms_db: 0.01,
        iterations: 7,
        timestamp: 3.0,
    };
    store.append_all([&rec]).unwrap();
    store.append_all([&rec, &rec]).unwrap();
    assert_eq!(store.load().unwrap(), vec![rec.clone(), rec.clone(), rec]);
}
