//! Fixtures shared by the benchmarks.

use lightline_core::characterization::{AseProbeRecord, OtdrEvent, OtdrTrace};
use lightline_core::lpce::ModulationFormat;
use lightline_core::oonc::rsa::Candidate;
use lightline_core::topology::PhyPath;
use lightline_core::twin::{span_transfer, ChannelPlan, FiberSpanParams, PowerSpectrum};
use lightline_core::units::{dbm_to_watt, watt_to_dbm};

/// Noise-free OTDR trace and probe pair of one span.
pub fn synthetic_probes(truth: &FiberSpanParams, plan: &ChannelPlan) -> (OtdrTrace, [AseProbeRecord; 2]) {
    let n = plan.channel_count as f64;
    let probes = [22.0, 16.0].map(|total_dbm: f64| {
        let input = PowerSpectrum::flat(plan, dbm_to_watt(total_dbm) / n);
        let output = span_transfer(&input, truth).expect("valid span");
        let dbm = |v: &[f64]| v.iter().map(|&w| watt_to_dbm(w)).collect();
        AseProbeRecord {
            span_id: "S".into(),
            probe_level_index: if total_dbm > 20.0 { 0 } else { 1 },
            input_spectrum_dbm: dbm(&input.signal),
            output_spectrum_dbm: dbm(&output.signal),
            ocm_sigma_db: 0.0,
        }
    });
    let mut events = vec![OtdrEvent {
        position_km: 0.05,
        loss_db: truth.input_connector_loss_db,
    }];
    events.extend(truth.lumped_losses.iter().map(|l| OtdrEvent {
        position_km: l.position_km,
        loss_db: l.loss_db,
    }));
    events.push(OtdrEvent {
        position_km: truth.length_km - 0.05,
        loss_db: truth.output_connector_loss_db,
    });
    let trace = OtdrTrace {
        span_id: "S".into(),
        measured_length_km: truth.length_km,
        events,
        noise_sigma_db: 0.0,
    };
    (trace, probes)
}

/// RSA instance on a mesh of `links` links: every path crosses two of them,
/// every channel is usable at a format that depends on the path.
pub fn rsa_instance(links: usize, channels: usize) -> (Vec<PhyPath>, Vec<Candidate>) {
    let paths: Vec<PhyPath> = (0..links)
        .map(|i| PhyPath {
            id: format!("p{i}"),
            lines: vec![format!("L{i}"), format!("L{}", (i + 1) % links)],
            roadms: Vec::new(),
            length_km: 100.0 * (i + 1) as f64,
        })
        .collect();
    let mut cands = Vec::new();
    for p in 0..paths.len() {
        for c in 0..channels {
            let format = if (p + c) % 3 == 0 {
                ModulationFormat::Dp16Qam
            } else {
                ModulationFormat::DpQpsk
            };
            cands.push(Candidate {
                path: p,
                channel: c,
                format,
            });
        }
    }
    cands.sort_by(|a, b| {
        b.format
            .cardinality()
            .cmp(&a.format.cardinality())
            .then(a.path.cmp(&b.path))
            .then(a.channel.cmp(&b.channel))
    });
    (paths, cands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lightline_core::characterization::{fit_span, CharacterizationConfig};
    use lightline_core::oonc::rsa::select;
    use lightline_core::units::{GHZ, THZ};

    #[test]
    fn fixtures_are_usable() {
        let plan = lightline_core::twin::build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap();
        let truth = FiberSpanParams::flat(80.0, 0.2, 0.4, 16.7).with_connectors(0.5, 0.5);
        let (trace, probes) = synthetic_probes(&truth, &plan);
        let rec = fit_span(&trace, &probes, &plan, &CharacterizationConfig::default(), 0.0).unwrap();
        assert!((rec.fitted.raman_efficiency - 0.4).abs() < 0.02);
        let (paths, cands) = rsa_instance(6, 8);
        assert!(!select(800, &paths, &cands, 6).is_empty());
    }
}
