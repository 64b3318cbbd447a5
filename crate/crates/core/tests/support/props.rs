use lightline_core::lpce::ModulationFormat;
use lightline_core::oonc::rsa::{conflicts, select, Candidate};
use lightline_core::topology::PhyPath;
use lightline_core::twin::*;
use lightline_core::units::{db_to_lin, dbm_to_watt, GHZ, THZ};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

pub fn c_band() -> ChannelPlan {
    build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

prop_compose! {
    pub fn span_params()(
        length in 20.0..130.0f64,
        alpha in 0.16..0.26f64,
        cr in 0.0..0.6f64,
        d in 2.0..21.0f64,
        l0 in 0.0..3.0f64,
        ll in 0.0..3.0f64,
        gamma in 0.8..1.6f64,
    ) -> FiberSpanParams {
        let mut s = FiberSpanParams::flat(length, alpha, cr, d).with_connectors(l0, ll);
        s.gamma = gamma;
        s
    }
}

prop_compose! {
    /// Per-channel powers between -6 and 4 dBm, some channels dark.
    pub fn launch()(levels in prop::collection::vec(prop::option::weighted(0.8, -6.0..4.0f64), 75)) -> Vec<f64> {
        let mut p: Vec<f64> = levels.iter().map(|l| l.map(dbm_to_watt).unwrap_or(0.0)).collect();
        if p.iter().all(|&x| x == 0.0) {
            p[37] = dbm_to_watt(0.0);
        }
        p
    }
}

pub fn amp(id: &str, gain: f64, tilt: f64, nf: f64) -> Amplifier {
    Amplifier {
        id: id.into(),
        model: ParametricEdfa::new(
            EdfaLimits {
                gain_min_db: -10.0,
                gain_max_db: 40.0,
                output_power_max_dbm: 35.0,
                tilt_min_db: -5.0,
                tilt_max_db: 5.0,
                input_floor_dbm: -60.0,
            },
            nf,
        ),
        setting: EdfaOperatingPoint::constant_gain(gain, tilt),
    }
}

pub fn line(spans: &[FiberSpanParams], gains: &[f64], plan: &ChannelPlan) -> OlsDescriptor {
    let mid = plan.frequency(plan.channel_count / 2);
    let n = spans.len();
    OlsDescriptor {
        id: "L".into(),
        from_roadm: "A".into(),
        to_roadm: "B".into(),
        booster: amp("bst", gains[0], 0.0, 5.5),
        spans: spans.to_vec(),
        inline_amplifiers: (0..n - 1)
            .map(|k| {
                amp(
                    &format!("ila{k}"),
                    spans[k].passive_loss_db(mid) + gains[k + 1],
                    0.5,
                    5.0,
                )
            })
            .collect(),
        preamp: amp("pre", spans[n - 1].passive_loss_db(mid), 0.0, 5.0),
    }
}

/// Random candidate sets over simple paths of a random graph on at most
/// four nodes and ten channels.
#[derive(Debug, Clone)]
pub struct RsaCase {
    pub paths: Vec<PhyPath>,
    pub cands: Vec<Candidate>,
    pub need: u32,
    pub budget: usize,
}

pub fn simple_paths(edges: &[(usize, usize)], nodes: usize, src: usize, dst: usize) -> Vec<Vec<usize>> {
    fn walk(
        at: usize,
        dst: usize,
        edges: &[(usize, usize)],
        seen: &mut Vec<bool>,
        used: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if at == dst {
            out.push(used.clone());
            return;
        }
        for (e, &(a, b)) in edges.iter().enumerate() {
            let next = if a == at {
                b
            } else if b == at {
                a
            } else {
                continue;
            };
            if seen[next] {
                continue;
            }
            seen[next] = true;
            used.push(e);
            walk(next, dst, edges, seen, used, out);
            used.pop();
            seen[next] = false;
        }
    }
    let mut seen = vec![false; nodes];
    seen[src] = true;
    let mut out = Vec::new();
    walk(src, dst, edges, &mut seen, &mut Vec::new(), &mut out);
    out.sort_by_key(|p| p.len());
    out
}

pub fn rsa_case() -> impl Strategy<Value = RsaCase> {
    (
        2usize..=4,
        prop::collection::vec(any::<bool>(), 6),
        1usize..=10,
        prop::collection::vec(0u8..4, 80),
        1u32..=8,
        1usize..=5,
    )
        .prop_map(|(nodes, present, channels, cells, units, budget)| {
            let all: Vec<(usize, usize)> = (0..nodes).flat_map(|a| (a + 1..nodes).map(move |b| (a, b))).collect();
            let mut edges: Vec<(usize, usize)> =
                all.iter().zip(&present).filter(|(_, &p)| p).map(|(e, _)| *e).collect();
            if edges.is_empty() {
                edges.push((0, nodes - 1));
            }
            let paths: Vec<PhyPath> = simple_paths(&edges, nodes, 0, nodes - 1)
                .into_iter()
                .take(8)
                .enumerate()
                .map(|(i, es)| PhyPath {
                    id: format!("p{i}"),
                    lines: es.iter().map(|e| format!("L{e}")).collect(),
                    roadms: Vec::new(),
                    length_km: es.len() as f64,
                })
                .collect();
            let mut cands = Vec::new();
            for (p, _) in paths.iter().enumerate() {
                for c in 0..channels {
                    let format = match cells[(p * channels + c) % cells.len()] {
                        0 => None,
                        1 | 2 => Some(ModulationFormat::DpQpsk),
                        _ => Some(ModulationFormat::Dp16Qam),
                    };
                    if let Some(format) = format {
                        cands.push(Candidate {
                            path: p,
                            channel: c,
                            format,
                        });
                    }
                }
            }
            cands.sort_by(|a, b| {
                b.format
                    .cardinality()
                    .cmp(&a.format.cardinality())
                    .then(a.path.cmp(&b.path))
                    .then(a.channel.cmp(&b.channel))
            });
            RsaCase {
                paths,
                cands,
                need: units * 100,
                budget,
            }
        })
}

/// Best (capped rate, fewest lightpaths) over every conflict-free subset.
pub fn oracle(case: &RsaCase) -> (u32, usize) {
    fn go(case: &RsaCase, start: usize, chosen: &mut Vec<usize>, best: &mut (u32, usize)) {
        let rate: u32 = chosen.iter().map(|&i| case.cands[i].format.rate_gbps()).sum();
        let capped = rate.min(case.need);
        if capped > best.0 || (capped == best.0 && chosen.len() < best.1) {
            *best = (capped, chosen.len());
        }
        if chosen.len() == case.budget {
            return;
        }
        for i in start..case.cands.len() {
            if chosen
                .iter()
                .any(|&j| conflicts(&case.cands[i], &case.cands[j], &case.paths))
            {
                continue;
            }
            chosen.push(i);
            go(case, i + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = (0, 0);
    go(case, 0, &mut Vec::new(), &mut best);
    best
}

pub fn nli_cubic(span: FiberSpanParams, p: Vec<f64>, k: f64) -> Result<(), TestCaseError> {
    let plan = c_band();
    let base = PowerSpectrum::from_signal(&plan, p.clone());
    let scaled = PowerSpectrum::from_signal(&plan, p.iter().map(|x| x * k).collect());
    let a = nli_span(&base, &span).unwrap();
    let b = nli_span(&scaled, &span).unwrap();
    for (x, y) in a.iter().zip(&b) {
        prop_assert!(rel(x * k * k * k, *y) < 1e-9, "{x} {y}");
    }
    Ok(())
}

pub fn srs_zero_sum(p: Vec<f64>, cr: f64, leff: f64) -> Result<(), TestCaseError> {
    let plan = c_band();
    let out = srs_exchange(&p, &plan.frequencies(), cr, leff);
    let before: f64 = p.iter().sum();
    let after: f64 = out.iter().sum();
    prop_assert!(rel(before, after) < 1e-9);
    // Power flows towards low frequencies.
    let lo = out[0] / p[0].max(f64::MIN_POSITIVE);
    let hi = out[74] / p[74].max(f64::MIN_POSITIVE);
    if p[0] > 0.0 && p[74] > 0.0 {
        prop_assert!(lo >= hi - 1e-12);
    }
    Ok(())
}

pub fn gsnr_inverse_additive(sig: Vec<f64>, ase: Vec<f64>, nli: Vec<f64>) -> Result<(), TestCaseError> {
    let plan = c_band();
    let s = PowerSpectrum::new(plan, sig.clone(), ase.clone(), nli.clone()).unwrap();
    let g = gsnr(&s).unwrap();
    for i in 0..75 {
        let harmonic = 1.0 / (ase[i] / sig[i] + nli[i] / sig[i]);
        prop_assert!(rel(db_to_lin(g[i]), harmonic) < 1e-12);
    }
    Ok(())
}

pub fn gsnr_monotone(spans: Vec<FiberSpanParams>, offsets: Vec<f64>, launch_dbm: f64) -> Result<(), TestCaseError> {
    let plan = c_band();
    let input = PowerSpectrum::flat_dbm(&plan, launch_dbm);
    let mut prev: Option<Vec<f64>> = None;
    for n in 1..=spans.len() {
        let ols = line(&spans[..n], &offsets, &plan);
        let out = propagate_ols(&input, &ols).unwrap();
        let g = gsnr(&out).unwrap();
        if let Some(p) = &prev {
            for (now, before) in g.iter().zip(p) {
                prop_assert!(*now <= before + 1e-9, "{now} > {before} with {n} spans");
            }
        }
        prev = Some(g);
    }
    Ok(())
}

pub fn rsa_matches_oracle(case: RsaCase) -> Result<(), TestCaseError> {
    let got = select(case.need, &case.paths, &case.cands, case.budget);
    for (i, a) in got.iter().enumerate() {
        for b in &got[i + 1..] {
            prop_assert!(!conflicts(a, b, &case.paths));
        }
    }
    prop_assert!(got.len() <= case.budget);
    let rate: u32 = got.iter().map(|c| c.format.rate_gbps()).sum();
    let (best_rate, best_len) = oracle(&case);
    prop_assert_eq!(rate.min(case.need), best_rate);
    prop_assert_eq!(got.len(), best_len);
    Ok(())
}

pub fn spans() -> impl Strategy<Value = Vec<FiberSpanParams>> {
    prop::collection::vec(span_params(), 2..5)
}

pub fn offsets() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 5)
}

pub fn noise_triplet() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(1e-6..1e-2f64, 75),
        prop::collection::vec(1e-12..1e-4f64, 75),
        prop::collection::vec(1e-12..1e-4f64, 75),
    )
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Every physics and RSA property with its own case count.
pub fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    vec![
        (
            "NLI cubic law",
            run(64, (span_params(), launch(), 0.05..20.0f64), |(s, p, k)| {
                nli_cubic(s, p, k)
            }),
        ),
        (
            "SRS zero-sum",
            run(64, (launch(), 0.0..1.0f64, 1.0..25.0f64), |(p, c, l)| {
                srs_zero_sum(p, c, l)
            }),
        ),
        (
            "GSNR inverse additivity",
            run(64, noise_triplet(), |(s, a, n)| gsnr_inverse_additive(s, a, n)),
        ),
        (
            "GSNR monotone in stages",
            run(64, (spans(), offsets(), -4.0..3.0f64), |(s, o, l)| {
                gsnr_monotone(s, o, l)
            }),
        ),
        ("RSA exhaustive oracle", run(100, rsa_case(), rsa_matches_oracle)),
    ]
}
