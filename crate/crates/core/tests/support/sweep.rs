use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use lightline_core::emu::{FailureInjection, FailureKind};
use lightline_core::oonc::{Controller, LinkState, RequestState};
use lightline_core::pipeline::{bring_up, PipelineOptions, Session};
use lightline_core::scenario::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cut(session: &mut Session, link: &str) -> Vec<String> {
    let at = session.controller.nos().now().unwrap();
    session
        .emulator()
        .inject_failure(FailureInjection {
            link: link.into(),
            kind: FailureKind::FiberCut,
            at,
            span: None,
        })
        .unwrap();
    session.controller.detect_failures(2).unwrap()
}

/// Independent check of the controller's bookkeeping against its own
/// abstraction and the devices.
pub fn audit(ctl: &mut Controller) -> Vec<String> {
    let mut bad = Vec::new();
    let abs = ctl.abstraction().expect("provisioned").clone();
    let spc = abs.slots_per_channel;
    let active: BTreeMap<String, _> = ctl
        .active_lightpaths()
        .into_iter()
        .map(|l| (l.id.clone(), l.clone()))
        .collect();

    let mut used = BTreeSet::new();
    for lp in active.values() {
        let req = ctl.request(&lp.request_id).expect("owning request");
        if lp.roadms.first() != Some(&req.src) || lp.roadms.last() != Some(&req.dst) {
            bad.push(format!("{} does not join {} and {}", lp.id, req.src, req.dst));
        }
        if lp.roadms.len() != lp.links.len() + 1 {
            bad.push(format!(
                "{} has {} nodes for {} links",
                lp.id,
                lp.roadms.len(),
                lp.links.len()
            ));
        }
        for (k, l) in lp.links.iter().enumerate() {
            let info = abs.link(l).expect("known link");
            let ends: BTreeSet<&str> = [info.a.as_str(), info.b.as_str()].into();
            let hop: BTreeSet<&str> = [lp.roadms[k].as_str(), lp.roadms[k + 1].as_str()].into();
            if ends != hop {
                bad.push(format!("{} hop {k} is not {l}", lp.id));
            }
            if info.state != LinkState::Up {
                bad.push(format!("{} active over failed {l}", lp.id));
            }
            if !used.insert((l.clone(), lp.channel)) {
                bad.push(format!("channel {} double booked on {l}", lp.channel));
            }
            for s in lp.channel * spc..(lp.channel + 1) * spc {
                if info.occupancy[s].as_deref() != Some(lp.id.as_str()) {
                    bad.push(format!("{l} slot {s} not held by {}", lp.id));
                }
            }
        }
    }
    for l in &abs.links {
        for (s, owner) in l.occupancy.iter().enumerate() {
            if let Some(o) = owner.as_deref().filter(|o| o.starts_with("lp-")) {
                if !active.contains_key(o) {
                    bad.push(format!("{} slot {s} held by inactive {o}", l.id));
                }
            }
        }
    }
    for r in ctl.requests() {
        if r.state == RequestState::Released {
            continue;
        }
        let carried: u32 = active
            .values()
            .filter(|l| l.request_id == r.id)
            .map(|l| l.rate_gbps())
            .sum();
        if r.rate_gbps > carried + r.shortfall_gbps {
            bad.push(format!(
                "{} carries {carried}G with shortfall {}G of {}G",
                r.id, r.shortfall_gbps, r.rate_gbps
            ));
        }
    }
    bad.extend(ctl.invariant_violations());
    bad.extend(ctl.reconcile().unwrap());
    bad
}

/// Five ROADMs on a ring plus random chords; every line has one to three
/// short spans.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let nodes = ["N0", "N1", "N2", "N3", "N4"];
    let mut edges: Vec<(usize, usize)> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
    for (a, b) in [(0, 2), (1, 3), (2, 4), (0, 3), (1, 4)] {
        if rng.random_bool(0.4) {
            edges.push((a, b));
        }
    }
    let mut t = String::from("name = \"random\"\nseed = 3\n\n[plan]\ncenter_thz = 193.5\nspacing_ghz = 50.0\nchannels = 75\nsymbol_rate_gbaud = 32.0\n\n");
    for n in nodes {
        let _ = writeln!(t, "[[nodes]]\nid = \"{n}\"\nadd_loss_db = 10.0\nexpress_loss_db = 18.0\ndrop_loss_db = 10.0\ntrxs = [\"DCO\", \"ACO\", \"DCO\", \"ACO\", \"DCO\", \"ACO\"]\n");
    }
    t.push_str(
        "[amplifier_models.BST]\ngain_min_db = 0.0\ngain_max_db = 25.0\noutput_power_max_dbm = 24.0\nnoise_figure_db = 5.5\n\n\
         [amplifier_models.PRE]\ngain_min_db = 5.0\ngain_max_db = 35.0\noutput_power_max_dbm = 24.0\nnoise_figure_db = 5.0\n\n\
         [amplifier_models.ILA]\ngain_min_db = 8.0\ngain_max_db = 25.0\noutput_power_max_dbm = 24.0\nnoise_figure_db = 4.5\n\n",
    );
    for (i, (a, b)) in edges.iter().enumerate() {
        let _ = writeln!(
            t,
            "[[lines]]\nid = \"L{i}\"\nfrom = \"{}\"\nto = \"{}\"\nbooster = {{ model = \"BST\", output_power_dbm = 20.0 }}\npreamp = {{ model = \"PRE\", output_power_dbm = 18.0 }}\ninline_model = \"ILA\"\ninline_gain_db = 11.0\nalpha_db_per_km = [0.2]\nspans = [",
            nodes[*a], nodes[*b]
        );
        for _ in 0..rng.random_range(1..=3) {
            let _ = writeln!(
                t,
                "  {{ length_km = {:.1}, raman_efficiency = 0.4, dispersion = 16.7, input_connector_db = {:.2}, output_connector_db = {:.2} }},",
                rng.random_range(55.0..75.0),
                rng.random_range(0.1..0.8),
                rng.random_range(0.1..0.8)
            );
        }
        t.push_str("]\n\n");
    }
    t.push_str("[controller]\neligible_channels = [3, 11, 19, 27, 35, 43, 51, 59]\n");
    Scenario::parse(&t).unwrap_or_else(|e| panic!("{e:?}\n{t}"))
}

/// Random requests, releases, cuts and repairs on random topologies, audited
/// after every operation. Returns the number of operations run.
pub fn sweep(seed: u64, topologies: usize, ops: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for topology in 0..topologies {
        let scenario = random_scenario(&mut rng);
        let mut s = bring_up(&scenario, &PipelineOptions::default()).map_err(|e| e.to_string())?;
        let nodes: Vec<String> = scenario.file.nodes.iter().map(|n| n.id.clone()).collect();
        let links: Vec<String> = scenario.file.lines.iter().map(|l| l.get_ref().id.clone()).collect();
        let mut failed: BTreeSet<String> = BTreeSet::new();
        let mut served = 0u32;
        for step in 0..ops {
            let roll = rng.random_range(0..100);
            if roll < 45 {
                let a = rng.random_range(0..nodes.len());
                let b = (a + rng.random_range(1..nodes.len())) % nodes.len();
                let rate = 100 * rng.random_range(1..=4);
                let out = s
                    .controller
                    .submit_request(&nodes[a], &nodes[b], rate)
                    .map_err(|e| format!("topology {topology} step {step}: {e}"))?;
                served += out.lightpaths.iter().map(|l| l.rate_gbps()).sum::<u32>();
            } else if roll < 75 {
                let open: Vec<String> = s
                    .controller
                    .requests()
                    .filter(|r| r.state != RequestState::Released)
                    .map(|r| r.id.clone())
                    .collect();
                if !open.is_empty() {
                    let id = &open[rng.random_range(0..open.len())];
                    s.controller
                        .release_request(id)
                        .map_err(|e| format!("topology {topology} step {step}: {e}"))?;
                }
            } else if roll < 88 {
                let up: Vec<&String> = links.iter().filter(|l| !failed.contains(*l)).collect();
                if up.len() > 1 {
                    let l = up[rng.random_range(0..up.len())].clone();
                    let seen = cut(&mut s, &l);
                    if seen != [l.clone()] {
                        return Err(format!(
                            "topology {topology} step {step}: cut of {l} detected as {seen:?}"
                        ));
                    }
                    s.controller
                        .handle_failure(&l)
                        .map_err(|e| format!("topology {topology} step {step}: {e}"))?;
                    failed.insert(l);
                }
            } else if let Some(l) = failed.iter().nth(rng.random_range(0..failed.len().max(1))).cloned() {
                s.emulator()
                    .repair_link(&l)
                    .map_err(|e| format!("topology {topology} step {step}: {e}"))?;
                s.controller
                    .handle_repair(&l)
                    .map_err(|e| format!("topology {topology} step {step}: {e}"))?;
                failed.remove(&l);
            }
            let bad = audit(&mut s.controller);
            if !bad.is_empty() {
                return Err(format!("topology {topology} step {step}: {bad:?}"));
            }
        }
        if served == 0 {
            return Err(format!("topology {topology} never carried traffic"));
        }
    }
    Ok(topologies * ops)
}
