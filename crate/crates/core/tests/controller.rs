mod support;

use lightline_core::oonc::{LightpathState, OoncError, RequestState};
use lightline_core::pipeline::{bring_up, PipelineOptions, Session};
use lightline_core::scenario::{Scenario, BUNDLED_TRIANGLE};
use support::sweep::{audit, cut, sweep};

fn triangle() -> Session {
    bring_up(&Scenario::bundled(), &PipelineOptions::default()).unwrap()
}

#[test]
fn use_case_request_then_cut() {
    let mut s = triangle();
    let out = s.controller.submit_request("A", "C", 400).unwrap();
    assert_eq!(out.lightpaths.len(), 2);
    assert!(out
        .lightpaths
        .iter()
        .all(|l| l.links == ["Line1"] && l.format.rate_gbps() == 200));
    assert!(audit(&mut s.controller).is_empty());

    assert_eq!(cut(&mut s, "Line1"), ["Line1"]);
    let rep = s.controller.handle_failure("Line1").unwrap();
    assert_eq!((rep.lost_gbps, rep.restored_gbps, rep.shortfall_gbps), (400, 400, 0));
    assert_eq!(rep.new_lightpaths.len(), 4);
    assert!(rep
        .new_lightpaths
        .iter()
        .all(|l| l.roadms == ["A", "B", "C"] && l.format.rate_gbps() == 100));
    assert!(audit(&mut s.controller).is_empty(), "{:?}", audit(&mut s.controller));
}

#[test]
fn repeated_failure_report_is_a_noop() {
    let mut s = triangle();
    s.controller.submit_request("A", "C", 400).unwrap();
    cut(&mut s, "Line1");
    let first = s.controller.handle_failure("Line1").unwrap();
    let active = s.controller.active_lightpaths().len();
    let second = s.controller.handle_failure("Line1").unwrap();
    assert!(!first.noop && second.noop);
    assert_eq!(second.lost_gbps, 0);
    assert_eq!(s.controller.active_lightpaths().len(), active);
    // Detection does not report the same cut twice either.
    assert!(s.controller.detect_failures(2).unwrap().is_empty());
}

#[test]
fn cut_of_an_idle_link_loses_nothing() {
    let mut s = triangle();
    s.controller.submit_request("A", "C", 400).unwrap();
    assert_eq!(cut(&mut s, "Line2A"), ["Line2A"]);
    let rep = s.controller.handle_failure("Line2A").unwrap();
    assert_eq!(rep.lost_gbps, 0);
    assert!(rep.affected_requests.is_empty() && rep.new_lightpaths.is_empty());
    assert!(rep.stages.topology_update > 0.0);
    assert_eq!(s.controller.active_lightpaths().len(), 2);
    assert!(audit(&mut s.controller).is_empty());
}

#[test]
fn second_cut_leaves_a_shortfall() {
    let mut s = triangle();
    let req = s.controller.submit_request("A", "C", 400).unwrap().request.id;
    cut(&mut s, "Line1");
    s.controller.handle_failure("Line1").unwrap();
    cut(&mut s, "Line2A");
    let rep = s.controller.handle_failure("Line2A").unwrap();
    assert_eq!(rep.lost_gbps, 400);
    assert_eq!(rep.restored_gbps, 0);
    assert_eq!(rep.shortfall_gbps, 400);
    let r = s.controller.request(&req).unwrap();
    assert_eq!(r.state, RequestState::Failed);
    assert_eq!(r.shortfall_gbps, 400);
    assert!(audit(&mut s.controller).is_empty());
}

#[test]
fn repair_makes_the_link_usable_again() {
    let mut s = triangle();
    cut(&mut s, "Line1");
    s.controller.handle_failure("Line1").unwrap();
    s.emulator().repair_link("Line1").unwrap();
    s.controller.handle_repair("Line1").unwrap();
    s.controller.nos().spend(2.0).unwrap();
    let out = s.controller.submit_request("A", "C", 200).unwrap();
    assert_eq!(out.lightpaths[0].links, ["Line1"]);
    assert!(audit(&mut s.controller).is_empty());
}

#[test]
fn preexisting_channels_are_avoided() {
    let text = format!("{BUNDLED_TRIANGLE}\n[[preexisting]]\nline = \"Line1\"\nchannel = 7\n");
    let scenario = Scenario::parse(&text).unwrap();
    let mut s = bring_up(&scenario, &PipelineOptions::default()).unwrap();
    let abs = s.controller.abstraction().unwrap();
    let line1 = abs.link("Line1").unwrap();
    assert!(abs.slots(7).all(|k| line1.occupancy[k].is_some()));
    let out = s.controller.submit_request("A", "C", 400).unwrap();
    assert_eq!(out.lightpaths.len(), 2);
    assert!(out
        .lightpaths
        .iter()
        .all(|l| !(l.channel == 7 && l.links.contains(&"Line1".to_string()))));
    assert!(audit(&mut s.controller).is_empty());
}

#[test]
fn offline_roadm_blocks_provisioning() {
    let mut s = triangle();
    s.emulator().set_online("B", false).unwrap();
    match s.controller.provision() {
        Err(OoncError::ProvisioningFailed(msg)) => assert!(msg.contains('B'), "{msg}"),
        other => panic!("expected a provisioning failure, got {other:?}"),
    }
}

#[test]
fn refused_tuning_rolls_back() {
    let mut s = triangle();
    s.emulator().set_refuse_tuning("C-T1", true).unwrap();
    let out = s.controller.submit_request("A", "C", 400).unwrap();
    assert!(out.outcomes.iter().any(|o| o.error.is_some()));
    assert!(s.session_log_has("rollback"));
    assert!(audit(&mut s.controller).is_empty(), "{:?}", audit(&mut s.controller));
    // Nothing half-configured stays behind on the devices.
    let emu = s.emulator();
    for lp in s.controller.lightpaths().filter(|l| l.state != LightpathState::Active) {
        assert!(
            emu.trx_tuning(&lp.src_trx).is_none()
                || s.controller.active_lightpaths().iter().any(|a| a.src_trx == lp.src_trx)
        );
    }
}

trait LogExt {
    fn session_log_has(&self, verb: &str) -> bool;
}

impl LogExt for Session {
    fn session_log_has(&self, verb: &str) -> bool {
        self.log.verbs().iter().any(|v| v == verb)
    }
}

#[test]
fn random_operations_keep_invariants() {
    assert_eq!(sweep(0x5eed, 3, 1000), Ok(3000));
}
