//! Fixture scenarios against hand-simulated traces.

use splitsim::harness::{load_scenario, run, scenario_to_json, verify, Scenario};
use splitsim::Trace;

fn read(dir: &str, name: &str, ext: &str) -> String {
    let path = format!("{}/tests/{dir}/{name}.{ext}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap()
}

fn fixture(name: &str) -> Scenario {
    load_scenario(&read("fixtures", name, "json")).unwrap()
}

fn check_golden(name: &str) {
    let sc = fixture(name);
    let out = run(&sc).unwrap();
    let want = read("golden", name, "trace");
    assert_eq!(out.trace.to_text(), want);
    let report = verify(&sc, &out.trace);
    assert!(report.passed(), "{}", report.to_json());
    assert!(report.settled());
}

#[test]
fn anti_delta_sacks_matches_golden() {
    check_golden("anti_delta_sacks");
}

#[test]
fn tail_shift_sacks_matches_golden() {
    check_golden("tail_shift_sacks");
}

#[test]
fn guessing_robinson_matches_golden() {
    check_golden("guessing_robinson");
}

#[test]
fn golden_traces_parse_back() {
    for name in ["anti_delta_sacks", "tail_shift_sacks", "guessing_robinson"] {
        let text = read("golden", name, "trace");
        assert_eq!(Trace::from_text(&text).unwrap().to_text(), text);
    }
}

#[test]
fn fixtures_survive_json_round_trip() {
    for name in ["anti_delta_sacks", "tail_shift_sacks", "guessing_robinson"] {
        let sc = fixture(name);
        let again = load_scenario(&scenario_to_json(&sc)).unwrap();
        assert_eq!(again, sc);
        assert_eq!(
            run(&again).unwrap().trace.to_text(),
            run(&sc).unwrap().trace.to_text()
        );
    }
}

#[test]
fn final_state_reflects_the_trace() {
    let sc = fixture("guessing_robinson");
    let out = run(&sc).unwrap();
    assert_eq!(out.final_state.a0, vec![(7, 20)]);
    assert_eq!(out.final_state.a1, vec![(9, 1)]);
    assert_eq!(
        out.final_state.restraints,
        vec![("L:0".to_string(), 2), ("U:0".to_string(), 10)]
    );
    assert!(out.final_state.unsettled.is_empty());
}
