//! Expected outcomes and verdicts for every bundled scenario.

use std::path::Path;

use xdeal_core::adversary::explore::{explore, ExploreVerdict};
use xdeal_core::cost::GasSchedule;
use xdeal_core::ledger::trace::RunTrace;
use xdeal_core::properties::{self, Status};
use xdeal_core::{replay, report, simulate_random, Scenario};

use Status::{Fail as F, Inapplicable as NA, Pass as P};

fn load(name: &str) -> Scenario {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(&p).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(s: &Scenario) -> RunTrace {
    simulate_random(s, s.seed).unwrap()
}

/// Outcome word and verdicts in the order safety, weak liveness, strong
/// liveness, no-split, CBC agreement.
const EXPECTED: &[(&str, &str, [Status; 5])] = &[
    ("corrupt_validator_forgery_cbc", "committed", [P, P, NA, P, P]),
    ("last_minute_vote_timelock", "committed", [P, P, NA, P, NA]),
    ("naive_timeout_regression", "mixed", [F, P, NA, F, NA]),
    ("offline_alice_timelock", "aborted", [NA, NA, NA, NA, NA]),
    ("overpay_cbc", "committed", [P, P, NA, P, P]),
    ("semi_sync_delay_storm_cbc", "aborted", [P, P, NA, P, P]),
    ("silent_party_cbc", "aborted", [P, P, NA, P, P]),
    ("silent_party_timelock", "aborted", [P, P, NA, P, NA]),
    ("ticket_deal_cbc", "committed", [P, P, P, P, P]),
    ("ticket_deal_timelock", "committed", [P, P, P, P, NA]),
    ("two_party_swap_cbc", "committed", [P, P, P, P, P]),
    ("two_party_swap_timelock", "committed", [P, P, P, P, NA]),
    ("virus_alice_timelock", "mixed", [P, P, NA, P, NA]),
    ("withhold_vote_timelock", "aborted", [P, P, NA, P, NA]),
];

const ORDER: [&str; 5] = [
    properties::SAFETY,
    properties::WEAK_LIVENESS,
    properties::STRONG_LIVENESS,
    properties::NO_SPLIT,
    properties::CBC_AGREEMENT,
];

#[test]
fn every_scenario_is_listed() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut on_disk: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "toml").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    on_disk.sort();
    let listed: Vec<String> = EXPECTED.iter().map(|e| e.0.to_string()).collect();
    assert_eq!(on_disk, listed);
}

#[test]
fn outcomes_and_verdicts_match() {
    for (name, outcome, want) in EXPECTED {
        let s = load(name);
        s.validate().unwrap();
        let t = run(&s);
        assert_eq!(report::outcome_word(&t), *outcome, "{name}");
        let verdicts = properties::check_all(&t, &s);
        for (prop, status) in ORDER.iter().zip(want) {
            let v = verdicts.iter().find(|v| v.property == *prop).unwrap();
            assert_eq!(v.status, *status, "{name} {prop}: {:?}", v.details);
        }
    }
}

#[test]
fn exports_replay_to_the_same_report() {
    let g = GasSchedule::default();
    for (name, ..) in EXPECTED {
        let s = load(name);
        let t = run(&s);
        let text = replay::export(&t, &s);
        let back = replay::replay(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(report::build(&back.trace, &back.scenario, g), report::build(&t, &s, g), "{name}");
    }
}

#[test]
fn naive_split_hits_carol() {
    let s = load("naive_timeout_regression");
    let t = run(&s);
    let v = properties::check_safety(&t, &s);
    assert_eq!(v.status, Status::Fail);
    assert!(v.witnesses.iter().any(|w| w.party.as_ref().is_some_and(|p| p.as_str() == "carol")));
}

#[test]
fn scenario_explore_tables_give_the_documented_verdicts() {
    for (name, want) in [
        ("naive_timeout_regression", ExploreVerdict::Unsafe),
        ("last_minute_vote_timelock", ExploreVerdict::Safe),
        ("two_party_swap_cbc", ExploreVerdict::Safe),
    ] {
        let s = load(name);
        let cfg = s.explore.clone().unwrap_or_default();
        let r = explore(&s, s.seed, &cfg).unwrap();
        assert_eq!(r.verdict, want, "{name}\n{}", r.render_text());
    }
}

#[test]
fn offline_party_is_reported_as_a_model_violation() {
    let s = load("offline_alice_timelock");
    let t = run(&s);
    assert!(s.network.model_violation);
    for v in properties::check_all(&t, &s) {
        assert_eq!(v.status, Status::Inapplicable, "{}", v.property);
    }
}
