//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use xdeal_core::adversary::campaign::run_campaign;
use xdeal_core::adversary::explore::{explore, ExploreReport, ExploreVerdict};
use xdeal_core::cbc::{cbc_decide, start_hash, CbcEntry, CbcRecord, Decision};
use xdeal_core::cost::{self, CostPhase, GasSchedule};
use xdeal_core::crypto::Hash;
use xdeal_core::ledger::trace::RunTrace;
use xdeal_core::ledger::{Payload, Protocol};
use xdeal_core::properties::{self, Status};
use xdeal_core::scenario::{CampaignConfig, ExploreConfig};
use xdeal_core::{replay, report, simulate_random, AssetBundle, DealId, Payoff, PartyId, Scenario};

/// Wall-clock limit for a single happy-path run.
const HAPPY_RUN_LIMIT: Duration = Duration::from_secs(1);
/// Combined limit for the randomized campaign plus both explorations.
const SAFETY_SEARCH_LIMIT: Duration = Duration::from_secs(600);
const CAMPAIGN_RUNS: usize = 10_000;
const CAMPAIGN_SEED: u64 = 20_240_601;
/// Largest constant allowed in the CBC commit-latency bound `c * delta`.
const CBC_LATENCY_FACTOR: u64 = 3;
const ORACLE_MAX_VOTES: usize = 8;
const ORACLE_MAX_PARTIES: usize = 4;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn load(name: &str) -> Scenario {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(&p).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn corpus() -> Vec<Scenario> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Scenario::load(p).unwrap()).collect()
}

fn run(s: &Scenario) -> RunTrace {
    simulate_random(s, s.seed).unwrap_or_else(|e| panic!("{}: {e}", s.name))
}

fn bundle(items: &[&str]) -> AssetBundle {
    AssetBundle::parse_items(items).unwrap()
}

fn payoff(incoming: &[&str], outgoing: &[&str]) -> Payoff {
    Payoff {
        incoming: bundle(incoming),
        outgoing: bundle(outgoing),
    }
}

fn status(trace: &RunTrace, s: &Scenario, property: &str) -> Status {
    properties::check_all(trace, s)
        .into_iter()
        .find(|v| v.property == property)
        .map(|v| v.status)
        .unwrap()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn explore_with(s: &Scenario, adversaries: Vec<PartyId>) -> ExploreReport {
    let mut s = s.clone();
    s.parties.clear();
    let cfg = ExploreConfig {
        adversaries,
        ..ExploreConfig::default()
    };
    explore(&s, s.seed, &cfg).unwrap()
}

fn happy_path() -> Outcome {
    let mut notes = Vec::new();
    for name in ["ticket_deal_timelock", "ticket_deal_cbc"] {
        let s = load(name);
        let start = Instant::now();
        let t = run(&s);
        let took = start.elapsed();
        ensure(took < HAPPY_RUN_LIMIT, format!("{name} took {took:?}"))?;
        let carol = t.terminal_holdings(&"carol".into());
        ensure(carol.contains(&bundle(&["#seat-A1@tickets"])), format!("{name}: Carol lacks the ticket"))?;
        ensure(
            t.payoff_of_run(&"bob".into()).unwrap() == payoff(&["100 coin@coins"], &["#seat-A1@tickets"]),
            format!("{name}: Bob's payoff"),
        )?;
        ensure(
            t.payoff_of_run(&"alice".into()).unwrap() == payoff(&["1 coin@coins"], &[]),
            format!("{name}: Alice's payoff"),
        )?;
        for prop in [properties::SAFETY, properties::STRONG_LIVENESS] {
            ensure(status(&t, &s, prop) == Status::Pass, format!("{name}: {prop}"))?;
        }
        notes.push(format!("{} {:.1?}", s.protocol.as_str(), took));
    }
    Ok(notes.join(", "))
}

fn timelock_safety() -> Outcome {
    let start = Instant::now();
    let base = load("ticket_deal_timelock");
    let cfg = CampaignConfig {
        runs: CAMPAIGN_RUNS,
        mix: Vec::new(),
        random_deals: true,
    };
    let c = run_campaign(&base, &cfg, CAMPAIGN_SEED).unwrap();
    let safety_fails = c.properties.get(properties::SAFETY).map_or(0, |t| t.fail);
    ensure(c.runs == CAMPAIGN_RUNS as u64, "campaign ran short")?;
    ensure(safety_fails == 0, format!("{safety_fails} safety violations in the campaign"))?;
    let kinds = c.strategies.len();
    ensure(kinds >= 11, format!("campaign drew only {kinds} strategy kinds"))?;

    let two = load("two_party_swap_timelock");
    let e2 = explore_with(&two, two.deal.parties.clone());
    let three = load("ticket_deal_timelock");
    let e3 = explore_with(&three, three.deal.parties.clone());
    for e in [&e2, &e3] {
        ensure(e.verdict == ExploreVerdict::Safe, format!("{}: {}", e.scenario, e.verdict))?;
    }
    let took = start.elapsed();
    ensure(took < SAFETY_SEARCH_LIMIT, format!("took {took:?}"))?;
    Ok(format!(
        "{} campaign runs ({} adversarial) 0 violations; 2-party SAFE over {} runs, 3-party SAFE over {} runs; {:.1?}",
        c.runs, c.adversarial_runs, e2.runs, e3.runs, took
    ))
}

fn naive_counterexample() -> Outcome {
    let s = load("naive_timeout_regression");
    let e = explore_with(&s, s.deal.parties.clone());
    let m = e.minimal.as_ref().ok_or("no violation found")?;
    ensure(e.verdict == ExploreVerdict::Unsafe, "verdict is not UNSAFE")?;
    ensure(
        m.properties.iter().any(|p| p == properties::NO_SPLIT),
        "minimal violation is not a split outcome",
    )?;
    let back = replay::replay(&m.trace).map_err(|e| e.to_string())?;
    let fin = back.trace.finalizations();
    let split = back.scenario.compliant().into_iter().find(|p| {
        let d = &back.scenario.deal;
        let (mut paid_out, mut refunded_in) = (false, false);
        for (id, (_, o)) in &fin {
            let net = d.contract_payoff(p, id);
            paid_out |= *o == xdeal_core::Outcome::Commit && !net.outgoing.is_empty();
            refunded_in |= *o == xdeal_core::Outcome::Abort && !net.incoming.is_empty();
        }
        paid_out && refunded_in
    });
    let victim = split.ok_or("replayed witness shows no split")?;
    Ok(format!(
        "{} violating runs of {}; minimal: {} with {} slow deliveries, {victim} pays and is refunded nothing",
        e.variants.iter().map(|v| v.violations).sum::<u64>(),
        e.runs,
        m.variant,
        m.choices.iter().filter(|&&c| c != 0).count()
    ))
}

fn weak_liveness() -> Outcome {
    let mut checked = 0u64;
    for name in ["ticket_deal_timelock", "ticket_deal_cbc"] {
        let s = load(name);
        ensure(status(&run(&s), &s, properties::WEAK_LIVENESS) == Status::Pass, name)?;
        checked += 1;
    }
    let base = load("ticket_deal_timelock");
    let cfg = CampaignConfig {
        runs: CAMPAIGN_RUNS,
        mix: Vec::new(),
        random_deals: true,
    };
    let c = run_campaign(&base, &cfg, CAMPAIGN_SEED).unwrap();
    let t = c.properties.get(properties::WEAK_LIVENESS).cloned().unwrap_or_default();
    ensure(t.fail == 0, format!("{} campaign runs miss the bound", t.fail))?;
    checked += t.pass + t.fail;
    for name in ["two_party_swap_timelock", "ticket_deal_timelock", "naive_timeout_regression"] {
        let s = load(name);
        let e = explore_with(&s, s.deal.parties.clone());
        let f = e.failures().get(properties::WEAK_LIVENESS).copied().unwrap_or(0);
        ensure(f == 0, format!("{name}: {f} explored runs miss the bound"))?;
        checked += e.runs;
    }
    Ok(format!("{checked} runs, 0 late resolutions"))
}

fn strong_liveness() -> Outcome {
    let s = load("ticket_deal_timelock");
    let e = explore(&s, s.seed, &ExploreConfig::default()).unwrap();
    let v = &e.variants[0];
    ensure(e.verdict == ExploreVerdict::Safe, format!("{}", e.verdict))?;
    ensure(v.truncated_runs == 0, "truncated runs")?;
    ensure(v.committed == v.runs, format!("{} of {} committed", v.committed, v.runs))?;
    ensure(
        !e.failures().contains_key(properties::STRONG_LIVENESS),
        "a run missed t0 + 3 delta",
    )?;
    Ok(format!(
        "{} schedules, all committed by t0 + {}*delta",
        v.runs,
        s.deal.n()
    ))
}

fn virus_alice() -> Outcome {
    let s = load("virus_alice_timelock");
    let t = run(&s);
    let bob = t.payoff_of_run(&"bob".into()).unwrap();
    let carol = t.payoff_of_run(&"carol".into()).unwrap();
    let alice = t.payoff_of_run(&"alice".into()).unwrap();
    ensure(bob.is_nothing(), format!("Bob: {bob}"))?;
    ensure(carol == s.deal.all_payoff(&"carol".into()), format!("Carol: {carol}"))?;
    ensure(alice == payoff(&["101 c@ccoin"], &["100 b@bcoin"]), format!("Alice: {alice}"))?;
    ensure(status(&t, &s, properties::SAFETY) == Status::Pass, "safety")?;
    Ok(format!("Bob Nothing, Carol All, Alice {alice}"))
}

fn overpay_carol() -> Outcome {
    let s = load("overpay_cbc");
    let t = run(&s);
    let alice = t.payoff_of_run(&"alice".into()).unwrap();
    ensure(alice == payoff(&["901 coin@coins"], &[]), format!("Alice: {alice}"))?;
    ensure(status(&t, &s, properties::SAFETY) == Status::Pass, "safety")?;
    Ok(format!("Alice {alice}"))
}

fn cbc_agreement() -> Outcome {
    let base = load("ticket_deal_cbc");
    ensure(base.cbc_config().f == 1, "base scenario must use f = 1")?;
    let cfg = CampaignConfig {
        runs: CAMPAIGN_RUNS,
        mix: Vec::new(),
        random_deals: true,
    };
    let c = run_campaign(&base, &cfg, CAMPAIGN_SEED ^ 0xcbc).unwrap();
    let t = c.properties.get(properties::CBC_AGREEMENT).cloned().unwrap_or_default();
    ensure(t.fail == 0, format!("{} runs with conflicting certificates", t.fail))?;
    ensure(t.pass == c.runs, "agreement not checked in every run")?;
    ensure(c.forged_certificates > 0, "no forged certificates were presented")?;
    ensure(c.forged_accepted == 0, format!("{} forged certificates accepted", c.forged_accepted))?;

    let s = load("corrupt_validator_forgery_cbc");
    let tr = run(&s);
    let forged: Vec<_> = tr
        .entries
        .iter()
        .filter(|e| matches!(&e.payload, Payload::Settle { cert } if cert.signatures.len() <= 1 || cert.signatures.iter().any(|(v, _)| v.as_str().contains("-validator"))))
        .collect();
    ensure(!forged.is_empty(), "forgery scenario presented no forged certificate")?;
    ensure(forged.iter().all(|e| !e.accepted()), "forgery scenario accepted a forged certificate")?;
    Ok(format!(
        "{} runs, 0 conflicts; {} forged certificates presented, 0 accepted",
        c.runs,
        c.forged_certificates + forged.len() as u64
    ))
}

/// Decides by checking each prefix from scratch: the first prefix that holds
/// every party's commit and no abort commits, and the first prefix that
/// holds an abort aborts.
fn prefix_oracle(votes: &[(usize, bool)], parties: usize) -> Option<(usize, bool)> {
    for len in 1..=votes.len() {
        let prefix = &votes[..len];
        if prefix.iter().any(|&(_, commit)| !commit) {
            return Some((len, false));
        }
        let voters: BTreeSet<usize> = prefix.iter().map(|&(p, _)| p).collect();
        if voters.len() == parties {
            return Some((len, true));
        }
    }
    None
}

/// Depth-first enumeration of every vote log over one plist.
struct Sweep {
    deal: DealId,
    plist: Vec<PartyId>,
    h: Hash,
    votes: Vec<(usize, bool)>,
    log: Vec<CbcRecord>,
    checked: u64,
}

impl Sweep {
    fn new(k: usize) -> Self {
        let deal = DealId::new("d");
        let plist: Vec<PartyId> = (0..k).map(|i| PartyId::new(format!("p{i}"))).collect();
        let h = start_hash(0, &deal, &plist);
        let start = CbcRecord {
            position: 0,
            hash: h,
            entry: CbcEntry::StartDeal {
                deal: deal.clone(),
                plist: plist.clone(),
            },
        };
        Self {
            deal,
            plist,
            h,
            votes: Vec::new(),
            log: vec![start],
            checked: 0,
        }
    }

    fn walk(&mut self) -> Result<(), String> {
        let got = match cbc_decide(&self.log, &self.deal, &self.h).map_err(|e| e.to_string())? {
            Decision::Undecided => None,
            Decision::Committed { position } => Some((position as usize, true)),
            Decision::Aborted { position } => Some((position as usize, false)),
        };
        let want = prefix_oracle(&self.votes, self.plist.len());
        self.checked += 1;
        if got != want {
            return Err(format!("{:?}: got {got:?}, oracle {want:?}", self.votes));
        }
        if self.votes.len() == ORACLE_MAX_VOTES {
            return Ok(());
        }
        for p in 0..self.plist.len() {
            for commit in [true, false] {
                let (deal, h, voter) = (self.deal.clone(), self.h, self.plist[p].clone());
                let entry = if commit {
                    CbcEntry::Commit { deal, h, voter }
                } else {
                    CbcEntry::Abort { deal, h, voter }
                };
                let position = self.log.len() as u64;
                self.votes.push((p, commit));
                self.log.push(CbcRecord {
                    position,
                    hash: Hash([position as u8; 32]),
                    entry,
                });
                let res = self.walk();
                self.votes.pop();
                self.log.pop();
                res?;
            }
        }
        Ok(())
    }
}

fn oracle_equivalence() -> Outcome {
    let mut checked = 0u64;
    for k in 1..=ORACLE_MAX_PARTIES {
        let mut sweep = Sweep::new(k);
        sweep.walk().map_err(|m| format!("{k} parties: {m}"))?;
        checked += sweep.checked;
    }
    Ok(format!(
        "{checked} logs (up to {ORACLE_MAX_VOTES} votes, up to {ORACLE_MAX_PARTIES} parties) agree"
    ))
}

fn gas_constants() -> Outcome {
    let g = GasSchedule::default();
    let tl = load("ticket_deal_timelock");
    let r = cost::measure(&run(&tl), &tl, g);
    for row in &r.rows {
        let per_call = match row.phase {
            CostPhase::Escrow => Some((4, 20_000)),
            CostPhase::Transfer => Some((2, 10_000)),
            CostPhase::Commit => None,
        };
        if let Some((w, gas)) = per_call {
            let m = &row.meter;
            let ok = m.rejected == 0 && m.writes == w * m.calls && row.gas == gas * m.calls;
            ensure(ok, format!("{} {}: {m:?}", row.contract, row.phase))?;
        }
    }
    let (n, m) = (tl.deal.n() as u64, tl.deal.contracts().len() as u64);
    let tl_sigs = r.phase(CostPhase::Commit).sigs;
    ensure(m * n * n == 18, "m * n^2 is not 18 for the ticket deal")?;
    ensure(tl_sigs <= 18, format!("timelock used {tl_sigs} signature checks"))?;

    let cbc = load("ticket_deal_cbc");
    let rc = cost::measure(&run(&cbc), &cbc, g);
    let cbc_sigs = rc.phase(CostPhase::Commit).sigs;
    ensure(cbc_sigs == 4, format!("CBC used {cbc_sigs} signature checks"))?;

    let silent = load("silent_party_timelock");
    let ts = run(&silent);
    let rs = cost::measure(&ts, &silent, g);
    ensure(report::outcome_word(&ts) == "aborted", "silent-party run did not abort")?;
    ensure(rs.phase(CostPhase::Commit).sigs == 0, "silent-party abort verified signatures")?;

    let wh = load("withhold_vote_timelock");
    let tw = run(&wh);
    let rw = cost::measure(&tw, &wh, g);
    ensure(report::outcome_word(&tw) == "aborted", "withheld-vote run did not abort")?;
    for id in wh.deal.contracts().keys() {
        let votes = tw
            .entries
            .iter()
            .filter(|e| e.accepted() && matches!(e.payload, Payload::Vote { .. }) && e.contract_id().as_ref() == Some(id))
            .count() as u64;
        ensure(votes == n - 1, format!("{id} has {votes} accepted votes, want {}", n - 1))?;
    }
    let one_vote = m * (n * g.sig + g.write);
    let (abort_gas, commit_gas) = (rw.phase_gas(CostPhase::Commit), r.phase_gas(CostPhase::Commit));
    ensure(
        abort_gas + one_vote >= commit_gas,
        format!("abort {abort_gas} vs commit {commit_gas}"),
    )?;
    Ok(format!(
        "escrow 4 writes/20000, transfer 2 writes/10000; timelock {tl_sigs} <= 18 sigs; CBC {cbc_sigs} sigs; silent abort 0 sigs; withheld-vote abort {abort_gas} gas vs commit {commit_gas}"
    ))
}

fn delay_bounds() -> Outcome {
    let mut checked = 0;
    for s in corpus() {
        let r = cost::measure(&run(&s), &s, GasSchedule::default());
        if s.protocol == Protocol::Cbc {
            ensure(
                r.params.grace + r.params.delta <= CBC_LATENCY_FACTOR * r.params.delta,
                format!("{}: CBC latency constant exceeds {CBC_LATENCY_FACTOR}", s.name),
            )?;
        }
        for b in cost::check_asymptotics(&r) {
            ensure(b.ok != Some(false), format!("{}: {} = {} > {}", s.name, b.name, b.measured, b.bound))?;
            checked += b.ok.is_some() as u32;
        }
    }
    Ok(format!("{checked} bound checks across the corpus"))
}

fn determinism() -> Outcome {
    let mut n = 0;
    for s in corpus() {
        let (a, b) = (run(&s), run(&s));
        let (ta, tb) = (replay::export(&a, &s), replay::export(&b, &s));
        ensure(ta == tb, format!("{}: traces differ", s.name))?;
        let g = GasSchedule::default();
        let (ra, rb) = (report::to_json(&report::build(&a, &s, g)), report::to_json(&report::build(&b, &s, g)));
        ensure(ra == rb, format!("{}: reports differ", s.name))?;
        let back = replay::replay(&ta).map_err(|e| format!("{}: {e}", s.name))?;
        let rr = report::to_json(&report::build(&back.trace, &back.scenario, g));
        ensure(rr == ra, format!("{}: replayed report differs", s.name))?;
        n += 1;
    }
    Ok(format!("{n} scenarios byte-identical across runs and replay"))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("happy path under both protocols", happy_path),
        ("timelock safety under random and exhaustive adversaries", timelock_safety),
        ("naive-timeout counterexample", naive_counterexample),
        ("weak liveness", weak_liveness),
        ("strong liveness over all compliant schedules", strong_liveness),
        ("virus-Alice reproduction", virus_alice),
        ("overpay-Carol reproduction", overpay_carol),
        ("CBC agreement and forgery rejection", cbc_agreement),
        ("cbc_decide matches the prefix oracle", oracle_equivalence),
        ("gas constants and bounds", gas_constants),
        ("delay bounds across the corpus", delay_bounds),
        ("determinism and replay", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        match res {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{took:.1?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {why} [{took:.1?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
