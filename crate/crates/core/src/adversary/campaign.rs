//! Seeded random campaigns: many runs, each with its own deal (optionally),
//! adversary assignment and delivery schedule.
//!
//! Run `i` uses a seed derived from `(seed, i)` only, so a campaign gives
//! the same report regardless of thread count.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::gen::{random_scenario, GenParams};
use crate::adversary::{builtin_strategies, Strategy};
use crate::cbc::validator_name;
use crate::ids::PartyId;
use crate::ledger::trace::RunTrace;
use crate::ledger::Payload;
use crate::properties::{self, Status};
use crate::replay;
use crate::report::outcome_word;
use crate::scenario::{CampaignConfig, Scenario};
use crate::sim::{simulate_random, SimError};

/// Per-run seed, independent of scheduling order.
pub fn run_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignViolation {
    pub run: u64,
    pub seed: u64,
    pub adversaries: BTreeMap<PartyId, String>,
    pub properties: Vec<String>,
    /// Exported trace; replaying it reproduces the violation.
    pub trace: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyTally {
    pub pass: u64,
    pub fail: u64,
    pub inapplicable: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub scenario: String,
    pub seed: u64,
    pub runs: u64,
    pub random_deals: bool,
    pub outcomes: BTreeMap<String, u64>,
    pub properties: BTreeMap<String, PropertyTally>,
    /// Runs with at least one deviating party.
    pub adversarial_runs: u64,
    /// Strategy kinds drawn, with counts.
    pub strategies: BTreeMap<String, u64>,
    /// Settle calls whose certificate has at most `f` signatures or a signer
    /// outside the validator set.
    pub forged_certificates: u64,
    /// Of those, how many a contract accepted.
    pub forged_accepted: u64,
    pub violations: Vec<CampaignViolation>,
}

impl CampaignReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut o = String::new();
        let _ = writeln!(
            o,
            "campaign {} (seed {}, {} runs{})",
            self.scenario,
            self.seed,
            self.runs,
            if self.random_deals { ", random deals" } else { "" }
        );
        let _ = writeln!(o, "  adversarial runs: {}", self.adversarial_runs);
        for (k, v) in &self.outcomes {
            let _ = writeln!(o, "  outcome {k:<12} {v}");
        }
        for (k, v) in &self.strategies {
            let _ = writeln!(o, "  strategy {k:<24} {v}");
        }
        for (k, t) in &self.properties {
            let _ = writeln!(
                o,
                "  {k:<18} pass {:>6}  fail {:>4}  n/a {:>6}",
                t.pass, t.fail, t.inapplicable
            );
        }
        if self.forged_certificates > 0 {
            let _ = writeln!(
                o,
                "  forged certificates: {} presented, {} accepted",
                self.forged_certificates, self.forged_accepted
            );
        }
        let _ = writeln!(o, "  violations: {}", self.violations.len());
        for v in &self.violations {
            let _ = writeln!(o, "    run {} (seed {}): {}", v.run, v.seed, v.properties.join(", "));
        }
        o
    }
}

struct RunResult {
    adversaries: BTreeMap<PartyId, Strategy>,
    outcome: &'static str,
    verdicts: Vec<(String, Status)>,
    forged: (u64, u64),
    violation: Option<CampaignViolation>,
}

/// Builds run `index`'s scenario: a fresh deal if asked, then a random
/// subset of parties (never all) under random strategies from `mix`.
pub fn instantiate(base: &Scenario, cfg: &CampaignConfig, seed: u64, index: u64) -> (Scenario, u64) {
    let rs = run_seed(seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(rs);
    let mut s = if cfg.random_deals {
        let params = GenParams {
            cbc_f: base.cbc.as_ref().map(|c| c.f),
            ..GenParams::default()
        };
        random_scenario(&mut rng, base.protocol, &format!("{}-{index}", base.name), params)
    } else {
        let mut s = base.clone();
        s.parties.clear();
        s
    };
    s.explore = None;
    s.campaign = None;
    let n = s.deal.n();
    let count = rng.gen_range(0..n);
    let mut ps = s.deal.parties.clone();
    ps.shuffle(&mut rng);
    for p in ps.into_iter().take(count) {
        let pool: Vec<Strategy> = if cfg.mix.is_empty() {
            builtin_strategies(&s.deal, &p)
        } else {
            cfg.mix
                .iter()
                .filter(|x| x.validate(&s.deal).is_ok())
                .cloned()
                .collect()
        };
        if let Some(st) = pool.choose(&mut rng) {
            s.parties.entry(p).or_default().strategy = st.clone();
        }
    }
    if s.protocol == crate::ledger::Protocol::Cbc {
        let mut c = s.cbc_config();
        let corrupt = rng.gen_range(0..=c.f);
        c.corrupt_validators = (0..corrupt).map(|i| validator_name(0, i)).collect();
        s.cbc = Some(c);
    }
    (s, rs)
}

/// Forged certificates presented in a run, and how many were accepted.
pub fn count_forged(trace: &RunTrace, s: &Scenario) -> (u64, u64) {
    let c = s.cbc_config();
    let size = 3 * c.f + 1;
    let (mut seen, mut accepted) = (0, 0);
    for e in &trace.entries {
        let Payload::Settle { cert } = &e.payload else {
            continue;
        };
        let outsider = cert
            .signatures
            .iter()
            .any(|(v, _)| !(0..size).any(|i| validator_name(cert.epoch, i) == *v));
        if outsider || cert.signatures.len() <= c.f {
            seen += 1;
            accepted += e.accepted() as u64;
        }
    }
    (seen, accepted)
}

fn run_one(base: &Scenario, cfg: &CampaignConfig, seed: u64, index: u64) -> Result<RunResult, SimError> {
    let (s, rs) = instantiate(base, cfg, seed, index);
    let trace = simulate_random(&s, rs)?;
    let verdicts = properties::check_all(&trace, &s);
    let failed: Vec<String> = verdicts
        .iter()
        .filter(|v| v.status == Status::Fail)
        .map(|v| v.property.clone())
        .collect();
    let adversaries: BTreeMap<PartyId, Strategy> = s
        .adversaries()
        .into_iter()
        .map(|p| {
            let st = s.strategy(&p);
            (p, st)
        })
        .collect();
    let violation = (!failed.is_empty()).then(|| CampaignViolation {
        run: index,
        seed: rs,
        adversaries: adversaries.iter().map(|(p, s)| (p.clone(), s.to_string())).collect(),
        properties: failed,
        trace: replay::export(&trace, &s),
    });
    Ok(RunResult {
        adversaries,
        outcome: outcome_word(&trace),
        verdicts: verdicts.into_iter().map(|v| (v.property, v.status)).collect(),
        forged: count_forged(&trace, &s),
        violation,
    })
}

pub fn run_campaign(base: &Scenario, cfg: &CampaignConfig, seed: u64) -> Result<CampaignReport, SimError> {
    base.validate()?;
    let results: Vec<RunResult> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|i| run_one(base, cfg, seed, i))
        .collect::<Result<_, _>>()?;
    let mut report = CampaignReport {
        scenario: base.name.clone(),
        seed,
        runs: results.len() as u64,
        random_deals: cfg.random_deals,
        outcomes: BTreeMap::new(),
        properties: BTreeMap::new(),
        adversarial_runs: 0,
        strategies: BTreeMap::new(),
        forged_certificates: 0,
        forged_accepted: 0,
        violations: Vec::new(),
    };
    for r in results {
        *report.outcomes.entry(r.outcome.to_string()).or_default() += 1;
        if !r.adversaries.is_empty() {
            report.adversarial_runs += 1;
        }
        for st in r.adversaries.values() {
            *report.strategies.entry(st.kind().to_string()).or_default() += 1;
        }
        for (name, status) in r.verdicts {
            let t = report.properties.entry(name).or_default();
            match status {
                Status::Pass => t.pass += 1,
                Status::Fail => t.fail += 1,
                Status::Inapplicable => t.inapplicable += 1,
            }
        }
        report.forged_certificates += r.forged.0;
        report.forged_accepted += r.forged.1;
        report.violations.extend(r.violation);
    }
    Ok(report)
}
