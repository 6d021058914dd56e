//! Run reports: a human-readable text form and a structured JSON form
//! carrying the same content.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::cost::{self, BoundCheck, CostPhase, CostReport, GasSchedule};
use crate::crypto::{sha256, Hash};
use crate::escrow::Outcome;
use crate::ledger::trace::RunTrace;
use crate::ledger::{Protocol, Tick};
use crate::properties::{self, Status, Verdict};
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyLine {
    pub party: String,
    pub strategy: String,
    pub payoff: String,
    /// `None` when the payoff cannot be computed yet.
    pub acceptable: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractLine {
    pub contract: String,
    pub resolution: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<Tick>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub outcome: String,
    pub truncated: bool,
    pub ended_at: Tick,
    pub entries: usize,
    pub trace_digest: String,
    pub contracts: Vec<ContractLine>,
    pub parties: Vec<PartyLine>,
    pub verdicts: Vec<Verdict>,
    pub overall: Status,
    pub cost: CostReport,
    pub bounds: Vec<BoundCheck>,
}

/// Digest over every entry digest in run order.
pub fn trace_digest(trace: &RunTrace) -> Hash {
    let parts: Vec<&[u8]> = trace.entries.iter().map(|e| &e.digest.0[..]).collect();
    Hash(sha256(&parts))
}

/// `committed`, `aborted`, `mixed`, or `unresolved`.
pub fn outcome_word(trace: &RunTrace) -> &'static str {
    let fin = trace.finalizations();
    let total = trace.contracts().count();
    let commits = fin.values().filter(|(_, o)| *o == Outcome::Commit).count();
    let aborts = fin.len() - commits;
    if total == 0 {
        "aborted"
    } else if fin.len() < total {
        "unresolved"
    } else if aborts == 0 {
        "committed"
    } else if commits == 0 {
        "aborted"
    } else {
        "mixed"
    }
}

pub fn build(trace: &RunTrace, s: &Scenario, gas: GasSchedule) -> RunReport {
    let fin = trace.finalizations();
    let contracts = trace
        .contracts()
        .map(|(id, _)| match fin.get(&id) {
            Some(&(t, o)) => ContractLine {
                contract: id.to_string(),
                resolution: crate::ledger::trace::resolution_word(o).to_string(),
                at: Some(t),
            },
            None => ContractLine {
                contract: id.to_string(),
                resolution: "active".into(),
                at: None,
            },
        })
        .collect();
    let parties = s
        .deal
        .parties
        .iter()
        .map(|p| {
            let (payoff, acceptable) = match trace.payoff_of_run(p) {
                Ok(po) => {
                    let ok = s.deal.is_acceptable(p, &po).ok();
                    (po.to_string(), ok)
                }
                Err(_) => ("unresolved".to_string(), None),
            };
            PartyLine {
                party: p.to_string(),
                strategy: s.strategy(p).to_string(),
                payoff,
                acceptable,
            }
        })
        .collect();
    let verdicts = properties::check_all(trace, s);
    let overall = properties::summarize(&verdicts);
    let cost = cost::measure(trace, s, gas);
    let bounds = cost::check_asymptotics(&cost);
    RunReport {
        scenario: s.name.clone(),
        protocol: s.protocol,
        seed: trace.meta.seed,
        outcome: outcome_word(trace).to_string(),
        truncated: trace.meta.truncated,
        ended_at: trace.meta.ended_at,
        entries: trace.entries.len(),
        trace_digest: trace_digest(trace).to_string(),
        contracts,
        parties,
        verdicts,
        overall,
        cost,
        bounds,
    }
}

pub fn to_json(r: &RunReport) -> String {
    serde_json::to_string_pretty(r).expect("report serializes")
}

pub fn render_text(r: &RunReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "scenario {} ({}), seed {}", r.scenario, r.protocol.as_str(), r.seed);
    let _ = writeln!(
        o,
        "outcome: {} after {} entries, ended at tick {}{}",
        r.outcome.to_uppercase(),
        r.entries,
        r.ended_at,
        if r.truncated { " (horizon reached)" } else { "" }
    );
    let _ = writeln!(o, "trace digest: {}", r.trace_digest);
    let _ = writeln!(o, "\ncontracts:");
    for c in &r.contracts {
        match c.at {
            Some(t) => {
                let _ = writeln!(o, "  {:<24} {} at {}", c.contract, c.resolution, t);
            }
            None => {
                let _ = writeln!(o, "  {:<24} {}", c.contract, c.resolution);
            }
        }
    }
    let _ = writeln!(o, "\nparties:");
    for p in &r.parties {
        let mark = match p.acceptable {
            Some(true) => "ok",
            Some(false) => "NOT ACCEPTABLE",
            None => "?",
        };
        let _ = writeln!(o, "  {:<8} {:<32} {}  [{mark}]", p.party, p.strategy, p.payoff);
    }
    let _ = writeln!(o, "\nproperties:");
    for v in &r.verdicts {
        let _ = writeln!(o, "  {:<18} {}", v.property, v.status);
        for d in &v.details {
            let _ = writeln!(o, "      {d}");
        }
        for w in &v.witnesses {
            let _ = writeln!(o, "      witness: {w}");
        }
    }
    let _ = writeln!(o, "  overall            {}", r.overall);
    let c = &r.cost;
    let _ = writeln!(
        o,
        "\ncost (write {} gas, signature {} gas):",
        c.schedule.write, c.schedule.sig
    );
    let _ = writeln!(
        o,
        "  {:<24} {:<9} {:>5} {:>8} {:>6} {:>5} {:>9}",
        "contract", "phase", "calls", "rejected", "writes", "sigs", "gas"
    );
    for row in &c.rows {
        let m = &row.meter;
        let _ = writeln!(
            o,
            "  {:<24} {:<9} {:>5} {:>8} {:>6} {:>5} {:>9}",
            row.contract.to_string(),
            row.phase.to_string(),
            m.calls,
            m.rejected,
            m.writes,
            m.sigs,
            row.gas
        );
    }
    for p in [CostPhase::Escrow, CostPhase::Transfer, CostPhase::Commit] {
        let m = c.phase(p);
        let _ = writeln!(
            o,
            "  {:<24} {:<9} {:>5} {:>8} {:>6} {:>5} {:>9}",
            "(all)",
            p.to_string(),
            m.calls,
            m.rejected,
            m.writes,
            m.sigs,
            c.phase_gas(p)
        );
    }
    let _ = writeln!(o, "  total gas: {}", c.total_gas);
    let fmt_d = |d: Option<Tick>| d.map_or("-".to_string(), |x| x.to_string());
    let _ = writeln!(
        o,
        "  latency (ticks, delta = {}): escrow {}, transfer {}, commit {}",
        c.params.delta,
        fmt_d(c.durations.escrow),
        fmt_d(c.durations.transfer),
        fmt_d(c.durations.commit)
    );
    let _ = writeln!(o, "\nbounds:");
    for b in &r.bounds {
        let st = match b.ok {
            Some(true) => "ok".to_string(),
            Some(false) => "EXCEEDED".to_string(),
            None => format!("n/a ({})", b.note.as_deref().unwrap_or("")),
        };
        let _ = writeln!(o, "  {:<30} {:>6} / {:<6} {st}", b.name, b.measured, b.bound);
    }
    o
}

/// Verdict statuses by property name, as embedded in trace headers.
pub fn verdict_summary(verdicts: &[Verdict]) -> BTreeMap<String, Status> {
    verdicts
        .iter()
        .map(|v| (v.property.clone(), v.status))
        .collect()
}
