//! Post-hoc property checks over run traces.
//!
//! Every checker is a pure function of `(trace, scenario)`. A failing
//! verdict always carries at least one witness pointing into the trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cbc::{verify_certificate, CbcEntry, Certificate};
use crate::crypto::{Hash, KeyDirectory, KeyPair};
use crate::escrow::{Outcome, Resolution};
use crate::ids::{ContractId, PartyId};
use crate::ledger::schedule::NetworkMode;
use crate::ledger::trace::RunTrace;
use crate::ledger::{ContractExt, Payload, Protocol, Tick};
use crate::scenario::{Scenario, ValidationMode};

pub const SAFETY: &str = "safety";
pub const WEAK_LIVENESS: &str = "weak-liveness";
pub const STRONG_LIVENESS: &str = "strong-liveness";
pub const NO_SPLIT: &str = "no-split-outcome";
pub const CBC_AGREEMENT: &str = "cbc-agreement";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inapplicable,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inapplicable => "N/A",
        })
    }
}

/// A pointer into the trace explaining a verdict.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<PartyId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract: Option<ContractId>,
    /// Run-wide entry index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<u64>,
    pub note: String,
}

impl Witness {
    fn note(note: impl Into<String>) -> Self {
        Self {
            party: None,
            contract: None,
            entry: None,
            note: note.into(),
        }
    }

    fn party(mut self, p: &PartyId) -> Self {
        self.party = Some(p.clone());
        self
    }

    fn contract(mut self, c: &ContractId) -> Self {
        self.contract = Some(c.clone());
        self
    }

    fn entry(mut self, i: u64) -> Self {
        self.entry = Some(i);
        self
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.party {
            write!(f, "{p}: ")?;
        }
        if let Some(c) = &self.contract {
            write!(f, "[{c}] ")?;
        }
        if let Some(e) = self.entry {
            write!(f, "(entry #{e}) ")?;
        }
        f.write_str(&self.note)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub property: String,
    pub status: Status,
    /// Per-party or per-contract detail lines.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Witness>,
}

impl Verdict {
    fn new(property: &str) -> Self {
        Self {
            property: property.to_string(),
            status: Status::Pass,
            details: Vec::new(),
            witnesses: Vec::new(),
        }
    }

    fn inapplicable(property: &str, why: impl Into<String>) -> Self {
        let mut v = Self::new(property);
        v.status = Status::Inapplicable;
        v.details.push(why.into());
        v
    }

    fn fail(&mut self, w: Witness) {
        self.status = Status::Fail;
        self.witnesses.push(w);
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

/// Every compliant party ends with an acceptable payoff. Contracts that do
/// not concern a party may remain unresolved; one that does is a failure.
pub fn check_safety(trace: &RunTrace, s: &Scenario) -> Verdict {
    let mut v = Verdict::new(SAFETY);
    for p in &s.compliant() {
        match trace.payoff_if_resolved(p) {
            Ok(payoff) => {
                let ok = s.deal.is_acceptable(p, &payoff).unwrap_or(false);
                v.details.push(format!(
                    "{p}: {payoff} {}",
                    if ok { "acceptable" } else { "UNACCEPTABLE" }
                ));
                if !ok {
                    v.fail(Witness::note(format!("payoff {payoff} is not acceptable")).party(p));
                }
            }
            Err(e) => {
                v.details.push(format!("{p}: unresolved"));
                v.fail(Witness::note(e.to_string()).party(p));
            }
        }
    }
    v
}

/// Tick by which every compliant party's escrow must be resolved.
pub fn weak_liveness_bound(trace: &RunTrace, s: &Scenario) -> Tick {
    let d = s.delta();
    if s.protocol.is_timelock_family() {
        return s.deal.t0 + s.deal.n() as Tick * d + d;
    }
    let compliant = s.compliant();
    let last_vote = trace
        .entries
        .iter()
        .filter(|e| e.accepted())
        .filter(|e| matches!(&e.payload, Payload::Cbc { entry: CbcEntry::Commit { voter, .. } | CbcEntry::Abort { voter, .. } } if compliant.contains(voter)))
        .map(|e| e.tick)
        .max()
        .unwrap_or(0);
    last_vote.max(s.patience()).max(s.net().gst) + s.grace() + d
}

/// Every escrow created by a compliant party resolves by the bound.
pub fn check_weak_liveness(trace: &RunTrace, s: &Scenario) -> Verdict {
    let mut v = Verdict::new(WEAK_LIVENESS);
    let bound = weak_liveness_bound(trace, s);
    let compliant = s.compliant();
    let fin = trace.finalizations();
    v.details.push(format!("bound: tick {bound}"));
    for (id, c) in trace.contracts() {
        if !compliant.contains(&id.escrower) {
            continue;
        }
        match fin.get(&id) {
            Some(&(t, o)) if t <= bound => {
                v.details.push(format!("{id}: {o:?} at {t}"));
            }
            Some(&(t, _)) => {
                v.fail(Witness::note(format!("resolved at {t}, after {bound}")).contract(&id));
            }
            None => {
                debug_assert_eq!(c.escrow.resolution, Resolution::Active);
                v.fail(Witness::note(format!("still escrowed at end of run (tick {})", trace.meta.ended_at)).contract(&id));
            }
        }
    }
    v
}

/// Why strong liveness does not apply, if it does not.
pub fn strong_liveness_exemption(s: &Scenario) -> Option<String> {
    if !s.adversaries().is_empty() {
        return Some("deviating parties present".into());
    }
    if s.network.model_violation {
        return Some("timing model violated".into());
    }
    if s.network.mode == NetworkMode::SemiSynchronous && s.net().gst > s.deal.t0 {
        return Some("expected-abort: network unsynchronized (GST after t0)".into());
    }
    if s.parties.values().any(|c| c.validation == ValidationMode::Fail) {
        return Some("a party rejects the deal at validation".into());
    }
    None
}

/// With everyone compliant and a synchronous network, every transfer
/// happens. Timelock contracts must also commit by `t0 + N*delta`.
pub fn check_strong_liveness(trace: &RunTrace, s: &Scenario) -> Verdict {
    if let Some(why) = strong_liveness_exemption(s) {
        return Verdict::inapplicable(STRONG_LIVENESS, why);
    }
    let mut v = Verdict::new(STRONG_LIVENESS);
    for p in &s.deal.parties {
        let want = s.deal.all_payoff(p);
        match trace.payoff_of_run(p) {
            Ok(got) if got == want => v.details.push(format!("{p}: All")),
            Ok(got) => v.fail(Witness::note(format!("payoff {got}, expected {want}")).party(p)),
            Err(e) => v.fail(Witness::note(e.to_string()).party(p)),
        }
    }
    let fin = trace.finalizations();
    let deadline = s.deal.t0 + s.deal.n() as Tick * s.delta();
    for id in s.deal.contracts().keys() {
        match fin.get(id) {
            Some((_, Outcome::Abort)) => v.fail(Witness::note("aborted").contract(id)),
            Some(&(t, Outcome::Commit)) if s.protocol.is_timelock_family() && t > deadline => {
                v.fail(Witness::note(format!("committed at {t}, after {deadline}")).contract(id))
            }
            Some(_) => {}
            None => v.fail(Witness::note("never resolved").contract(id)),
        }
    }
    v
}

/// No compliant party sees a contract it pays into commit while a contract
/// it is paid from aborts. Contracts are classified by what the party nets
/// from each one alone, so pass-through brokers are not flagged.
pub fn check_no_split(trace: &RunTrace, s: &Scenario) -> Verdict {
    let mut v = Verdict::new(NO_SPLIT);
    let fin = trace.finalizations();
    let entry_of = |id: &ContractId| {
        trace
            .entries
            .iter()
            .find(|e| e.finalized.is_some() && e.contract_id().as_ref() == Some(id))
            .map(|e| e.index)
    };
    let contracts = s.deal.contracts();
    for p in &s.compliant() {
        let (mut pays, mut paid) = (Vec::new(), Vec::new());
        for id in contracts.keys() {
            let net = s.deal.contract_payoff(p, id);
            match fin.get(id) {
                Some((_, Outcome::Commit)) if !net.outgoing.is_empty() => pays.push(id),
                Some((_, Outcome::Abort)) if !net.incoming.is_empty() => paid.push(id),
                _ => {}
            }
        }
        if let (Some(out), Some(inc)) = (pays.first(), paid.first()) {
            let mut w = Witness::note(format!("{out} (pays) committed but {inc} (paid from) aborted"))
                .party(p)
                .contract(inc);
            w.entry = entry_of(inc);
            v.fail(w);
        }
    }
    v
}

/// Keys as a run under `seed` derives them.
pub fn key_directory(s: &Scenario, seed: u64) -> KeyDirectory {
    let mut keys = KeyDirectory::new();
    for p in &s.deal.parties {
        keys.register_party(p.clone(), &KeyPair::derive(seed, p.as_str()));
    }
    if s.protocol == Protocol::Cbc {
        let c = s.cbc_config();
        crate::cbc::ValidatorService::new(
            seed,
            c.f,
            c.reconfigurations,
            s.reconfigure_at(),
            c.corrupt_validators.iter().cloned().collect(),
            &mut keys,
        );
    }
    keys
}

/// No `(deal, h)` has both a verifiable commit certificate and a verifiable
/// abort certificate among the certificates presented on any chain, and no
/// two CBC contracts of one deal resolve differently.
pub fn check_cbc_agreement(trace: &RunTrace, s: &Scenario) -> Verdict {
    if s.protocol != Protocol::Cbc {
        return Verdict::inapplicable(CBC_AGREEMENT, "not a CBC run");
    }
    let mut v = Verdict::new(CBC_AGREEMENT);
    let keys = key_directory(s, trace.meta.seed);
    let exts: Vec<_> = trace
        .contracts()
        .filter_map(|(_, c)| match &c.ext {
            ContractExt::Cbc(x) => Some((c.escrow.deal.clone(), x.clone())),
            ContractExt::Timelock(_) => None,
        })
        .collect();
    let mut verifiable: BTreeMap<Hash, BTreeMap<Outcome, u64>> = BTreeMap::new();
    for e in &trace.entries {
        let Payload::Settle { cert } = &e.payload else {
            continue;
        };
        if certificate_verifies(cert, &exts, &keys) {
            verifiable
                .entry(cert.statement.h)
                .or_default()
                .entry(cert.statement.status)
                .or_insert(e.index);
        }
    }
    for (h, outs) in &verifiable {
        if outs.len() > 1 {
            let idx = outs.get(&Outcome::Abort).copied().unwrap_or_default();
            v.fail(Witness::note(format!("verifiable commit and abort certificates for {}", h.short())).entry(idx));
        }
    }
    let fin = trace.finalizations();
    let outcomes: BTreeSet<Outcome> = fin.values().map(|(_, o)| *o).collect();
    if outcomes.len() > 1 {
        v.fail(Witness::note("contracts of one deal resolved differently"));
    }
    v.details.push(format!(
        "{} verifiable certificate kind(s)",
        verifiable.values().map(BTreeMap::len).sum::<usize>()
    ));
    v
}

fn certificate_verifies(
    cert: &Certificate,
    exts: &[(crate::ids::DealId, crate::cbc::CbcExt)],
    keys: &KeyDirectory,
) -> bool {
    exts.iter()
        .any(|(deal, x)| verify_certificate(deal, x, cert, keys).is_ok())
}

/// All property verdicts for a run. Runs that break the timing model are
/// reported but never counted as passing or failing.
pub fn check_all(trace: &RunTrace, s: &Scenario) -> Vec<Verdict> {
    let mut out = vec![
        check_safety(trace, s),
        check_weak_liveness(trace, s),
        check_strong_liveness(trace, s),
        check_no_split(trace, s),
        check_cbc_agreement(trace, s),
    ];
    if s.network.model_violation {
        for v in &mut out {
            if v.status != Status::Inapplicable {
                v.details.insert(0, format!("timing model violated; checker said {}", v.status));
                v.status = Status::Inapplicable;
            }
        }
    }
    out
}

/// Overall status: any failure fails; otherwise pass if anything passed.
pub fn summarize(verdicts: &[Verdict]) -> Status {
    if verdicts.iter().any(Verdict::failed) {
        Status::Fail
    } else if verdicts.iter().any(Verdict::passed) {
        Status::Pass
    } else {
        Status::Inapplicable
    }
}
