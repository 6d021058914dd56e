//! Gas and latency accounting.
//!
//! Costs come from replaying the entry log: each accepted call is charged
//! its storage writes plus the signatures the contract verified. Rejected
//! calls revert and are charged nothing, though they are still counted.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::ContractId;
use crate::ledger::schedule::NetworkMode;
use crate::ledger::trace::RunTrace;
use crate::ledger::{Entry, Payload, Protocol, Tick};
use crate::cbc::CbcEntry;
use crate::scenario::Scenario;

pub const ESCROW_WRITES: u64 = 4;
pub const TRANSFER_WRITES: u64 = 2;
pub const VOTE_WRITES: u64 = 1;
/// Writes to release an escrow to its final owners.
pub const FINALIZE_WRITES: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSchedule {
    #[serde(default = "GasSchedule::default_write")]
    pub write: u64,
    #[serde(default = "GasSchedule::default_sig")]
    pub sig: u64,
}

impl GasSchedule {
    fn default_write() -> u64 {
        5000
    }

    fn default_sig() -> u64 {
        3000
    }
}

impl Default for GasSchedule {
    fn default() -> Self {
        Self {
            write: Self::default_write(),
            sig: Self::default_sig(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostPhase {
    Escrow,
    Transfer,
    Commit,
}

impl fmt::Display for CostPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostPhase::Escrow => "escrow",
            CostPhase::Transfer => "transfer",
            CostPhase::Commit => "commit",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meter {
    pub calls: u64,
    pub rejected: u64,
    pub writes: u64,
    pub sigs: u64,
}

impl Meter {
    pub fn gas(&self, g: &GasSchedule) -> u64 {
        self.writes * g.write + self.sigs * g.sig
    }

    fn add(&mut self, o: &Meter) {
        self.calls += o.calls;
        self.rejected += o.rejected;
        self.writes += o.writes;
        self.sigs += o.sigs;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub contract: ContractId,
    pub phase: CostPhase,
    #[serde(flatten)]
    pub meter: Meter,
    pub gas: u64,
}

/// Measured phase latencies in ticks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Durations {
    pub escrow: Option<Tick>,
    pub transfer: Option<Tick>,
    pub commit: Option<Tick>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params {
    pub protocol: Protocol,
    pub n: usize,
    pub m: usize,
    pub t: usize,
    pub k: usize,
    pub f: usize,
    pub reconfigurations: usize,
    pub delta: Tick,
    /// CBC grace period; zero for timelock runs.
    pub grace: Tick,
    pub synchronous: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: Params,
    pub schedule: GasSchedule,
    pub rows: Vec<CostRow>,
    pub phases: BTreeMap<CostPhase, Meter>,
    pub total: Meter,
    pub total_gas: u64,
    /// Entries on the certified blockchain; they carry no contract gas.
    pub cbc_entries: u64,
    pub durations: Durations,
}

impl CostReport {
    pub fn phase(&self, p: CostPhase) -> Meter {
        self.phases.get(&p).copied().unwrap_or_default()
    }

    pub fn phase_gas(&self, p: CostPhase) -> u64 {
        self.phase(p).gas(&self.schedule)
    }

    pub fn contract_meter(&self, id: &ContractId, p: CostPhase) -> Meter {
        self.rows
            .iter()
            .find(|r| &r.contract == id && r.phase == p)
            .map(|r| r.meter)
            .unwrap_or_default()
    }
}

/// Storage writes and phase an entry is charged to, or `None` for entries
/// outside any escrow contract.
pub fn entry_charge(e: &Entry) -> Option<(CostPhase, Meter)> {
    let accepted = e.accepted();
    let fin = if e.finalized.is_some() { FINALIZE_WRITES } else { 0 };
    let (phase, writes) = match &e.payload {
        Payload::Escrow { .. } => (CostPhase::Escrow, ESCROW_WRITES),
        Payload::Transfer { .. } => (CostPhase::Transfer, TRANSFER_WRITES),
        Payload::Vote { .. } => (CostPhase::Commit, VOTE_WRITES + fin),
        Payload::Timeout { .. } | Payload::Settle { .. } => (CostPhase::Commit, fin),
        Payload::Cbc { .. } => return None,
    };
    let meter = if accepted {
        Meter {
            calls: 1,
            rejected: 0,
            writes,
            sigs: e.sig_checks as u64,
        }
    } else {
        Meter {
            calls: 1,
            rejected: 1,
            ..Meter::default()
        }
    };
    Some((phase, meter))
}

pub fn params(s: &Scenario) -> Params {
    let c = s.cbc_config();
    Params {
        protocol: s.protocol,
        n: s.deal.n(),
        m: s.deal.contracts().len(),
        t: s.deal.t(),
        k: s.deal.k(),
        f: c.f,
        reconfigurations: if s.protocol == Protocol::Cbc { c.reconfigurations } else { 0 },
        delta: s.delta(),
        grace: if s.protocol == Protocol::Cbc { s.grace() } else { 0 },
        synchronous: s.network.mode == NetworkMode::Synchronous && !s.network.model_violation,
    }
}

pub fn measure(trace: &RunTrace, s: &Scenario, schedule: GasSchedule) -> CostReport {
    let mut by: BTreeMap<(ContractId, CostPhase), Meter> = BTreeMap::new();
    let mut cbc_entries = 0;
    for e in &trace.entries {
        match (entry_charge(e), e.contract_id()) {
            (Some((phase, m)), Some(id)) => by.entry((id, phase)).or_default().add(&m),
            _ => cbc_entries += 1,
        }
    }
    let mut phases: BTreeMap<CostPhase, Meter> = BTreeMap::new();
    let mut total = Meter::default();
    let rows = by
        .into_iter()
        .map(|((contract, phase), meter)| {
            phases.entry(phase).or_default().add(&meter);
            total.add(&meter);
            CostRow {
                contract,
                phase,
                meter,
                gas: meter.gas(&schedule),
            }
        })
        .collect();
    CostReport {
        params: params(s),
        schedule,
        rows,
        phases,
        total,
        total_gas: total.gas(&schedule),
        cbc_entries,
        durations: durations(trace, s),
    }
}

/// Phase latencies. Escrow runs from the first escrow call until the last
/// accepted escrow is visible to all its monitors; transfer runs from there
/// until the last accepted transfer is visible; commit runs from `t0`
/// (timelock) or the first CBC vote until the last contract resolves.
pub fn durations(trace: &RunTrace, s: &Scenario) -> Durations {
    let seen = |e: &Entry| trace.last_notification(&e.chain, e.seq).unwrap_or(e.tick).max(e.tick);
    let escrows: Vec<&Entry> = trace
        .entries
        .iter()
        .filter(|e| matches!(e.payload, Payload::Escrow { .. }))
        .collect();
    let first_escrow = escrows.iter().map(|e| e.tick).min();
    let escrow_end = escrows.iter().filter(|e| e.accepted()).map(|e| seen(e)).max();
    let escrow = first_escrow.zip(escrow_end).map(|(a, b)| b - a);
    let transfer_end = trace
        .entries
        .iter()
        .filter(|e| e.accepted() && matches!(e.payload, Payload::Transfer { .. }))
        .map(seen)
        .max();
    let transfer = escrow_end.zip(transfer_end).map(|(a, b)| b.saturating_sub(a));
    let last_final = trace.finalizations().values().map(|(t, _)| *t).max();
    let commit_start = if s.protocol.is_timelock_family() {
        Some(s.deal.t0)
    } else {
        trace
            .entries
            .iter()
            .filter(|e| e.accepted())
            .filter(|e| {
                matches!(
                    &e.payload,
                    Payload::Cbc {
                        entry: CbcEntry::Commit { .. } | CbcEntry::Abort { .. }
                    }
                )
            })
            .map(|e| e.tick)
            .min()
    };
    let commit = commit_start
        .zip(last_final)
        .map(|(a, b)| b.saturating_sub(a));
    Durations {
        escrow,
        transfer,
        commit,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: u64,
    pub bound: u64,
    /// `None` when the bound does not apply to this run.
    pub ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundCheck {
    fn le(name: &str, measured: u64, bound: u64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            ok: Some(measured <= bound),
            note: None,
        }
    }

    fn skip(mut self, why: &str) -> Self {
        self.ok = None;
        self.note = Some(why.into());
        self
    }
}

/// Checks measured costs against the closed-form bounds for the run's
/// parameters.
pub fn check_asymptotics(r: &CostReport) -> Vec<BoundCheck> {
    let p = &r.params;
    let (n, m, t, k, f) = (p.n as u64, p.m as u64, p.t as u64, p.k as u64, p.f as u64);
    let mut out = vec![
        BoundCheck::le("escrow-writes <= 4m", r.phase(CostPhase::Escrow).writes, ESCROW_WRITES * m),
        BoundCheck::le("transfer-writes <= 2t", r.phase(CostPhase::Transfer).writes, TRANSFER_WRITES * t),
    ];
    let sigs = r.phase(CostPhase::Commit).sigs;
    if p.protocol.is_timelock_family() {
        out.push(BoundCheck::le("commit-sigs <= m*n^2", sigs, m * n * n));
    } else {
        let per = (p.reconfigurations as u64 + 1) * (f + 1);
        out.push(BoundCheck::le("commit-sigs <= m*(k+1)*(f+1)", sigs, m * per));
        let settled = r
            .rows
            .iter()
            .filter(|row| row.phase == CostPhase::Commit && row.meter.writes > 0)
            .count() as u64;
        let mut eq = BoundCheck::le("commit-sigs == m*(f+1)", sigs, m * (f + 1));
        eq.ok = Some(sigs == m * (f + 1));
        if p.reconfigurations > 0 || settled < m {
            eq = eq.skip("reconfigured or not every contract settled");
        }
        out.push(eq);
    }
    let d = p.delta;
    let mut lat = Vec::new();
    if let Some(x) = r.durations.escrow {
        lat.push(BoundCheck::le("escrow-latency <= delta", x, d));
    }
    if let Some(x) = r.durations.transfer {
        lat.push(BoundCheck::le("transfer-latency <= k*delta", x, k * d));
    }
    if let Some(x) = r.durations.commit {
        if p.protocol.is_timelock_family() {
            lat.push(BoundCheck::le("commit-latency <= n*delta", x, n * d));
        } else {
            lat.push(BoundCheck::le("commit-latency <= grace+delta", x, p.grace + d));
        }
    }
    if !p.synchronous {
        lat = lat.into_iter().map(|b| b.skip("network not synchronous")).collect();
    }
    out.extend(lat);
    out
}
