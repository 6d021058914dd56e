//! Run traces and their line-oriented export format.
//!
//! The first line of an exported trace is a JSON header. Every following line
//! is a tab-separated record:
//!
//! ```text
//! tick    subject    kind    digest    status    payload-json
//! ```
//!
//! `kind` is a ledger call (`escrow`, `vote`, ...), `finalize` for the
//! resolution a call caused, or `notify` for a delivery to a party.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::AssetBundle;
use crate::crypto::{sha256, Hash};
use crate::deal::Payoff;
use crate::escrow::{Outcome, Resolution, Wallets};
use crate::ids::{ChainId, ContractId, PartyId};
use crate::ledger::{ChainState, Contract, Entry, Protocol, Tick};

pub const TRACE_FORMAT: &str = "xdeal-trace/1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("run did not terminate: {0} unresolved")]
    NotTerminated(ContractId),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub horizon: Tick,
    pub ended_at: Tick,
    /// Events remained when the horizon was reached.
    pub truncated: bool,
}

/// A party's view of `chain` grew to `len` entries at `tick`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub tick: Tick,
    pub party: PartyId,
    pub chain: ChainId,
    pub len: u64,
    /// Number of entries published run-wide before this delivery.
    pub after: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunTrace {
    pub meta: TraceMeta,
    /// Entries in publication order.
    pub entries: Vec<Entry>,
    pub deliveries: Vec<Delivery>,
    pub initial: BTreeMap<ChainId, Wallets>,
    pub terminal: BTreeMap<ChainId, ChainState>,
}

fn holdings_of(wallets: &BTreeMap<ChainId, Wallets>, party: &PartyId) -> AssetBundle {
    let mut b = AssetBundle::new();
    for w in wallets.values() {
        b.merge(&w.get(party)).expect("chains hold disjoint tokens");
    }
    b
}

impl RunTrace {
    pub fn initial_holdings(&self, party: &PartyId) -> AssetBundle {
        holdings_of(&self.initial, party)
    }

    pub fn terminal_holdings(&self, party: &PartyId) -> AssetBundle {
        let w: BTreeMap<ChainId, Wallets> = self
            .terminal
            .iter()
            .map(|(c, s)| (c.clone(), s.wallets.clone()))
            .collect();
        holdings_of(&w, party)
    }

    pub fn contracts(&self) -> impl Iterator<Item = (ContractId, &Contract)> {
        self.terminal.iter().flat_map(|(chain, s)| {
            s.contracts
                .iter()
                .map(move |(e, c)| (ContractId::new(chain.clone(), e.clone()), c))
        })
    }

    pub fn contract(&self, id: &ContractId) -> Option<&Contract> {
        self.terminal.get(&id.chain)?.contracts.get(&id.escrower)
    }

    pub fn unresolved(&self) -> Vec<ContractId> {
        self.contracts()
            .filter(|(_, c)| c.escrow.resolution == Resolution::Active)
            .map(|(id, _)| id)
            .collect()
    }

    /// Net change in `party`'s holdings over the run. Every contract must be
    /// resolved.
    pub fn payoff_of_run(&self, party: &PartyId) -> Result<Payoff, TraceError> {
        if let Some(id) = self.unresolved().into_iter().next() {
            return Err(TraceError::NotTerminated(id));
        }
        Ok(self.net_change(party))
    }

    /// Like [`RunTrace::payoff_of_run`] but only requires the contracts that
    /// still hold something for `party` to be resolved.
    pub fn payoff_if_resolved(&self, party: &PartyId) -> Result<Payoff, TraceError> {
        for (id, c) in self.contracts() {
            let involved = &id.escrower == party || c.escrow.ownership.parties().contains(party);
            if c.escrow.is_active() && involved {
                return Err(TraceError::NotTerminated(id));
            }
        }
        Ok(self.net_change(party))
    }

    fn net_change(&self, party: &PartyId) -> Payoff {
        Payoff::net(&self.terminal_holdings(party), &self.initial_holdings(party))
    }

    /// Tick and outcome of each contract's finalization.
    pub fn finalizations(&self) -> BTreeMap<ContractId, (Tick, Outcome)> {
        self.entries
            .iter()
            .filter_map(|e| Some((e.contract_id()?, (e.tick, e.finalized?))))
            .collect()
    }

    /// Tick at which the last monitor saw entry `seq` of `chain`.
    pub fn last_notification(&self, chain: &ChainId, seq: u64) -> Option<Tick> {
        let mut first_seen: BTreeMap<&PartyId, Tick> = BTreeMap::new();
        for d in self.deliveries.iter().filter(|d| &d.chain == chain && d.len > seq) {
            first_seen.entry(&d.party).or_insert(d.tick);
        }
        first_seen.values().copied().max()
    }

    pub fn parties_seen(&self) -> BTreeSet<PartyId> {
        self.deliveries.iter().map(|d| d.party.clone()).collect()
    }

    /// Exports the trace, headed by `header`.
    pub fn to_tsv(&self, header: &serde_json::Value) -> String {
        let mut out = serde_json::to_string(header).expect("header serializes");
        out.push('\n');
        let mut deliveries = self.deliveries.iter().peekable();
        let flush = |out: &mut String, upto: u64, deliveries: &mut std::iter::Peekable<std::slice::Iter<'_, Delivery>>| {
            while let Some(d) = deliveries.next_if(|d| d.after <= upto) {
                let digest = self
                    .entry_at(&d.chain, d.len.saturating_sub(1))
                    .map(|e| e.digest.to_string())
                    .unwrap_or_default();
                let payload = serde_json::json!({"chain": d.chain, "len": d.len});
                let _ = writeln!(out, "{}\t{}\tnotify\t{}\t-\t{}", d.tick, d.party, digest, payload);
            }
        };
        for e in &self.entries {
            flush(&mut out, e.index, &mut deliveries);
            let subject = match e.contract_id() {
                Some(id) => id.to_string(),
                None => e.chain.to_string(),
            };
            let status = if e.accepted() { "accepted" } else { "rejected" };
            let json = serde_json::to_string(e).expect("entry serializes");
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                e.tick,
                subject,
                e.payload.kind(),
                e.digest,
                status,
                json
            );
            if let Some(o) = e.finalized {
                let _ = writeln!(
                    out,
                    "{}\t{}\tfinalize\t{}\t{}\t{}",
                    e.tick,
                    subject,
                    finalize_digest(&e.digest, o),
                    resolution_word(o),
                    serde_json::json!({"entry": e.index})
                );
            }
        }
        flush(&mut out, u64::MAX, &mut deliveries);
        out
    }

    fn entry_at(&self, chain: &ChainId, seq: u64) -> Option<&Entry> {
        self.entries
            .iter()
            .find(|e| &e.chain == chain && e.seq == seq)
    }
}

pub fn resolution_word(o: Outcome) -> &'static str {
    match o {
        Outcome::Commit => "committed",
        Outcome::Abort => "aborted",
    }
}

pub fn finalize_digest(entry: &Hash, o: Outcome) -> Hash {
    Hash(sha256(&[&entry.0, resolution_word(o).as_bytes()]))
}

/// One parsed record line.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub line: usize,
    pub tick: Tick,
    pub subject: String,
    pub kind: String,
    pub digest: String,
    pub status: String,
    pub payload: serde_json::Value,
}

/// Splits an exported trace into its header and records.
pub fn parse_tsv(text: &str) -> Result<(serde_json::Value, Vec<Record>), TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(TraceError::Malformed {
        line: 1,
        msg: "empty trace".into(),
    })?;
    let header: serde_json::Value = serde_json::from_str(first).map_err(|e| TraceError::Malformed {
        line: 1,
        msg: format!("bad header: {e}"),
    })?;
    let mut records = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        if l.is_empty() {
            continue;
        }
        let bad = |msg: String| TraceError::Malformed { line, msg };
        let cols: Vec<&str> = l.splitn(6, '\t').collect();
        if cols.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", cols.len())));
        }
        records.push(Record {
            line,
            tick: cols[0].parse().map_err(|e| bad(format!("bad tick: {e}")))?,
            subject: cols[1].to_string(),
            kind: cols[2].to_string(),
            digest: cols[3].to_string(),
            status: cols[4].to_string(),
            payload: serde_json::from_str(cols[5]).map_err(|e| bad(format!("bad payload: {e}")))?,
        });
    }
    Ok((header, records))
}
