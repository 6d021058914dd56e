//! Simulated blockchains.
//!
//! Each chain is an append-only list of entries plus the state reached after
//! each prefix. Contracts see only their own chain: [`apply`] gets the chain's
//! state, the entry and the contract clock, nothing else.

pub mod schedule;
pub mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::asset::AssetBundle;
use crate::cbc::{contract_settle, definitive_start, start_hash, CbcEntry, CbcExt, CbcRecord, Certificate, ValidatorSet};
use crate::crypto::{sha256, Encoder, Hash, KeyDirectory, PathSignature};
use crate::escrow::{EscrowState, Outcome, Wallets};
use crate::ids::{ChainId, ContractId, DealId, PartyId};
use crate::timelock::{accept_vote, contract_timeout, DeadlineRule, TimelockExt};

/// Logical time.
pub type Tick = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Timelock,
    Cbc,
    /// Timelock with one fixed vote deadline; unsafe on purpose.
    NaiveTimeout,
}

impl Protocol {
    pub fn is_timelock_family(self) -> bool {
        matches!(self, Protocol::Timelock | Protocol::NaiveTimeout)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Timelock => "timelock",
            Protocol::Cbc => "cbc",
            Protocol::NaiveTimeout => "naive-timeout",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Deal parameters handed to a contract at escrow time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "kebab-case")]
pub enum Dinfo {
    Timelock {
        plist: Vec<PartyId>,
        t0: Tick,
        delta: Tick,
        rule: DeadlineRule,
    },
    Cbc {
        plist: Vec<PartyId>,
        h: Hash,
        validators: ValidatorSet,
    },
}

impl Dinfo {
    pub fn plist(&self) -> &[PartyId] {
        match self {
            Dinfo::Timelock { plist, .. } | Dinfo::Cbc { plist, .. } => plist,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "kebab-case")]
pub enum Payload {
    Escrow {
        deal: DealId,
        assets: AssetBundle,
        dinfo: Dinfo,
    },
    Transfer {
        deal: DealId,
        to: PartyId,
        assets: AssetBundle,
    },
    Vote {
        path: PathSignature,
    },
    Timeout {
        deal: DealId,
    },
    Settle {
        cert: Certificate,
    },
    Cbc {
        entry: CbcEntry,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Escrow { .. } => "escrow",
            Payload::Transfer { .. } => "transfer",
            Payload::Vote { .. } => "vote",
            Payload::Timeout { .. } => "timeout",
            Payload::Settle { .. } => "settle",
            Payload::Cbc {
                entry: CbcEntry::StartDeal { .. },
            } => "start-deal",
            Payload::Cbc {
                entry: CbcEntry::Commit { .. },
            } => "commit",
            Payload::Cbc {
                entry: CbcEntry::Abort { .. },
            } => "abort",
        }
    }
}

/// Who published an entry. Timeouts are published by the chain itself.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    Party(PartyId),
    System,
}

const SYSTEM: &str = "@system";

impl Actor {
    pub fn party(&self) -> Option<&PartyId> {
        match self {
            Actor::Party(p) => Some(p),
            Actor::System => None,
        }
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Party(p) => f.write_str(p.as_str()),
            Actor::System => f.write_str(SYSTEM),
        }
    }
}

impl Serialize for Actor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Actor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == SYSTEM {
            Actor::System
        } else {
            Actor::Party(PartyId::from(s))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Status {
    Accepted,
    Rejected(String),
}

impl Status {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Status::Accepted)
    }
}

/// A published ledger entry together with what the chain did with it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    /// Position in the run-wide publication order.
    pub index: u64,
    pub chain: ChainId,
    pub seq: u64,
    pub tick: Tick,
    pub publisher: Actor,
    /// Escrower of the addressed contract, for contract calls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract: Option<PartyId>,
    pub payload: Payload,
    pub status: Status,
    #[serde(default)]
    pub sig_checks: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finalized: Option<Outcome>,
    pub digest: Hash,
}

impl Entry {
    pub fn contract_id(&self) -> Option<ContractId> {
        self.contract
            .as_ref()
            .map(|e| ContractId::new(self.chain.clone(), e.clone()))
    }

    pub fn accepted(&self) -> bool {
        self.status.is_accepted()
    }

    /// Digest over every recorded field except the digest itself.
    #[allow(clippy::too_many_arguments)]
    pub fn compute_digest(
        chain: &ChainId,
        seq: u64,
        tick: Tick,
        publisher: &Actor,
        contract: Option<&PartyId>,
        payload: &Payload,
        status: &Status,
        sig_checks: u32,
        finalized: Option<Outcome>,
    ) -> Hash {
        let mut enc = Encoder::new();
        enc.str(chain.as_str())
            .u64(seq)
            .u64(tick)
            .str(&publisher.to_string())
            .str(contract.map_or("", |c| c.as_str()))
            .str(&serde_json::to_string(payload).expect("payload serializes"))
            .str(&serde_json::to_string(status).expect("status serializes"))
            .u64(sig_checks as u64)
            .str(match finalized {
                None => "",
                Some(Outcome::Commit) => "commit",
                Some(Outcome::Abort) => "abort",
            });
        Hash(sha256(&[&enc.finish()]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "kebab-case")]
pub enum ContractExt {
    Timelock(TimelockExt),
    Cbc(CbcExt),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    pub escrow: EscrowState,
    pub dinfo: Dinfo,
    pub ext: ContractExt,
}

impl Contract {
    pub fn timelock(&self) -> Option<&TimelockExt> {
        match &self.ext {
            ContractExt::Timelock(t) => Some(t),
            ContractExt::Cbc(_) => None,
        }
    }
}

/// The state of one chain after some prefix of its entries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub wallets: Wallets,
    /// Contracts by escrower.
    pub contracts: BTreeMap<PartyId, Contract>,
    /// Accepted entries, when this chain is the certified blockchain.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log: Vec<CbcRecord>,
}

impl ChainState {
    pub fn contract(&self, escrower: &PartyId) -> Option<&Contract> {
        self.contracts.get(escrower)
    }
}

/// The effect of applying one entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Applied {
    pub status: Status,
    pub sig_checks: u32,
    pub finalized: Option<Outcome>,
}

impl Applied {
    fn rejected(reason: impl ToString) -> Self {
        Self {
            status: Status::Rejected(reason.to_string()),
            sig_checks: 0,
            finalized: None,
        }
    }

    fn accepted(sig_checks: u32, finalized: Option<Outcome>) -> Self {
        Self {
            status: Status::Accepted,
            sig_checks,
            finalized,
        }
    }
}

fn ext_for(dinfo: &Dinfo) -> ContractExt {
    match dinfo {
        Dinfo::Timelock {
            plist,
            t0,
            delta,
            rule,
        } => ContractExt::Timelock(TimelockExt::new(*t0, *delta, plist.len() as u64, *rule)),
        Dinfo::Cbc { h, validators, .. } => ContractExt::Cbc(CbcExt {
            h: *h,
            validators: validators.clone(),
        }),
    }
}

/// Runs one entry against a chain's state. Rejected entries leave the state
/// unchanged.
#[allow(clippy::too_many_arguments)]
pub fn apply(
    chain: &ChainId,
    state: &mut ChainState,
    is_cbc: bool,
    seq: u64,
    publisher: &Actor,
    contract: Option<&PartyId>,
    payload: &Payload,
    now: Tick,
    keys: &KeyDirectory,
) -> Applied {
    if let Payload::Cbc { entry } = payload {
        if !is_cbc || contract.is_some() {
            return Applied::rejected("not a certified blockchain");
        }
        return apply_cbc(state, seq, publisher, entry);
    }
    if is_cbc {
        return Applied::rejected("certified blockchain holds no contracts");
    }
    let Some(escrower) = contract else {
        return Applied::rejected("no contract addressed");
    };
    let ChainState {
        wallets, contracts, ..
    } = state;
    match (payload, publisher) {
        (
            Payload::Escrow {
                deal,
                assets,
                dinfo,
            },
            Actor::Party(p),
        ) => {
            if assets.chains().iter().any(|c| c != chain) {
                return Applied::rejected("assets live on another chain");
            }
            if p != escrower {
                return Applied::rejected(format!("{p} cannot escrow into {escrower}'s contract"));
            }
            let mut c = match contracts.get(escrower) {
                Some(c) if &c.escrow.deal != deal => return Applied::rejected("contract belongs to another deal"),
                Some(c) if &c.dinfo != dinfo => return Applied::rejected("deal parameters differ"),
                Some(c) => c.clone(),
                None => Contract {
                    escrow: EscrowState::new(
                        ContractId::new(chain.clone(), escrower.clone()),
                        deal.clone(),
                        dinfo.plist().iter().cloned().collect(),
                    ),
                    dinfo: dinfo.clone(),
                    ext: ext_for(dinfo),
                },
            };
            let mut w = wallets.clone();
            match c.escrow.escrow(&mut w, p, assets) {
                Ok(()) => {
                    *wallets = w;
                    contracts.insert(escrower.clone(), c);
                    Applied::accepted(0, None)
                }
                Err(e) => Applied::rejected(e),
            }
        }
        (Payload::Transfer { deal, to, assets }, Actor::Party(p)) => {
            let Some(c) = contracts.get_mut(escrower) else {
                return Applied::rejected("no such contract");
            };
            if &c.escrow.deal != deal {
                return Applied::rejected("contract belongs to another deal");
            }
            match c.escrow.tentative_transfer(p, assets, to) {
                Ok(()) => Applied::accepted(0, None),
                Err(e) => Applied::rejected(e),
            }
        }
        (Payload::Vote { path }, Actor::Party(_)) => {
            let Some(c) = contracts.get_mut(escrower) else {
                return Applied::rejected("no such contract");
            };
            let ContractExt::Timelock(ext) = &mut c.ext else {
                return Applied::rejected("contract takes no votes");
            };
            match accept_vote(&mut c.escrow, ext, wallets, path, now, keys) {
                Ok(a) => Applied::accepted(a.sig_checks, a.committed.then_some(Outcome::Commit)),
                Err(e) => Applied::rejected(e),
            }
        }
        (Payload::Timeout { deal }, Actor::System) => {
            let Some(c) = contracts.get_mut(escrower) else {
                return Applied::rejected("no such contract");
            };
            if &c.escrow.deal != deal {
                return Applied::rejected("contract belongs to another deal");
            }
            let ContractExt::Timelock(ext) = &c.ext else {
                return Applied::rejected("contract has no timeout");
            };
            match contract_timeout(&mut c.escrow, ext, wallets, now) {
                Ok(()) => Applied::accepted(0, Some(Outcome::Abort)),
                Err(e) => Applied::rejected(e),
            }
        }
        (Payload::Settle { cert }, Actor::Party(_)) => {
            let Some(c) = contracts.get_mut(escrower) else {
                return Applied::rejected("no such contract");
            };
            let ContractExt::Cbc(ext) = &c.ext else {
                return Applied::rejected("contract takes no certificates");
            };
            match contract_settle(&mut c.escrow, ext, wallets, cert, keys) {
                Ok(n) => Applied::accepted(n, Some(cert.statement.status)),
                Err(e) => Applied::rejected(e),
            }
        }
        (_, Actor::System) => Applied::rejected("system publishes only timeouts"),
        (Payload::Timeout { .. }, _) => Applied::rejected("only the chain publishes timeouts"),
        (Payload::Cbc { .. }, _) => unreachable!("handled above"),
    }
}

fn apply_cbc(state: &mut ChainState, seq: u64, publisher: &Actor, entry: &CbcEntry) -> Applied {
    let Actor::Party(p) = publisher else {
        return Applied::rejected("system cannot vote");
    };
    let hash = match entry {
        CbcEntry::StartDeal { deal, plist } => start_hash(seq, deal, plist),
        CbcEntry::Commit { deal, h, voter } | CbcEntry::Abort { deal, h, voter } => {
            if voter != p {
                return Applied::rejected(format!("{p} cannot vote for {voter}"));
            }
            match definitive_start(&state.log, deal) {
                Some((start, plist)) if &start.hash == h => {
                    if !plist.contains(voter) {
                        return Applied::rejected(format!("{voter} is not in the plist"));
                    }
                }
                _ => return Applied::rejected("vote does not reference the definitive startDeal"),
            }
            let mut enc = Encoder::new();
            enc.str("vote").u64(seq).bytes(&h.0).str(voter.as_str());
            Hash(sha256(&[&enc.finish()]))
        }
    };
    state.log.push(CbcRecord {
        position: seq,
        hash,
        entry: entry.clone(),
    });
    Applied::accepted(0, None)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("unknown chain {0}")]
    UnknownChain(ChainId),
}

/// One chain: entries and the state after each prefix.
#[derive(Clone, Debug)]
pub struct Chain {
    pub id: ChainId,
    /// Added to the global tick to get this chain's contract clock.
    pub skew: Tick,
    pub is_cbc: bool,
    pub entries: Vec<Entry>,
    states: Vec<Arc<ChainState>>,
}

impl Chain {
    pub fn new(id: ChainId, skew: Tick, is_cbc: bool, initial: ChainState) -> Self {
        Self {
            id,
            skew,
            is_cbc,
            entries: Vec::new(),
            states: vec![Arc::new(initial)],
        }
    }

    /// State after the first `len` entries.
    pub fn state_at(&self, len: usize) -> Arc<ChainState> {
        self.states[len.min(self.entries.len())].clone()
    }

    pub fn current(&self) -> &ChainState {
        self.states.last().expect("initial state")
    }

    pub fn clock(&self, tick: Tick) -> Tick {
        tick + self.skew
    }
}

#[derive(Clone, Debug, Default)]
pub struct Ledger {
    pub chains: BTreeMap<ChainId, Chain>,
    next_index: u64,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of entries published across all chains.
    pub fn published(&self) -> u64 {
        self.next_index
    }

    pub fn add_chain(&mut self, chain: Chain) {
        self.chains.insert(chain.id.clone(), chain);
    }

    pub fn chain(&self, id: &ChainId) -> Result<&Chain, LedgerError> {
        self.chains
            .get(id)
            .ok_or_else(|| LedgerError::UnknownChain(id.clone()))
    }

    /// Appends an entry, runs the chain's transition and returns the entry.
    pub fn publish(
        &mut self,
        chain: &ChainId,
        tick: Tick,
        publisher: Actor,
        contract: Option<PartyId>,
        payload: Payload,
        keys: &KeyDirectory,
    ) -> Result<&Entry, LedgerError> {
        let c = self
            .chains
            .get_mut(chain)
            .ok_or_else(|| LedgerError::UnknownChain(chain.clone()))?;
        let seq = c.entries.len() as u64;
        let mut state = c.current().clone();
        let applied = apply(
            chain,
            &mut state,
            c.is_cbc,
            seq,
            &publisher,
            contract.as_ref(),
            &payload,
            c.clock(tick),
            keys,
        );
        let digest = Entry::compute_digest(
            chain,
            seq,
            tick,
            &publisher,
            contract.as_ref(),
            &payload,
            &applied.status,
            applied.sig_checks,
            applied.finalized,
        );
        let entry = Entry {
            index: self.next_index,
            chain: chain.clone(),
            seq,
            tick,
            publisher,
            contract,
            payload,
            status: applied.status,
            sig_checks: applied.sig_checks,
            finalized: applied.finalized,
            digest,
        };
        self.next_index += 1;
        let next = if entry.accepted() {
            Arc::new(state)
        } else {
            c.states.last().expect("initial state").clone()
        };
        c.states.push(next);
        c.entries.push(entry);
        Ok(c.entries.last().expect("just pushed"))
    }
}
