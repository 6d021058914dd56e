//! Deals, payoffs and acceptability.
//!
//! A deal lists who escrows what on which chain, and the tentative transfers
//! that move escrowed assets between parties. Each escrowing party gets its own
//! contract on each chain it escrows on; a transfer names the contract it
//! draws from with `via` when a chain carries more than one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{AssetBundle, AssetError};
use crate::ids::{ChainId, ContractId, DealId, PartyId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DealError {
    #[error("deal has no parties")]
    NoParties,
    #[error("party {0} listed twice")]
    DuplicateParty(PartyId),
    #[error("unknown party {0}")]
    UnknownParty(PartyId),
    #[error("delta must be positive")]
    ZeroDelta,
    #[error("transfer {index}: sender and recipient are both {party}")]
    SelfTransfer { index: usize, party: PartyId },
    #[error("transfer {index}: empty asset bundle")]
    EmptyTransfer { index: usize },
    #[error("escrow by {0}: empty asset bundle")]
    EmptyEscrow(PartyId),
    #[error("transfer {index}: assets span several chains")]
    MultiChainTransfer { index: usize },
    #[error("transfer {index}: no escrow contract on chain {chain}")]
    NoContract { index: usize, chain: ChainId },
    #[error("transfer {index}: chain {chain} has several escrows, `via` is required")]
    AmbiguousContract { index: usize, chain: ChainId },
    #[error("{party} escrows twice on chain {chain}")]
    DuplicateEscrow { party: PartyId, chain: ChainId },
    #[error("transfer {index}: {from} does not hold {assets} on {contract} at that step")]
    Infeasible {
        index: usize,
        from: PartyId,
        assets: AssetBundle,
        contract: ContractId,
    },
    #[error("deal id {0} already registered")]
    DuplicateDeal(DealId),
    #[error(transparent)]
    Asset(#[from] AssetError),
}

/// Net incoming and outgoing assets of one party.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Payoff {
    #[serde(default)]
    pub incoming: AssetBundle,
    #[serde(default)]
    pub outgoing: AssetBundle,
}

impl Payoff {
    pub fn nothing() -> Self {
        Self::default()
    }

    /// Net payoff from gross flows.
    pub fn net(gross_in: &AssetBundle, gross_out: &AssetBundle) -> Self {
        let (incoming, outgoing) = AssetBundle::net(gross_in, gross_out);
        Self { incoming, outgoing }
    }

    /// At least as much in and at most as much out as `base`.
    pub fn dominates(&self, base: &Payoff) -> bool {
        self.incoming.contains(&base.incoming) && base.outgoing.contains(&self.outgoing)
    }

    pub fn is_nothing(&self) -> bool {
        self.incoming.is_empty() && self.outgoing.is_empty()
    }
}

impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "in {} out {}", self.incoming, self.outgoing)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowSpec {
    pub party: PartyId,
    pub assets: AssetBundle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub from: PartyId,
    pub to: PartyId,
    pub assets: AssetBundle,
    /// Position in the transfer script. Ties keep listing order.
    #[serde(default)]
    pub step: u32,
    /// Escrower whose contract the transfer draws from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<PartyId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DealSpec {
    pub id: DealId,
    pub parties: Vec<PartyId>,
    pub t0: u64,
    pub delta: u64,
    pub escrows: Vec<EscrowSpec>,
    pub transfers: Vec<TransferSpec>,
    /// Extra acceptable payoffs per party, beyond All and Nothing.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub acceptable: BTreeMap<PartyId, Vec<Payoff>>,
}

/// What a single escrow contract is expected to hold and do.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractPlan {
    pub id: ContractId,
    pub escrowed: AssetBundle,
    /// Indices into `DealSpec::transfers`, in script order.
    pub transfers: Vec<usize>,
}

impl ContractPlan {
    pub fn involves(&self, party: &PartyId, deal: &DealSpec) -> bool {
        &self.id.escrower == party
            || self.transfers.iter().any(|&i| {
                let t = &deal.transfers[i];
                &t.from == party || &t.to == party
            })
    }
}

impl DealSpec {
    pub fn plist(&self) -> BTreeSet<PartyId> {
        self.parties.iter().cloned().collect()
    }

    pub fn n(&self) -> usize {
        self.parties.len()
    }

    pub fn has_party(&self, p: &PartyId) -> bool {
        self.parties.contains(p)
    }

    fn check_party(&self, p: &PartyId) -> Result<(), DealError> {
        if self.has_party(p) {
            Ok(())
        } else {
            Err(DealError::UnknownParty(p.clone()))
        }
    }

    /// Transfer indices in script order.
    pub fn script_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.transfers.len()).collect();
        idx.sort_by_key(|&i| (self.transfers[i].step, i));
        idx
    }

    /// The contract a transfer draws from.
    pub fn contract_of(&self, index: usize) -> Result<ContractId, DealError> {
        let t = &self.transfers[index];
        let chains = t.assets.chains();
        if chains.len() != 1 {
            return Err(if chains.is_empty() {
                DealError::EmptyTransfer { index }
            } else {
                DealError::MultiChainTransfer { index }
            });
        }
        let chain = chains.into_iter().next().expect("one chain");
        if let Some(via) = &t.via {
            let id = ContractId::new(chain.clone(), via.clone());
            return if self.escrow_of(&id).is_some() {
                Ok(id)
            } else {
                Err(DealError::NoContract { index, chain })
            };
        }
        let mut on_chain = self
            .escrows
            .iter()
            .filter(|e| e.assets.chains().contains(&chain));
        match (on_chain.next(), on_chain.next()) {
            (Some(e), None) => Ok(ContractId::new(chain, e.party.clone())),
            (None, _) => Err(DealError::NoContract { index, chain }),
            (Some(_), Some(_)) => Err(DealError::AmbiguousContract { index, chain }),
        }
    }

    fn escrow_of(&self, id: &ContractId) -> Option<AssetBundle> {
        let b = self
            .escrows
            .iter()
            .filter(|e| e.party == id.escrower)
            .map(|e| e.assets.on_chain(&id.chain))
            .find(|b| !b.is_empty())?;
        Some(b)
    }

    /// Checks structure and that the transfer script can run to completion.
    pub fn validate(&self) -> Result<(), DealError> {
        if self.parties.is_empty() {
            return Err(DealError::NoParties);
        }
        let mut seen = BTreeSet::new();
        for p in &self.parties {
            if !seen.insert(p) {
                return Err(DealError::DuplicateParty(p.clone()));
            }
        }
        if self.delta == 0 {
            return Err(DealError::ZeroDelta);
        }
        let mut escrow_chains = BTreeSet::new();
        for e in &self.escrows {
            self.check_party(&e.party)?;
            if e.assets.is_empty() {
                return Err(DealError::EmptyEscrow(e.party.clone()));
            }
            for c in e.assets.chains() {
                if !escrow_chains.insert((e.party.clone(), c.clone())) {
                    return Err(DealError::DuplicateEscrow {
                        party: e.party.clone(),
                        chain: c,
                    });
                }
            }
        }
        for (index, t) in self.transfers.iter().enumerate() {
            self.check_party(&t.from)?;
            self.check_party(&t.to)?;
            if let Some(v) = &t.via {
                self.check_party(v)?;
            }
            if t.from == t.to {
                return Err(DealError::SelfTransfer {
                    index,
                    party: t.from.clone(),
                });
            }
            if t.assets.is_empty() {
                return Err(DealError::EmptyTransfer { index });
            }
            self.contract_of(index)?;
        }
        for p in self.acceptable.keys() {
            self.check_party(p)?;
        }
        self.final_commit_owners()?;
        Ok(())
    }

    /// Runs the script against per-contract commit-owner maps.
    fn final_commit_owners(
        &self,
    ) -> Result<BTreeMap<ContractId, BTreeMap<PartyId, AssetBundle>>, DealError> {
        let mut owners: BTreeMap<ContractId, BTreeMap<PartyId, AssetBundle>> = BTreeMap::new();
        for e in &self.escrows {
            for chain in e.assets.chains() {
                owners
                    .entry(ContractId::new(chain.clone(), e.party.clone()))
                    .or_default()
                    .insert(e.party.clone(), e.assets.on_chain(&chain));
            }
        }
        for index in self.script_order() {
            let t = &self.transfers[index];
            let id = self.contract_of(index)?;
            let c = owners.entry(id.clone()).or_default();
            let ok = c
                .get_mut(&t.from)
                .and_then(|b| b.try_remove(&t.assets))
                .is_some();
            if !ok {
                return Err(DealError::Infeasible {
                    index,
                    from: t.from.clone(),
                    assets: t.assets.clone(),
                    contract: id,
                });
            }
            c.entry(t.to.clone()).or_default().merge(&t.assets)?;
        }
        Ok(owners)
    }

    /// One plan per contract, keyed by contract id. Assumes `validate` passed.
    pub fn contracts(&self) -> BTreeMap<ContractId, ContractPlan> {
        let mut plans: BTreeMap<ContractId, ContractPlan> = BTreeMap::new();
        for e in &self.escrows {
            for chain in e.assets.chains() {
                let id = ContractId::new(chain.clone(), e.party.clone());
                plans.insert(
                    id.clone(),
                    ContractPlan {
                        id,
                        escrowed: e.assets.on_chain(&chain),
                        transfers: Vec::new(),
                    },
                );
            }
        }
        for index in self.script_order() {
            if let Ok(id) = self.contract_of(index) {
                if let Some(plan) = plans.get_mut(&id) {
                    plan.transfers.push(index);
                }
            }
        }
        plans
    }

    /// Contracts in which `party` receives a transfer.
    pub fn incoming(&self, party: &PartyId) -> BTreeSet<ContractId> {
        self.contracts()
            .into_values()
            .filter(|c| c.transfers.iter().any(|&i| &self.transfers[i].to == party))
            .map(|c| c.id)
            .collect()
    }

    /// Contracts that `party` escrows into or sends from.
    pub fn outgoing(&self, party: &PartyId) -> BTreeSet<ContractId> {
        self.contracts()
            .into_values()
            .filter(|c| {
                &c.id.escrower == party
                    || c.transfers.iter().any(|&i| &self.transfers[i].from == party)
            })
            .map(|c| c.id)
            .collect()
    }

    /// What `party` nets from contract `id` alone if it commits.
    pub fn contract_payoff(&self, party: &PartyId, id: &ContractId) -> Payoff {
        let mut gross_in = AssetBundle::new();
        let mut gross_out = AssetBundle::new();
        if let Some(plan) = self.contracts().get(id) {
            for &i in &plan.transfers {
                let t = &self.transfers[i];
                if &t.to == party {
                    gross_in.merge(&t.assets).expect("well-formed deal");
                }
                if &t.from == party {
                    gross_out.merge(&t.assets).expect("well-formed deal");
                }
            }
        }
        Payoff::net(&gross_in, &gross_out)
    }

    pub fn involved(&self, party: &PartyId) -> BTreeSet<ContractId> {
        let mut s = self.incoming(party);
        s.extend(self.outgoing(party));
        s
    }

    pub fn chains(&self) -> BTreeSet<ChainId> {
        self.escrows.iter().flat_map(|e| e.assets.chains()).collect()
    }

    /// Parties with a planned contract on `chain`.
    pub fn monitors(&self, chain: &ChainId) -> BTreeSet<PartyId> {
        let mut out = BTreeSet::new();
        for plan in self.contracts().values().filter(|c| &c.id.chain == chain) {
            out.insert(plan.id.escrower.clone());
            for &i in &plan.transfers {
                out.insert(self.transfers[i].from.clone());
                out.insert(self.transfers[i].to.clone());
            }
        }
        out
    }

    /// Number of transfers, `t`.
    pub fn t(&self) -> usize {
        self.transfers.len()
    }

    /// Longest transfer script on a single contract, `k`.
    pub fn k(&self) -> usize {
        self.contracts()
            .values()
            .map(|c| c.transfers.len())
            .max()
            .unwrap_or(0)
    }

    /// The payoff `party` gets when every planned transfer happens.
    pub fn all_payoff(&self, party: &PartyId) -> Payoff {
        let mut gross_in = AssetBundle::new();
        let mut gross_out = AssetBundle::new();
        for t in &self.transfers {
            if &t.to == party {
                gross_in.merge(&t.assets).expect("validated deal");
            }
            if &t.from == party {
                gross_out.merge(&t.assets).expect("validated deal");
            }
        }
        Payoff::net(&gross_in, &gross_out)
    }

    /// All, Nothing, then any extras.
    pub fn base_set(&self, party: &PartyId) -> Vec<Payoff> {
        let mut base = vec![self.all_payoff(party), Payoff::nothing()];
        if let Some(extra) = self.acceptable.get(party) {
            base.extend(extra.iter().cloned());
        }
        base
    }

    pub fn is_acceptable(&self, party: &PartyId, payoff: &Payoff) -> Result<bool, DealError> {
        self.check_party(party)?;
        Ok(self.base_set(party).iter().any(|b| payoff.dominates(b)))
    }
}

/// Guards against reusing a deal id within a run.
#[derive(Debug, Default, Clone)]
pub struct DealRegistry {
    seen: BTreeSet<DealId>,
}

impl DealRegistry {
    pub fn register(&mut self, id: &DealId) -> Result<(), DealError> {
        if self.seen.insert(id.clone()) {
            Ok(())
        } else {
            Err(DealError::DuplicateDeal(id.clone()))
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn b(items: &[&str]) -> AssetBundle {
        AssetBundle::parse_items(items).unwrap()
    }

    /// Alice brokers Bob's tickets to Carol for 101 coins and keeps one.
    pub(crate) fn ticket_deal() -> DealSpec {
        let tr = |from: &str, to: &str, items: &[&str], step| TransferSpec {
            from: from.into(),
            to: to.into(),
            assets: b(items),
            step,
            via: None,
        };
        DealSpec {
            id: "ticket-deal".into(),
            parties: vec!["alice".into(), "bob".into(), "carol".into()],
            t0: 20,
            delta: 5,
            escrows: vec![
                EscrowSpec {
                    party: "bob".into(),
                    assets: b(&["#seat-A1@tickets"]),
                },
                EscrowSpec {
                    party: "carol".into(),
                    assets: b(&["101 coin@coins"]),
                },
            ],
            transfers: vec![
                tr("bob", "alice", &["#seat-A1@tickets"], 1),
                tr("alice", "carol", &["#seat-A1@tickets"], 2),
                tr("carol", "alice", &["101 coin@coins"], 1),
                tr("alice", "bob", &["100 coin@coins"], 2),
            ],
            acceptable: BTreeMap::new(),
        }
    }

    #[test]
    fn ticket_deal_validates_and_plans_two_contracts() {
        let d = ticket_deal();
        d.validate().unwrap();
        let plans = d.contracts();
        assert_eq!(plans.len(), 2);
        assert_eq!(d.k(), 2);
        assert_eq!(d.t(), 4);
        let carol = PartyId::new("carol");
        assert_eq!(
            d.incoming(&carol).into_iter().collect::<Vec<_>>(),
            vec![ContractId::new("tickets", "bob")]
        );
        assert_eq!(
            d.outgoing(&carol).into_iter().collect::<Vec<_>>(),
            vec![ContractId::new("coins", "carol")]
        );
    }

    #[test]
    fn all_payoffs_are_net() {
        let d = ticket_deal();
        let alice = d.all_payoff(&"alice".into());
        assert_eq!(alice.incoming, b(&["1 coin@coins"]));
        assert!(alice.outgoing.is_empty());
        let carol = d.all_payoff(&"carol".into());
        assert_eq!(carol.incoming, b(&["#seat-A1@tickets"]));
        assert_eq!(carol.outgoing, b(&["101 coin@coins"]));
    }

    #[test]
    fn acceptability_examples() {
        let d = ticket_deal();
        let carol = PartyId::new("carol");
        let p = |i: &[&str], o: &[&str]| Payoff {
            incoming: b(i),
            outgoing: b(o),
        };
        assert!(d
            .is_acceptable(&carol, &p(&["#seat-A1@tickets"], &["101 coin@coins"]))
            .unwrap());
        assert!(d.is_acceptable(&carol, &Payoff::nothing()).unwrap());
        assert!(d.is_acceptable(&carol, &p(&["#seat-A1@tickets"], &[])).unwrap());
        assert!(!d.is_acceptable(&carol, &p(&[], &["101 coin@coins"])).unwrap());
        assert!(d.is_acceptable(&"zed".into(), &Payoff::nothing()).is_err());
    }

    #[test]
    fn infeasible_script_is_rejected() {
        let mut d = ticket_deal();
        d.transfers[3].assets = b(&["102 coin@coins"]);
        assert!(matches!(d.validate(), Err(DealError::Infeasible { .. })));
    }

    #[test]
    fn ambiguous_chain_needs_via() {
        let mut d = ticket_deal();
        d.escrows.push(EscrowSpec {
            party: "alice".into(),
            assets: b(&["5 coin@coins"]),
        });
        assert!(matches!(
            d.validate(),
            Err(DealError::AmbiguousContract { .. })
        ));
        d.transfers[2].via = Some("carol".into());
        d.transfers[3].via = Some("carol".into());
        d.validate().unwrap();
    }

    #[test]
    fn registry_rejects_replayed_id() {
        let mut r = DealRegistry::default();
        r.register(&"D".into()).unwrap();
        assert_eq!(
            r.register(&"D".into()),
            Err(DealError::DuplicateDeal("D".into()))
        );
    }
}
