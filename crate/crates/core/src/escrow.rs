//! The escrow state machine shared by both commit protocols.
//!
//! An escrowed asset is owned by the contract and carries two prospective
//! owners: `on_commit` (who gets it if the deal commits) and `on_abort` (who
//! gets it back if it aborts). Tentative transfers only move commit
//! ownership, so an abort always refunds exactly what each party escrowed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{AssetBundle, AssetError};
use crate::ids::{ContractId, DealId, PartyId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EscrowError {
    #[error("{party} does not own {assets}")]
    NotOwner { party: PartyId, assets: AssetBundle },
    #[error("{0} is not a deal party")]
    NotInPlist(PartyId),
    #[error("{0} cannot escrow into another party's contract")]
    WrongEscrower(PartyId),
    #[error("contract already {0:?}")]
    NotActive(Resolution),
    #[error("{party} is not commit-owner of {assets}")]
    InsufficientCommitOwnership { party: PartyId, assets: AssetBundle },
    #[error("empty asset bundle")]
    Empty,
    #[error(transparent)]
    Asset(#[from] AssetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Active,
    Committed,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Commit,
    Abort,
}

impl Outcome {
    pub fn resolution(self) -> Resolution {
        match self {
            Outcome::Commit => Resolution::Committed,
            Outcome::Abort => Resolution::Aborted,
        }
    }
}

/// Per-party holdings outside any contract on one chain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wallets {
    holdings: BTreeMap<PartyId, AssetBundle>,
}

impl Wallets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, party: &PartyId) -> AssetBundle {
        self.holdings.get(party).cloned().unwrap_or_default()
    }

    pub fn owns(&self, party: &PartyId, assets: &AssetBundle) -> bool {
        self.holdings
            .get(party)
            .is_some_and(|h| h.contains(assets))
    }

    pub fn deposit(&mut self, party: &PartyId, assets: &AssetBundle) -> Result<(), AssetError> {
        if assets.is_empty() {
            return Ok(());
        }
        self.holdings.entry(party.clone()).or_default().merge(assets)
    }

    pub fn withdraw(&mut self, party: &PartyId, assets: &AssetBundle) -> Result<(), EscrowError> {
        let h = self.holdings.get_mut(party);
        match h.and_then(|h| h.try_remove(assets)) {
            Some(()) => Ok(()),
            None => Err(EscrowError::NotOwner {
                party: party.clone(),
                assets: assets.clone(),
            }),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PartyId, &AssetBundle)> {
        self.holdings.iter().filter(|(_, b)| !b.is_empty())
    }

    pub fn total(&self) -> AssetBundle {
        let mut t = AssetBundle::new();
        for b in self.holdings.values() {
            t.merge(b).expect("wallet totals are disjoint in tokens");
        }
        t
    }
}

/// Actual, on-commit and on-abort ownership of what a contract holds.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnershipState {
    pub held: AssetBundle,
    pub on_commit: BTreeMap<PartyId, AssetBundle>,
    pub on_abort: BTreeMap<PartyId, AssetBundle>,
}

fn sum(map: &BTreeMap<PartyId, AssetBundle>) -> Result<AssetBundle, AssetError> {
    let mut t = AssetBundle::new();
    for b in map.values() {
        t.merge(b)?;
    }
    Ok(t)
}

impl OwnershipState {
    pub fn commit_owned(&self, party: &PartyId) -> AssetBundle {
        self.on_commit.get(party).cloned().unwrap_or_default()
    }

    pub fn abort_owned(&self, party: &PartyId) -> AssetBundle {
        self.on_abort.get(party).cloned().unwrap_or_default()
    }

    /// `held`, the sum of C and the sum of A all agree.
    pub fn is_consistent(&self) -> bool {
        matches!((sum(&self.on_commit), sum(&self.on_abort)), (Ok(c), Ok(a)) if c == self.held && a == self.held)
    }

    pub fn parties(&self) -> BTreeSet<PartyId> {
        self.on_commit
            .iter()
            .chain(&self.on_abort)
            .filter(|(_, b)| !b.is_empty())
            .map(|(p, _)| p.clone())
            .collect()
    }
}

/// Protocol-independent escrow contract state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowState {
    pub id: ContractId,
    pub deal: DealId,
    pub plist: BTreeSet<PartyId>,
    pub ownership: OwnershipState,
    pub resolution: Resolution,
}

impl EscrowState {
    pub fn new(id: ContractId, deal: DealId, plist: BTreeSet<PartyId>) -> Self {
        Self {
            id,
            deal,
            plist,
            ownership: OwnershipState::default(),
            resolution: Resolution::Active,
        }
    }

    pub fn is_active(&self) -> bool {
        self.resolution == Resolution::Active
    }

    fn require_active(&self) -> Result<(), EscrowError> {
        if self.is_active() {
            Ok(())
        } else {
            Err(EscrowError::NotActive(self.resolution))
        }
    }

    /// Moves `assets` from `party`'s wallet into the contract.
    pub fn escrow(
        &mut self,
        wallets: &mut Wallets,
        party: &PartyId,
        assets: &AssetBundle,
    ) -> Result<(), EscrowError> {
        self.require_active()?;
        if assets.is_empty() {
            return Err(EscrowError::Empty);
        }
        if !self.plist.contains(party) {
            return Err(EscrowError::NotInPlist(party.clone()));
        }
        if party != &self.id.escrower {
            return Err(EscrowError::WrongEscrower(party.clone()));
        }
        if !wallets.owns(party, assets) {
            return Err(EscrowError::NotOwner {
                party: party.clone(),
                assets: assets.clone(),
            });
        }
        let mut next = self.ownership.clone();
        next.held.merge(assets)?;
        next.on_commit
            .entry(party.clone())
            .or_default()
            .merge(assets)?;
        next.on_abort.entry(party.clone()).or_default().merge(assets)?;
        wallets.withdraw(party, assets)?;
        self.ownership = next;
        Ok(())
    }

    /// Reassigns commit ownership of `assets` from `from` to `to`.
    pub fn tentative_transfer(
        &mut self,
        from: &PartyId,
        assets: &AssetBundle,
        to: &PartyId,
    ) -> Result<(), EscrowError> {
        self.require_active()?;
        if assets.is_empty() {
            return Err(EscrowError::Empty);
        }
        if !self.plist.contains(to) {
            return Err(EscrowError::NotInPlist(to.clone()));
        }
        let mut next = self.ownership.clone();
        let removed = next
            .on_commit
            .get_mut(from)
            .and_then(|b| b.try_remove(assets));
        if removed.is_none() {
            return Err(EscrowError::InsufficientCommitOwnership {
                party: from.clone(),
                assets: assets.clone(),
            });
        }
        next.on_commit.entry(to.clone()).or_default().merge(assets)?;
        self.ownership = next;
        Ok(())
    }

    /// Pays out per C or A and closes the contract.
    pub fn finalize(&mut self, wallets: &mut Wallets, outcome: Outcome) -> Result<(), EscrowError> {
        self.require_active()?;
        let payout = match outcome {
            Outcome::Commit => &self.ownership.on_commit,
            Outcome::Abort => &self.ownership.on_abort,
        };
        for (p, b) in payout {
            wallets.deposit(p, b)?;
        }
        self.ownership = OwnershipState::default();
        self.resolution = outcome.resolution();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(items: &[&str]) -> AssetBundle {
        AssetBundle::parse_items(items).unwrap()
    }

    fn plist() -> BTreeSet<PartyId> {
        ["alice", "bob", "carol"].into_iter().map(PartyId::new).collect()
    }

    #[test]
    fn bob_escrows_tickets_and_they_flow_to_carol() {
        let (alice, bob, carol) = (PartyId::new("alice"), PartyId::new("bob"), PartyId::new("carol"));
        let mut w = Wallets::new();
        let t = b(&["#seat-A1@tickets"]);
        w.deposit(&bob, &t).unwrap();
        let mut c = EscrowState::new(ContractId::new("tickets", "bob"), "D".into(), plist());
        c.escrow(&mut w, &bob, &t).unwrap();
        assert!(w.get(&bob).is_empty());
        assert_eq!(c.ownership.held, t);
        assert_eq!(c.ownership.commit_owned(&bob), t);
        assert_eq!(c.ownership.abort_owned(&bob), t);

        c.tentative_transfer(&bob, &t, &alice).unwrap();
        c.tentative_transfer(&alice, &t, &carol).unwrap();
        assert_eq!(c.ownership.commit_owned(&carol), t);
        assert_eq!(c.ownership.abort_owned(&bob), t);
        assert!(c.ownership.is_consistent());

        let mut aborted = c.clone();
        let mut w2 = w.clone();
        aborted.finalize(&mut w2, Outcome::Abort).unwrap();
        assert_eq!(w2.get(&bob), t);

        c.finalize(&mut w, Outcome::Commit).unwrap();
        assert_eq!(w.get(&carol), t);
        assert_eq!(
            c.finalize(&mut w, Outcome::Abort),
            Err(EscrowError::NotActive(Resolution::Committed))
        );
    }

    #[test]
    fn coins_split_by_balance() {
        let (alice, bob, carol) = (PartyId::new("alice"), PartyId::new("bob"), PartyId::new("carol"));
        let mut w = Wallets::new();
        w.deposit(&carol, &b(&["150 coin@coins"])).unwrap();
        let mut c = EscrowState::new(ContractId::new("coins", "carol"), "D".into(), plist());
        c.escrow(&mut w, &carol, &b(&["101 coin@coins"])).unwrap();
        assert_eq!(w.get(&carol), b(&["49 coin@coins"]));
        c.tentative_transfer(&carol, &b(&["101 coin@coins"]), &alice).unwrap();
        c.tentative_transfer(&alice, &b(&["100 coin@coins"]), &bob).unwrap();
        assert_eq!(c.ownership.commit_owned(&alice), b(&["1 coin@coins"]));
        assert_eq!(c.ownership.commit_owned(&bob), b(&["100 coin@coins"]));
        assert!(matches!(
            c.tentative_transfer(&alice, &b(&["2 coin@coins"]), &bob),
            Err(EscrowError::InsufficientCommitOwnership { .. })
        ));
    }

    #[test]
    fn rejected_calls_leave_state_unchanged() {
        let bob = PartyId::new("bob");
        let mut w = Wallets::new();
        let mut c = EscrowState::new(ContractId::new("tickets", "bob"), "D".into(), plist());
        let before = c.clone();
        assert!(matches!(
            c.escrow(&mut w, &bob, &b(&["#seat-A1@tickets"])),
            Err(EscrowError::NotOwner { .. })
        ));
        let mallory = PartyId::new("mallory");
        w.deposit(&mallory, &b(&["#x@tickets"])).unwrap();
        assert_eq!(
            c.escrow(&mut w, &mallory, &b(&["#x@tickets"])),
            Err(EscrowError::NotInPlist(mallory))
        );
        assert_eq!(c, before);
    }

    proptest! {
        #[test]
        fn conservation_under_random_calls(ops in prop::collection::vec((0usize..3, 0usize..3, 1u64..60, any::<bool>()), 0..40), commit in any::<bool>()) {
            let names: Vec<PartyId> = ["alice", "bob", "carol"].into_iter().map(PartyId::new).collect();
            let mut w = Wallets::new();
            for n in &names {
                w.deposit(n, &AssetBundle::fungible("coins", "coin", 100)).unwrap();
            }
            let supply = w.total();
            let mut c = EscrowState::new(ContractId::new("coins", "alice"), "D".into(), plist());
            for (from, to, amt, is_escrow) in ops {
                let a = AssetBundle::fungible("coins", "coin", amt);
                let _ = if is_escrow {
                    c.escrow(&mut w, &names[from], &a)
                } else {
                    c.tentative_transfer(&names[from], &a, &names[to])
                };
                let mut total = w.total();
                total.merge(&c.ownership.held).unwrap();
                prop_assert_eq!(&total, &supply);
                prop_assert!(c.ownership.is_consistent());
            }
            let abort_view = c.ownership.on_abort.clone();
            c.finalize(&mut w, if commit { Outcome::Commit } else { Outcome::Abort }).unwrap();
            prop_assert_eq!(w.total(), supply);
            if !commit {
                // Refunds return exactly what each party escrowed.
                for n in &names {
                    let refunded = abort_view.get(n).map(|b| b.amount(&"coins".into(), &"coin".into())).unwrap_or(0);
                    prop_assert!(w.get(n).amount(&"coins".into(), &"coin".into()) >= refunded);
                }
            }
        }
    }
}
