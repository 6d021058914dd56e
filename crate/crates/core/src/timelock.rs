//! Contract side of the timelock commit protocol.
//!
//! A vote carried by a path signature `p` is accepted while the contract's
//! clock reads strictly less than `t0 + |p|·Δ`. If some party's vote is still
//! missing at `t0 + N·Δ` the contract refunds everything.
//!
//! [`DeadlineRule::Fixed`] is a deliberately broken variant that gives every
//! vote the same deadline `t0 + N·Δ`, regardless of how it was forwarded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{check_path, KeyDirectory, PathError, PathSignature};
use crate::escrow::{EscrowState, Outcome, Resolution, Wallets};
use crate::ids::PartyId;
use crate::ledger::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeadlineRule {
    PathScaled,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelockExt {
    pub t0: Tick,
    pub delta: Tick,
    pub n: u64,
    pub rule: DeadlineRule,
    /// Accepted votes, readable by anyone monitoring the chain.
    pub votes: BTreeMap<PartyId, PathSignature>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VoteRejection {
    #[error("contract already {0:?}")]
    NotActive(Resolution),
    #[error("vote for another deal")]
    WrongDeal,
    #[error("duplicate vote from {0}")]
    Duplicate(PartyId),
    #[error("late: now {now} >= deadline {deadline}")]
    Timeout { now: Tick, deadline: Tick },
    #[error("invalid path: {0}")]
    Invalid(#[from] PathError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimeoutRejection {
    #[error("contract already {0:?}")]
    NotActive(Resolution),
    #[error("not due before {0}")]
    NotDue(Tick),
}

/// Result of an accepted vote.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VoteAccepted {
    pub sig_checks: u32,
    pub committed: bool,
}

impl TimelockExt {
    pub fn new(t0: Tick, delta: Tick, n: u64, rule: DeadlineRule) -> Self {
        Self {
            t0,
            delta,
            n,
            rule,
            votes: BTreeMap::new(),
        }
    }

    /// Exclusive deadline for a vote whose path has `len` signatures.
    pub fn deadline(&self, len: usize) -> Tick {
        match self.rule {
            DeadlineRule::PathScaled => self.t0 + len as Tick * self.delta,
            DeadlineRule::Fixed => self.timeout_at(),
        }
    }

    pub fn timeout_at(&self) -> Tick {
        self.t0 + self.n * self.delta
    }

    pub fn has_vote(&self, voter: &PartyId) -> bool {
        self.votes.contains_key(voter)
    }
}

/// Checks and records a vote. Commits the contract when the last missing
/// vote arrives. Rejections leave the state untouched.
pub fn accept_vote(
    escrow: &mut EscrowState,
    ext: &mut TimelockExt,
    wallets: &mut Wallets,
    p: &PathSignature,
    now: Tick,
    keys: &KeyDirectory,
) -> Result<VoteAccepted, VoteRejection> {
    if !escrow.is_active() {
        return Err(VoteRejection::NotActive(escrow.resolution));
    }
    if p.vote.deal != escrow.deal {
        return Err(VoteRejection::WrongDeal);
    }
    if ext.has_vote(&p.vote.voter) {
        return Err(VoteRejection::Duplicate(p.vote.voter.clone()));
    }
    let deadline = ext.deadline(p.len());
    if now >= deadline {
        return Err(VoteRejection::Timeout { now, deadline });
    }
    let sig_checks = check_path(p, &escrow.plist, keys)? as u32;
    ext.votes.insert(p.vote.voter.clone(), p.clone());
    let committed = escrow.plist.iter().all(|q| ext.has_vote(q));
    if committed {
        escrow
            .finalize(wallets, Outcome::Commit)
            .expect("active contract finalizes");
    }
    Ok(VoteAccepted {
        sig_checks,
        committed,
    })
}

/// Refunds if the timeout has passed with votes missing.
pub fn contract_timeout(
    escrow: &mut EscrowState,
    ext: &TimelockExt,
    wallets: &mut Wallets,
    now: Tick,
) -> Result<(), TimeoutRejection> {
    if !escrow.is_active() {
        return Err(TimeoutRejection::NotActive(escrow.resolution));
    }
    if now < ext.timeout_at() {
        return Err(TimeoutRejection::NotDue(ext.timeout_at()));
    }
    escrow
        .finalize(wallets, Outcome::Abort)
        .expect("active contract finalizes");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::AssetBundle;
    use crate::crypto::{extend_path, KeyPair, Nonce, Vote};
    use crate::ids::ContractId;
    use std::collections::BTreeSet;

    struct Fx {
        keys: BTreeMap<PartyId, KeyPair>,
        dir: KeyDirectory,
        escrow: EscrowState,
        ext: TimelockExt,
        wallets: Wallets,
    }

    fn fx(rule: DeadlineRule) -> Fx {
        let names = ["alice", "bob", "carol"];
        let mut dir = KeyDirectory::new();
        let mut keys = BTreeMap::new();
        for n in names {
            let k = KeyPair::derive(1, n);
            dir.register_party(n.into(), &k);
            keys.insert(PartyId::new(n), k);
        }
        let plist: BTreeSet<PartyId> = names.into_iter().map(PartyId::new).collect();
        let mut wallets = Wallets::new();
        let t = AssetBundle::token("tickets", "seat");
        wallets.deposit(&"bob".into(), &t).unwrap();
        let mut escrow = EscrowState::new(ContractId::new("tickets", "bob"), "D".into(), plist);
        escrow.escrow(&mut wallets, &"bob".into(), &t).unwrap();
        Fx {
            keys,
            dir,
            escrow,
            ext: TimelockExt::new(100, 10, 3, rule),
            wallets,
        }
    }

    impl Fx {
        fn vote(&self, path: &[&str]) -> PathSignature {
            let voter = PartyId::new(path[0]);
            let v = Vote {
                deal: "D".into(),
                voter: voter.clone(),
                nonce: Nonce::derive(1, &voter, 0),
            };
            let mut p = PathSignature::direct(v, &self.keys[&voter]).unwrap();
            for f in &path[1..] {
                p = extend_path(&p, &self.keys[&PartyId::new(f)]).unwrap();
            }
            p
        }

        fn offer(&mut self, p: &PathSignature, now: Tick) -> Result<VoteAccepted, VoteRejection> {
            accept_vote(&mut self.escrow, &mut self.ext, &mut self.wallets, p, now, &self.dir)
        }
    }

    #[test]
    fn direct_vote_boundary_is_strict() {
        let mut f = fx(DeadlineRule::PathScaled);
        let p = f.vote(&["carol"]);
        assert!(f.clone_offer(&p, 110).is_err());
        assert_eq!(f.offer(&p, 109).unwrap().sig_checks, 1);
    }

    #[test]
    fn forwarded_vote_gets_two_deltas() {
        let mut f = fx(DeadlineRule::PathScaled);
        let p = f.vote(&["bob", "alice"]);
        assert_eq!(
            f.clone_offer(&p, 120),
            Err(VoteRejection::Timeout {
                now: 120,
                deadline: 120
            })
        );
        assert_eq!(f.offer(&p, 119).unwrap().sig_checks, 2);
        assert_eq!(
            f.offer(&p, 119),
            Err(VoteRejection::Duplicate("bob".into()))
        );
    }

    #[test]
    fn duplicate_signer_path_rejected() {
        let mut f = fx(DeadlineRule::PathScaled);
        let mut p = f.vote(&["bob", "alice"]);
        p.links.push(p.links[1].clone());
        assert!(matches!(
            f.offer(&p, 100),
            Err(VoteRejection::Invalid(PathError::DuplicateSigner(_)))
        ));
        assert!(f.ext.votes.is_empty());
    }

    #[test]
    fn last_vote_commits_and_timeout_is_then_noop() {
        let mut f = fx(DeadlineRule::PathScaled);
        for path in [&["alice"][..], &["carol"], &["bob", "alice"]] {
            let p = f.vote(path);
            f.offer(&p, 101).unwrap();
        }
        assert_eq!(f.escrow.resolution, Resolution::Committed);
        assert_eq!(f.wallets.get(&"carol".into()), AssetBundle::new());
        assert_eq!(f.wallets.get(&"bob".into()), AssetBundle::token("tickets", "seat"));
        assert!(contract_timeout(&mut f.escrow, &f.ext, &mut f.wallets, 200).is_err());
    }

    #[test]
    fn missing_vote_refunds_at_timeout() {
        let mut f = fx(DeadlineRule::PathScaled);
        let p = f.vote(&["alice"]);
        f.offer(&p, 100).unwrap();
        assert_eq!(
            contract_timeout(&mut f.escrow, &f.ext, &mut f.wallets, 129),
            Err(TimeoutRejection::NotDue(130))
        );
        contract_timeout(&mut f.escrow, &f.ext, &mut f.wallets, 130).unwrap();
        assert_eq!(f.escrow.resolution, Resolution::Aborted);
        assert_eq!(f.wallets.get(&"bob".into()), AssetBundle::token("tickets", "seat"));
        assert_eq!(
            contract_timeout(&mut f.escrow, &f.ext, &mut f.wallets, 131),
            Err(TimeoutRejection::NotActive(Resolution::Aborted))
        );
    }

    #[test]
    fn fixed_rule_ignores_path_length() {
        let mut f = fx(DeadlineRule::Fixed);
        let p = f.vote(&["carol"]);
        assert!(f.offer(&p, 129).is_ok());
    }

    impl Fx {
        fn clone_offer(&self, p: &PathSignature, now: Tick) -> Result<VoteAccepted, VoteRejection> {
            let (mut e, mut x, mut w) = (self.escrow.clone(), self.ext.clone(), self.wallets.clone());
            accept_vote(&mut e, &mut x, &mut w, p, now, &self.dir)
        }
    }
}
