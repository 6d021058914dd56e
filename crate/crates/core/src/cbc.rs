//! Certified-blockchain commit protocol: the shared log, the decisive-vote
//! rule, validator certificates and the escrow-side settle check.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{sign, Canonical, Encoder, Hash, KeyDirectory, KeyPair, PublicKey, Signature};
use crate::escrow::{EscrowState, Outcome, Resolution, Wallets};
use crate::ids::{DealId, PartyId, ValidatorId};
use crate::ledger::Tick;

/// An entry on the certified blockchain.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "kebab-case")]
pub enum CbcEntry {
    StartDeal { deal: DealId, plist: Vec<PartyId> },
    Commit { deal: DealId, h: Hash, voter: PartyId },
    Abort { deal: DealId, h: Hash, voter: PartyId },
}

impl CbcEntry {
    pub fn deal(&self) -> &DealId {
        match self {
            CbcEntry::StartDeal { deal, .. }
            | CbcEntry::Commit { deal, .. }
            | CbcEntry::Abort { deal, .. } => deal,
        }
    }
}

/// An accepted entry with its log position and hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CbcRecord {
    pub position: u64,
    pub hash: Hash,
    pub entry: CbcEntry,
}

pub fn start_hash(position: u64, deal: &DealId, plist: &[PartyId]) -> Hash {
    let mut enc = Encoder::new();
    enc.str("start-deal").u64(position).str(deal.as_str());
    for p in plist {
        enc.str(p.as_str());
    }
    Hash(crate::crypto::sha256(&[&enc.finish()]))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CbcError {
    #[error("no startDeal for {0}")]
    MissingStart(DealId),
    #[error("{h} is not the definitive startDeal of {deal}")]
    NotDefinitive { deal: DealId, h: String },
    #[error("deal {0} is undecided")]
    Undecided(DealId),
    #[error("validator set needs 3f+1 members, got {got} for f={f}")]
    BadValidatorSet { f: usize, got: usize },
}

/// Earliest startDeal for `deal` in `log`.
pub fn definitive_start<'a>(log: &'a [CbcRecord], deal: &DealId) -> Option<(&'a CbcRecord, &'a [PartyId])> {
    log.iter().find_map(|r| match &r.entry {
        CbcEntry::StartDeal { deal: d, plist } if d == deal => Some((r, plist.as_slice())),
        _ => None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Decision {
    Undecided,
    Committed { position: u64 },
    Aborted { position: u64 },
}

impl Decision {
    pub fn outcome(self) -> Option<Outcome> {
        match self {
            Decision::Undecided => None,
            Decision::Committed { .. } => Some(Outcome::Commit),
            Decision::Aborted { .. } => Some(Outcome::Abort),
        }
    }
}

/// Scans the log in order. The deal commits at the entry where the last
/// missing party's commit lands with no abort before it, and aborts at the
/// first abort that precedes that point.
pub fn cbc_decide(log: &[CbcRecord], deal: &DealId, h: &Hash) -> Result<Decision, CbcError> {
    let (start, plist) = definitive_start(log, deal).ok_or_else(|| CbcError::MissingStart(deal.clone()))?;
    if &start.hash != h {
        return Err(CbcError::NotDefinitive {
            deal: deal.clone(),
            h: h.short(),
        });
    }
    let plist: BTreeSet<&PartyId> = plist.iter().collect();
    let mut committed = BTreeSet::new();
    for r in log {
        match &r.entry {
            CbcEntry::Commit { deal: d, h: vh, voter } if d == deal && vh == h && plist.contains(voter) => {
                committed.insert(voter);
                if committed.len() == plist.len() {
                    return Ok(Decision::Committed { position: r.position });
                }
            }
            CbcEntry::Abort { deal: d, h: vh, voter } if d == deal && vh == h && plist.contains(voter) => {
                return Ok(Decision::Aborted { position: r.position });
            }
            _ => {}
        }
    }
    Ok(Decision::Undecided)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidatorSet {
    pub epoch: u64,
    pub f: usize,
    pub members: Vec<(ValidatorId, PublicKey)>,
}

impl ValidatorSet {
    pub fn new(epoch: u64, f: usize, members: Vec<(ValidatorId, PublicKey)>) -> Result<Self, CbcError> {
        if members.len() != 3 * f + 1 {
            return Err(CbcError::BadValidatorSet {
                f,
                got: members.len(),
            });
        }
        Ok(Self { epoch, f, members })
    }

    pub fn key_of(&self, v: &ValidatorId) -> Option<&PublicKey> {
        self.members.iter().find(|(id, _)| id == v).map(|(_, k)| k)
    }

    pub fn quorum(&self) -> usize {
        self.f + 1
    }
}

impl Canonical for ValidatorSet {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.epoch).u64(self.f as u64).u64(self.members.len() as u64);
        for (id, key) in &self.members {
            enc.str(id.as_str()).bytes(&key.0);
        }
    }
}

/// What a certificate attests to.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Statement {
    pub deal: DealId,
    pub h: Hash,
    pub status: Outcome,
}

impl Canonical for Statement {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(self.deal.as_str()).bytes(&self.h.0).str(match self.status {
            Outcome::Commit => "committed",
            Outcome::Abort => "aborted",
        });
    }
}

/// The old validator set's endorsement of its successor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Reconfiguration {
    pub next: ValidatorSet,
    pub signatures: Vec<(ValidatorId, Signature)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Certificate {
    pub statement: Statement,
    pub epoch: u64,
    pub signatures: Vec<(ValidatorId, Signature)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reconfigurations: Vec<Reconfiguration>,
}

impl Canonical for Certificate {
    /// Statement, epoch, then (validator, signature) pairs sorted by id.
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.statement).u64(self.epoch);
        let mut sigs = self.signatures.clone();
        sigs.sort();
        enc.u64(sigs.len() as u64);
        for (id, sig) in &sigs {
            enc.str(id.as_str()).bytes(&sig.0);
        }
        enc.u64(self.reconfigurations.len() as u64);
        for r in &self.reconfigurations {
            enc.put(&r.next);
            for (id, sig) in &r.signatures {
                enc.str(id.as_str()).bytes(&sig.0);
            }
        }
    }
}

/// Escrow parameters fixed at escrow time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CbcExt {
    pub h: Hash,
    pub validators: ValidatorSet,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SettleRejection {
    #[error("contract already {0:?}")]
    NotActive(Resolution),
    #[error("certificate is about another deal")]
    WrongDeal,
    #[error("duplicate signer {0}")]
    DuplicateSigner(ValidatorId),
    #[error("{0} is not a validator of epoch {1}")]
    NonValidator(ValidatorId, u64),
    #[error("{got} signatures, need {need}")]
    TooFewSignatures { got: usize, need: usize },
    #[error("bad signature by {0}")]
    BadSignature(ValidatorId),
    #[error("certificate epoch {cert} does not follow from contract epoch {contract}")]
    StaleEpoch { cert: u64, contract: u64 },
}

/// Checks an f+1 quorum from `set` over `msg` and returns how many
/// signatures were verified.
pub fn check_quorum(
    set: &ValidatorSet,
    msg: &[u8],
    sigs: &[(ValidatorId, Signature)],
    keys: &KeyDirectory,
) -> Result<u32, SettleRejection> {
    let mut seen = BTreeSet::new();
    for (id, _) in sigs {
        if !seen.insert(id) {
            return Err(SettleRejection::DuplicateSigner(id.clone()));
        }
    }
    for (id, _) in sigs {
        if set.key_of(id).is_none() {
            return Err(SettleRejection::NonValidator(id.clone(), set.epoch));
        }
    }
    if sigs.len() < set.quorum() {
        return Err(SettleRejection::TooFewSignatures {
            got: sigs.len(),
            need: set.quorum(),
        });
    }
    for (id, sig) in &sigs[..set.quorum()] {
        let key = set.key_of(id).expect("membership checked");
        if !keys.verify(key, msg, sig) {
            return Err(SettleRejection::BadSignature(id.clone()));
        }
    }
    Ok(set.quorum() as u32)
}

/// Verifies a certificate against the contract's validator set and returns
/// the number of signatures verified.
pub fn verify_certificate(
    deal: &DealId,
    ext: &CbcExt,
    cert: &Certificate,
    keys: &KeyDirectory,
) -> Result<u32, SettleRejection> {
    if &cert.statement.deal != deal || cert.statement.h != ext.h {
        return Err(SettleRejection::WrongDeal);
    }
    let mut set = &ext.validators;
    let mut checks = 0;
    for r in &cert.reconfigurations {
        if r.next.epoch != set.epoch + 1 {
            return Err(SettleRejection::StaleEpoch {
                cert: r.next.epoch,
                contract: set.epoch,
            });
        }
        checks += check_quorum(set, &r.next.canonical_bytes(), &r.signatures, keys)?;
        set = &r.next;
    }
    if cert.epoch != set.epoch {
        return Err(SettleRejection::StaleEpoch {
            cert: cert.epoch,
            contract: set.epoch,
        });
    }
    checks += check_quorum(set, &cert.statement.canonical_bytes(), &cert.signatures, keys)?;
    Ok(checks)
}

/// Finalizes the escrow per a verified certificate.
pub fn contract_settle(
    escrow: &mut EscrowState,
    ext: &CbcExt,
    wallets: &mut Wallets,
    cert: &Certificate,
    keys: &KeyDirectory,
) -> Result<u32, SettleRejection> {
    if !escrow.is_active() {
        return Err(SettleRejection::NotActive(escrow.resolution));
    }
    let checks = verify_certificate(&escrow.deal, ext, cert, keys)?;
    escrow
        .finalize(wallets, cert.statement.status)
        .expect("active contract finalizes");
    Ok(checks)
}

/// The validators of the certified blockchain. Consensus is abstracted away:
/// honest validators sign exactly what the log decides, and up to `f`
/// corrupt ones sign anything an adversary asks for.
#[derive(Clone, Debug)]
pub struct ValidatorService {
    sets: Vec<ValidatorSet>,
    links: Vec<Reconfiguration>,
    keys: Vec<Vec<KeyPair>>,
    corrupt: BTreeSet<ValidatorId>,
    reconfigure_at: Tick,
}

pub fn validator_name(epoch: u64, index: usize) -> ValidatorId {
    if epoch == 0 {
        ValidatorId::new(format!("v{index}"))
    } else {
        ValidatorId::new(format!("v{index}.e{epoch}"))
    }
}

impl ValidatorService {
    /// Derives `reconfigurations + 1` validator sets of size `3f+1` and
    /// registers their keys.
    pub fn new(
        seed: u64,
        f: usize,
        reconfigurations: usize,
        reconfigure_at: Tick,
        corrupt: BTreeSet<ValidatorId>,
        dir: &mut KeyDirectory,
    ) -> Self {
        let mut sets = Vec::new();
        let mut keys = Vec::new();
        for epoch in 0..=reconfigurations as u64 {
            let kps: Vec<KeyPair> = (0..3 * f + 1)
                .map(|i| KeyPair::derive(seed, &format!("validator/{}", validator_name(epoch, i))))
                .collect();
            for k in &kps {
                dir.register(k);
            }
            let members = kps
                .iter()
                .enumerate()
                .map(|(i, k)| (validator_name(epoch, i), k.public()))
                .collect();
            sets.push(ValidatorSet::new(epoch, f, members).expect("3f+1 members"));
            keys.push(kps);
        }
        let mut svc = Self {
            sets,
            links: Vec::new(),
            keys,
            corrupt,
            reconfigure_at,
        };
        for e in 1..svc.sets.len() {
            let next = svc.sets[e].clone();
            let signatures = svc.honest_sign(e - 1, &next.canonical_bytes());
            svc.links.push(Reconfiguration { next, signatures });
        }
        svc
    }

    pub fn initial(&self) -> &ValidatorSet {
        &self.sets[0]
    }

    pub fn f(&self) -> usize {
        self.sets[0].f
    }

    pub fn epoch_at(&self, now: Tick) -> usize {
        if now >= self.reconfigure_at {
            self.sets.len() - 1
        } else {
            0
        }
    }

    fn honest_sign(&self, epoch: usize, msg: &[u8]) -> Vec<(ValidatorId, Signature)> {
        let set = &self.sets[epoch];
        set.members
            .iter()
            .zip(&self.keys[epoch])
            .filter(|((id, _), _)| !self.corrupt.contains(id))
            .take(set.quorum())
            .map(|((id, _), k)| (id.clone(), sign(k, msg)))
            .collect()
    }

    /// A certificate for the log's current decision on `(deal, h)`.
    pub fn issue(&self, log: &[CbcRecord], deal: &DealId, h: &Hash, now: Tick) -> Result<Certificate, CbcError> {
        let status = cbc_decide(log, deal, h)?
            .outcome()
            .ok_or_else(|| CbcError::Undecided(deal.clone()))?;
        let statement = Statement {
            deal: deal.clone(),
            h: *h,
            status,
        };
        let epoch = self.epoch_at(now);
        Ok(Certificate {
            signatures: self.honest_sign(epoch, &statement.canonical_bytes()),
            statement,
            epoch: epoch as u64,
            reconfigurations: self.links[..epoch].to_vec(),
        })
    }

    /// Signatures the corrupt validators of the current epoch put on any
    /// statement.
    pub fn corrupt_sign(&self, statement: &Statement, now: Tick) -> Vec<(ValidatorId, Signature)> {
        let epoch = self.epoch_at(now);
        let msg = statement.canonical_bytes();
        self.sets[epoch]
            .members
            .iter()
            .zip(&self.keys[epoch])
            .filter(|((id, _), _)| self.corrupt.contains(id))
            .map(|((id, _), k)| (id.clone(), sign(k, &msg)))
            .collect()
    }

    pub fn links(&self, epoch: usize) -> &[Reconfiguration] {
        &self.links[..epoch]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::AssetBundle;
    use crate::ids::ContractId;

    fn p(s: &str) -> PartyId {
        PartyId::new(s)
    }

    /// Builds a log with a startDeal over `parties` followed by `votes`
    /// given as (party index, is_commit).
    fn log_of(parties: &[&str], votes: &[(usize, bool)]) -> (Vec<CbcRecord>, Hash) {
        let deal = DealId::new("D");
        let plist: Vec<PartyId> = parties.iter().map(|s| p(s)).collect();
        let h = start_hash(0, &deal, &plist);
        let mut log = vec![CbcRecord {
            position: 0,
            hash: h,
            entry: CbcEntry::StartDeal {
                deal: deal.clone(),
                plist: plist.clone(),
            },
        }];
        for (i, &(who, commit)) in votes.iter().enumerate() {
            let voter = plist[who].clone();
            let entry = if commit {
                CbcEntry::Commit { deal: deal.clone(), h, voter }
            } else {
                CbcEntry::Abort { deal: deal.clone(), h, voter }
            };
            log.push(CbcRecord {
                position: i as u64 + 1,
                hash: Hash([i as u8; 32]),
                entry,
            });
        }
        (log, h)
    }

    fn decide(parties: &[&str], votes: &[(usize, bool)]) -> Decision {
        let (log, h) = log_of(parties, votes);
        cbc_decide(&log, &"D".into(), &h).unwrap()
    }

    #[test]
    fn decisive_vote_examples() {
        let abc = ["a", "b", "c"];
        assert_eq!(
            decide(&abc, &[(0, true), (1, true), (2, true)]),
            Decision::Committed { position: 3 }
        );
        assert_eq!(decide(&abc, &[(0, true), (1, false)]), Decision::Aborted { position: 2 });
        assert_eq!(
            decide(&abc, &[(0, true), (1, true), (0, false), (2, true)]),
            Decision::Aborted { position: 3 }
        );
        assert_eq!(
            decide(&abc, &[(0, true), (1, true), (2, true), (0, false)]),
            Decision::Committed { position: 3 }
        );
        assert_eq!(decide(&abc, &[(0, true)]), Decision::Undecided);
    }

    #[test]
    fn earliest_start_is_definitive() {
        let (mut log, h) = log_of(&["a", "b"], &[]);
        let later = start_hash(1, &"D".into(), &[p("a"), p("b")]);
        log.push(CbcRecord {
            position: 1,
            hash: later,
            entry: CbcEntry::StartDeal {
                deal: "D".into(),
                plist: vec![p("a"), p("b")],
            },
        });
        assert!(cbc_decide(&log, &"D".into(), &h).is_ok());
        assert!(matches!(
            cbc_decide(&log, &"D".into(), &later),
            Err(CbcError::NotDefinitive { .. })
        ));
        assert!(matches!(
            cbc_decide(&log, &"E".into(), &h),
            Err(CbcError::MissingStart(_))
        ));
    }

    struct Fx {
        dir: KeyDirectory,
        svc: ValidatorService,
        log: Vec<CbcRecord>,
        h: Hash,
    }

    fn fx(reconfigurations: usize, corrupt: &[&str]) -> Fx {
        let mut dir = KeyDirectory::new();
        let svc = ValidatorService::new(
            3,
            1,
            reconfigurations,
            10,
            corrupt.iter().map(ValidatorId::new).collect(),
            &mut dir,
        );
        let (log, h) = log_of(&["a", "b"], &[(0, true), (1, true)]);
        Fx { dir, svc, log, h }
    }

    fn fresh_escrow(wallets: &mut Wallets) -> EscrowState {
        let mut e = EscrowState::new(ContractId::new("coins", "a"), "D".into(), [p("a"), p("b")].into());
        let coins = AssetBundle::fungible("coins", "coin", 5);
        wallets.deposit(&p("a"), &coins).unwrap();
        e.escrow(wallets, &p("a"), &coins).unwrap();
        e.tentative_transfer(&p("a"), &coins, &p("b")).unwrap();
        e
    }

    #[test]
    fn valid_certificate_settles_with_f_plus_one_checks() {
        let f = fx(0, &[]);
        let cert = f.svc.issue(&f.log, &"D".into(), &f.h, 0).unwrap();
        assert_eq!(cert.signatures.len(), 2);
        let ext = CbcExt {
            h: f.h,
            validators: f.svc.initial().clone(),
        };
        let mut w = Wallets::new();
        let mut e = fresh_escrow(&mut w);
        assert_eq!(contract_settle(&mut e, &ext, &mut w, &cert, &f.dir), Ok(2));
        assert_eq!(w.get(&p("b")).amount(&"coins".into(), &"coin".into()), 5);
        assert_eq!(
            contract_settle(&mut e, &ext, &mut w, &cert, &f.dir),
            Err(SettleRejection::NotActive(Resolution::Committed))
        );
    }

    #[test]
    fn undecided_deal_has_no_certificate() {
        let f = fx(0, &[]);
        let (log, h) = log_of(&["a", "b"], &[(0, true)]);
        assert!(matches!(
            f.svc.issue(&log, &"D".into(), &h, 0),
            Err(CbcError::Undecided(_))
        ));
    }

    #[test]
    fn forged_certificates_are_rejected() {
        let f = fx(0, &["v3"]);
        let ext = CbcExt {
            h: f.h,
            validators: f.svc.initial().clone(),
        };
        let statement = Statement {
            deal: "D".into(),
            h: f.h,
            status: Outcome::Abort,
        };
        let corrupt = f.svc.corrupt_sign(&statement, 0);
        assert_eq!(corrupt.len(), 1);
        let base = Certificate {
            statement: statement.clone(),
            epoch: 0,
            signatures: corrupt.clone(),
            reconfigurations: vec![],
        };
        let check = |c: &Certificate| verify_certificate(&"D".into(), &ext, c, &f.dir);
        assert_eq!(
            check(&base),
            Err(SettleRejection::TooFewSignatures { got: 1, need: 2 })
        );

        let outsider = KeyPair::derive(9, "mallory");
        let mut with_outsider = base.clone();
        with_outsider
            .signatures
            .push((ValidatorId::new("mallory"), sign(&outsider, &statement.canonical_bytes())));
        assert!(matches!(check(&with_outsider), Err(SettleRejection::NonValidator(..))));

        let mut impersonated = base.clone();
        impersonated
            .signatures
            .push((ValidatorId::new("v0"), sign(&outsider, &statement.canonical_bytes())));
        assert!(matches!(check(&impersonated), Err(SettleRejection::BadSignature(..))));

        let mut dup = base.clone();
        dup.signatures.push(corrupt[0].clone());
        assert!(matches!(check(&dup), Err(SettleRejection::DuplicateSigner(..))));
    }

    #[test]
    fn reconfigured_certificate_costs_two_quorums() {
        let f = fx(1, &[]);
        let ext = CbcExt {
            h: f.h,
            validators: f.svc.initial().clone(),
        };
        let cert = f.svc.issue(&f.log, &"D".into(), &f.h, 10).unwrap();
        assert_eq!(cert.epoch, 1);
        assert_eq!(verify_certificate(&"D".into(), &ext, &cert, &f.dir), Ok(4));
        let mut stripped = cert.clone();
        stripped.reconfigurations.clear();
        assert!(matches!(
            verify_certificate(&"D".into(), &ext, &stripped, &f.dir),
            Err(SettleRejection::StaleEpoch { .. })
        ));
    }
}
