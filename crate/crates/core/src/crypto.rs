//! Signing, verification and path signatures.
//!
//! The default scheme is a keyed hash: `sig = SHA-256(tag ‖ secret ‖ msg)`.
//! It is fast and reproducible but is not public-key cryptography: checking a
//! signature goes through a [`KeyDirectory`], the simulation's stand-in for a
//! PKI, which is the only holder of every secret besides its owner. A real
//! asymmetric scheme fits behind [`SignatureScheme`] unchanged.
//!
//! # Canonical encoding
//!
//! Every signed message is the length-prefixed concatenation of its fields in
//! declaration order: each field is written as a big-endian `u32` byte length
//! followed by the bytes. Integers are encoded as 8-byte big-endian values
//! (themselves length-prefixed). Nested values are flattened in place.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::ids::{DealId, PartyId};

const SIG_TAG: &[u8] = b"xdeal/sig/v1";
const KEY_TAG: &[u8] = b"xdeal/key/v1";
const PUB_TAG: &[u8] = b"xdeal/pub/v1";
const NONCE_TAG: &[u8] = b"xdeal/nonce/v1";

pub fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Writer for the canonical length-prefixed encoding.
#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        let len = u32::try_from(b.len()).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn put(&mut self, v: &impl Canonical) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

/// Types with a bit-exact canonical encoding.
pub trait Canonical {
    fn encode(&self, enc: &mut Encoder);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    fn digest(&self) -> [u8; 32] {
        sha256(&[&self.canonical_bytes()])
    }
}

macro_rules! bytes32 {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; 32]);

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), &hex::encode(self.0)[..12])
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.0))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                let mut out = [0u8; 32];
                hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
                Ok(Self(out))
            }
        }
    };
}

bytes32!(PublicKey);
bytes32!(Signature);
bytes32!(
    /// 32-byte content digest used for entry hashes and `h` references.
    Hash
);

impl Hash {
    pub fn short(&self) -> String {
        hex::encode(&self.0[..8])
    }
}

#[derive(Clone, PartialEq, Eq)]
struct SecretKey([u8; 32]);

/// A key pair. The secret half never leaves this value except through
/// [`KeyDirectory`], which only uses it to check signatures.
#[derive(Clone)]
pub struct KeyPair {
    owner: String,
    public: PublicKey,
    secret: SecretKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("owner", &self.owner)
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    /// Deterministic key derivation from the run seed and the owner's name.
    pub fn derive(seed: u64, owner: &str) -> Self {
        let secret = sha256(&[KEY_TAG, &seed.to_be_bytes(), owner.as_bytes()]);
        let public = sha256(&[PUB_TAG, &secret]);
        Self {
            owner: owner.to_string(),
            public: PublicKey(public),
            secret: SecretKey(secret),
        }
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }
}

pub trait SignatureScheme {
    fn sign(&self, key: &KeyPair, msg: &[u8]) -> Signature;
    fn verify(&self, key: &PublicKey, msg: &[u8], sig: &Signature) -> bool;
}

pub fn sign(key: &KeyPair, msg: &[u8]) -> Signature {
    Signature(sha256(&[SIG_TAG, &key.secret.0, msg]))
}

/// Registry of known keys. Public keys are globally readable; verification
/// consults the registered secret.
#[derive(Clone, Default)]
pub struct KeyDirectory {
    secrets: BTreeMap<PublicKey, SecretKey>,
    parties: BTreeMap<PartyId, PublicKey>,
}

impl KeyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: &KeyPair) {
        self.secrets.insert(key.public, key.secret.clone());
    }

    pub fn register_party(&mut self, party: PartyId, key: &KeyPair) {
        self.register(key);
        self.parties.insert(party, key.public);
    }

    pub fn party_key(&self, party: &PartyId) -> Option<PublicKey> {
        self.parties.get(party).copied()
    }

    pub fn verify(&self, key: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        self.secrets
            .get(key)
            .is_some_and(|secret| sha256(&[SIG_TAG, &secret.0, msg]) == sig.0)
    }
}

impl fmt::Debug for KeyDirectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyDirectory")
            .field("parties", &self.parties)
            .finish_non_exhaustive()
    }
}

impl SignatureScheme for KeyDirectory {
    fn sign(&self, key: &KeyPair, msg: &[u8]) -> Signature {
        sign(key, msg)
    }

    fn verify(&self, key: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        KeyDirectory::verify(self, key, msg, sig)
    }
}

/// Single-use vote label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Nonce(pub u64);

impl Nonce {
    /// Derives the `counter`-th nonce of `party` under `seed`.
    pub fn derive(seed: u64, party: &PartyId, counter: u64) -> Self {
        let h = sha256(&[
            NONCE_TAG,
            &seed.to_be_bytes(),
            party.as_str().as_bytes(),
            &counter.to_be_bytes(),
        ]);
        Nonce(u64::from_be_bytes(h[..8].try_into().expect("8 bytes")))
    }
}

/// A commit vote by `voter` for deal `deal`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vote {
    pub deal: DealId,
    pub voter: PartyId,
    pub nonce: Nonce,
}

impl Canonical for Vote {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(self.deal.as_str())
            .str(self.voter.as_str())
            .u64(self.nonce.0);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub signer: PartyId,
    pub sig: Signature,
}

/// A vote wrapped in the ordered chain of signatures of the parties that
/// forwarded it. The first link is the voter's own.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathSignature {
    pub vote: Vote,
    pub links: Vec<Link>,
}

impl Canonical for PathSignature {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.vote).u64(self.links.len() as u64);
        for link in &self.links {
            enc.str(link.signer.as_str()).bytes(&link.sig.0);
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("{signer} already signed this path")]
    DuplicateSigner { signer: PartyId },
    #[error("key of {key_owner} cannot sign a vote by {voter}")]
    NotVoter { key_owner: String, voter: PartyId },
}

/// Why a path signature failed verification.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("empty path")]
    Empty,
    #[error("first signer {0} is not the voter")]
    NotVoterFirst(PartyId),
    #[error("duplicate signer {0}")]
    DuplicateSigner(PartyId),
    #[error("signer {0} is not a deal party")]
    Outsider(PartyId),
    #[error("no public key for {0}")]
    UnknownKey(PartyId),
    #[error("bad signature by {0}")]
    BadSignature(PartyId),
}

fn link_message(vote: &Vote, prior: &[Link]) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put(vote).u64(prior.len() as u64);
    for l in prior {
        enc.str(l.signer.as_str()).bytes(&l.sig.0);
    }
    enc.finish()
}

impl PathSignature {
    /// A fresh direct vote, signed by the voter.
    pub fn direct(vote: Vote, voter_key: &KeyPair) -> Result<Self, CryptoError> {
        if voter_key.owner() != vote.voter.as_str() {
            return Err(CryptoError::NotVoter {
                key_owner: voter_key.owner().to_string(),
                voter: vote.voter,
            });
        }
        let sig = sign(voter_key, &link_message(&vote, &[]));
        Ok(Self {
            links: vec![Link {
                signer: vote.voter.clone(),
                sig,
            }],
            vote,
        })
    }

    /// `|p|`, the number of signatures.
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn voter(&self) -> &PartyId {
        &self.vote.voter
    }

    pub fn has_signer(&self, party: &PartyId) -> bool {
        self.links.iter().any(|l| &l.signer == party)
    }

    pub fn signers(&self) -> impl Iterator<Item = &PartyId> {
        self.links.iter().map(|l| &l.signer)
    }
}

/// Appends `forwarder`'s signature over the vote and every prior link.
pub fn extend_path(p: &PathSignature, forwarder: &KeyPair) -> Result<PathSignature, CryptoError> {
    let signer = PartyId::new(forwarder.owner());
    if p.has_signer(&signer) {
        return Err(CryptoError::DuplicateSigner { signer });
    }
    let sig = sign(forwarder, &link_message(&p.vote, &p.links));
    let mut out = p.clone();
    out.links.push(Link { signer, sig });
    Ok(out)
}

/// Checks a path in contract order and returns the number of signature
/// verifications performed. Cheap structural checks run first, so a path
/// rejected for structure costs no verifications.
pub fn check_path(
    p: &PathSignature,
    plist: &BTreeSet<PartyId>,
    keys: &KeyDirectory,
) -> Result<usize, PathError> {
    let first = p.links.first().ok_or(PathError::Empty)?;
    if first.signer != p.vote.voter {
        return Err(PathError::NotVoterFirst(first.signer.clone()));
    }
    let mut seen = BTreeSet::new();
    for l in &p.links {
        if !plist.contains(&l.signer) {
            return Err(PathError::Outsider(l.signer.clone()));
        }
        if !seen.insert(&l.signer) {
            return Err(PathError::DuplicateSigner(l.signer.clone()));
        }
    }
    for (i, l) in p.links.iter().enumerate() {
        let key = keys
            .party_key(&l.signer)
            .ok_or_else(|| PathError::UnknownKey(l.signer.clone()))?;
        if !keys.verify(&key, &link_message(&p.vote, &p.links[..i]), &l.sig) {
            return Err(PathError::BadSignature(l.signer.clone()));
        }
    }
    Ok(p.links.len())
}

pub fn verify_path(p: &PathSignature, plist: &BTreeSet<PartyId>, keys: &KeyDirectory) -> bool {
    check_path(p, plist, keys).is_ok()
}
