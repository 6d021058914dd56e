//! Deviating-party strategies and the drivers that search over them.
//!
//! A strategy is a set of departures from the compliant party logic in
//! [`crate::agent`]. Strategies act only through the same interface as
//! compliant parties: publish entries, read their own views, set timers.
//! They never touch another party's keys or wallet, or a contract's state.
//! The catalog is a finite under-approximation of arbitrary deviation; the
//! explorer quantifies over it plus message scheduling.

pub mod campaign;
pub mod explore;
pub mod gen;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::deal::DealSpec;
use crate::escrow::Outcome;
use crate::ids::{ContractId, PartyId};

/// Protocol phases, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Escrow,
    Transfer,
    Validation,
    Commit,
    Settle,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Escrow,
        Phase::Transfer,
        Phase::Validation,
        Phase::Commit,
        Phase::Settle,
    ];
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Strategy {
    #[default]
    Compliant,
    /// Stops acting at the start of `phase`.
    SilentCrash { phase: Phase },
    /// From the commit phase on, never publishes to contracts that involve
    /// `target`.
    SelectiveCommunication { target: PartyId },
    /// Escrows and transfers `extra` more of every fungible asset it sends
    /// from its own contracts.
    Overpay { extra: u64 },
    /// Never casts its own vote; otherwise compliant.
    WithholdOwnVote,
    /// Votes but never forwards other votes (timelock) or settles (CBC).
    IgnoreForwarding,
    /// Republishes its own and observed votes.
    ReplayVotes {
        #[serde(default = "two")]
        copies: u32,
    },
    /// Publishes votes and certificates with signatures it cannot make.
    ForgeSignatures {
        #[serde(default = "two")]
        attempts: u32,
    },
    /// Settles with a certificate for `status` built from the corrupt
    /// validators' signatures.
    FakeCertificate { status: Outcome },
    /// Votes commit, then abort right away (CBC).
    AbortAfterCommit,
    /// Casts its votes after its deadlines have passed.
    LateClaim,
    /// Votes only on `target`, one tick before a direct vote's deadline.
    LastMinuteVote { target: ContractId },
}

fn two() -> u32 {
    2
}

impl Strategy {
    pub fn is_compliant(&self) -> bool {
        matches!(self, Strategy::Compliant)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Strategy::Compliant => "compliant",
            Strategy::SilentCrash { .. } => "silent-crash",
            Strategy::SelectiveCommunication { .. } => "selective-communication",
            Strategy::Overpay { .. } => "overpay",
            Strategy::WithholdOwnVote => "withhold-own-vote",
            Strategy::IgnoreForwarding => "ignore-forwarding",
            Strategy::ReplayVotes { .. } => "replay-votes",
            Strategy::ForgeSignatures { .. } => "forge-signatures",
            Strategy::FakeCertificate { .. } => "fake-certificate",
            Strategy::AbortAfterCommit => "abort-after-commit",
            Strategy::LateClaim => "late-claim",
            Strategy::LastMinuteVote { .. } => "last-minute-vote",
        }
    }

    pub fn validate(&self, deal: &DealSpec) -> Result<(), String> {
        match self {
            Strategy::SelectiveCommunication { target } if !deal.has_party(target) => {
                Err(format!("unknown target party {target}"))
            }
            Strategy::LastMinuteVote { target } if !deal.contracts().contains_key(target) => {
                Err(format!("unknown target contract {target}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::SilentCrash { phase } => write!(f, "silent-crash({phase:?})"),
            Strategy::SelectiveCommunication { target } => write!(f, "selective-communication({target})"),
            Strategy::Overpay { extra } => write!(f, "overpay({extra})"),
            Strategy::ReplayVotes { copies } => write!(f, "replay-votes({copies})"),
            Strategy::ForgeSignatures { attempts } => write!(f, "forge-signatures({attempts})"),
            Strategy::FakeCertificate { status } => write!(f, "fake-certificate({status:?})"),
            Strategy::LastMinuteVote { target } => write!(f, "last-minute-vote({target})"),
            other => f.write_str(other.kind()),
        }
    }
}

/// Every catalog strategy, instantiated with the parameters that make sense
/// for `party` in `deal`.
pub fn builtin_strategies(deal: &DealSpec, party: &PartyId) -> Vec<Strategy> {
    let mut out: Vec<Strategy> = Phase::ALL
        .iter()
        .map(|&phase| Strategy::SilentCrash { phase })
        .collect();
    out.extend(
        deal.parties
            .iter()
            .filter(|p| *p != party)
            .map(|p| Strategy::SelectiveCommunication { target: p.clone() }),
    );
    out.extend([
        Strategy::Overpay { extra: 900 },
        Strategy::WithholdOwnVote,
        Strategy::IgnoreForwarding,
        Strategy::ReplayVotes { copies: 2 },
        Strategy::ForgeSignatures { attempts: 2 },
        Strategy::FakeCertificate {
            status: Outcome::Commit,
        },
        Strategy::FakeCertificate {
            status: Outcome::Abort,
        },
        Strategy::AbortAfterCommit,
        Strategy::LateClaim,
    ]);
    out.extend(
        deal.contracts()
            .into_keys()
            .map(|target| Strategy::LastMinuteVote { target }),
    );
    out
}
