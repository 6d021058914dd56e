//! Identifier newtypes shared across the simulator.
//!
//! Names are reference-counted strings so that cloning them inside hot
//! simulation loops is a pointer bump.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

macro_rules! name_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(name: impl AsRef<str>) -> Self {
                Self(Arc::from(name.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), &*self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s)
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(Arc::from(s))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                String::deserialize(d).map(Self::from)
            }
        }
    };
}

name_type!(
    /// A participant in a deal (a person, organization, or contract).
    PartyId
);
name_type!(
    /// A simulated blockchain.
    ChainId
);
name_type!(
    /// A kind of fungible asset, e.g. `coin`.
    AssetKind
);
name_type!(
    /// A non-fungible token identifier, e.g. `seat-A1`.
    TokenId
);
name_type!(
    /// Globally unique deal identifier (carries its own nonce).
    DealId
);
name_type!(
    /// A CBC validator.
    ValidatorId
);

/// An escrow contract instance: one per (deal, chain, escrowing party).
///
/// Written `chain/escrower`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContractId {
    pub chain: ChainId,
    pub escrower: PartyId,
}

impl ContractId {
    pub fn new(chain: impl Into<ChainId>, escrower: impl Into<PartyId>) -> Self {
        Self {
            chain: chain.into(),
            escrower: escrower.into(),
        }
    }
}

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.chain, self.escrower)
    }
}

impl std::str::FromStr for ContractId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((c, e)) if !c.is_empty() && !e.is_empty() => Ok(Self::new(c, e)),
            _ => Err(format!("contract id must be chain/escrower, got {s:?}")),
        }
    }
}

impl Serialize for ContractId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContractId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}
