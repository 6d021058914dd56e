//! Asset bundles: fungible balances plus sets of non-fungible tokens.
//!
//! Textual form, one item per string:
//!
//! - `"101 coin@coins"`: 101 units of `coin` on chain `coins`
//! - `"#seat-A1@tickets"`: token `seat-A1` on chain `tickets`

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ids::{AssetKind, ChainId, TokenId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssetError {
    #[error("cannot parse asset item {0:?}")]
    Parse(String),
    #[error("token {token}@{chain} appears twice")]
    DuplicateToken { chain: ChainId, token: TokenId },
    #[error("amount overflow")]
    Overflow,
}

/// A single asset item, used for parsing and display.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AssetItem {
    Fungible {
        chain: ChainId,
        kind: AssetKind,
        amount: u64,
    },
    Token {
        chain: ChainId,
        token: TokenId,
    },
}

impl FromStr for AssetItem {
    type Err = AssetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AssetError::Parse(s.to_string());
        let s = s.trim();
        let (body, chain) = s.rsplit_once('@').ok_or_else(err)?;
        if chain.is_empty() {
            return Err(err());
        }
        if let Some(token) = body.strip_prefix('#') {
            if token.is_empty() || token.contains(char::is_whitespace) {
                return Err(err());
            }
            return Ok(AssetItem::Token {
                chain: chain.into(),
                token: token.into(),
            });
        }
        let (amount, kind) = body.split_once(' ').ok_or_else(err)?;
        let amount: u64 = amount.parse().map_err(|_| err())?;
        let kind = kind.trim();
        if kind.is_empty() {
            return Err(err());
        }
        Ok(AssetItem::Fungible {
            chain: chain.into(),
            kind: kind.into(),
            amount,
        })
    }
}

impl fmt::Display for AssetItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssetItem::Fungible {
                chain,
                kind,
                amount,
            } => write!(f, "{amount} {kind}@{chain}"),
            AssetItem::Token { chain, token } => write!(f, "#{token}@{chain}"),
        }
    }
}

/// A normalized collection of assets. Zero-amount fungible entries never
/// appear; a token appears at most once.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AssetBundle {
    fungible: BTreeMap<(ChainId, AssetKind), u64>,
    tokens: BTreeSet<(ChainId, TokenId)>,
}

impl AssetBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fungible(chain: impl Into<ChainId>, kind: impl Into<AssetKind>, amount: u64) -> Self {
        let mut b = Self::new();
        b.add_fungible(chain.into(), kind.into(), amount)
            .expect("fresh bundle cannot overflow");
        b
    }

    pub fn token(chain: impl Into<ChainId>, token: impl Into<TokenId>) -> Self {
        let mut b = Self::new();
        b.tokens.insert((chain.into(), token.into()));
        b
    }

    pub fn parse_items<S: AsRef<str>>(items: &[S]) -> Result<Self, AssetError> {
        let mut b = Self::new();
        for item in items {
            b.add_item(item.as_ref().parse()?)?;
        }
        Ok(b)
    }

    pub fn add_item(&mut self, item: AssetItem) -> Result<(), AssetError> {
        match item {
            AssetItem::Fungible {
                chain,
                kind,
                amount,
            } => self.add_fungible(chain, kind, amount),
            AssetItem::Token { chain, token } => self.add_token(chain, token),
        }
    }

    pub fn add_fungible(
        &mut self,
        chain: ChainId,
        kind: AssetKind,
        amount: u64,
    ) -> Result<(), AssetError> {
        if amount == 0 {
            return Ok(());
        }
        let slot = self.fungible.entry((chain, kind)).or_insert(0);
        *slot = slot.checked_add(amount).ok_or(AssetError::Overflow)?;
        Ok(())
    }

    pub fn add_token(&mut self, chain: ChainId, token: TokenId) -> Result<(), AssetError> {
        if !self.tokens.insert((chain.clone(), token.clone())) {
            return Err(AssetError::DuplicateToken { chain, token });
        }
        Ok(())
    }

    /// Adds every item of `other`; fails on a token present in both.
    pub fn merge(&mut self, other: &AssetBundle) -> Result<(), AssetError> {
        for ((chain, kind), amount) in &other.fungible {
            self.add_fungible(chain.clone(), kind.clone(), *amount)?;
        }
        for (chain, token) in &other.tokens {
            self.add_token(chain.clone(), token.clone())?;
        }
        Ok(())
    }

    pub fn merged(mut self, other: &AssetBundle) -> Result<AssetBundle, AssetError> {
        self.merge(other)?;
        Ok(self)
    }

    /// True iff `self` holds at least everything in `other`
    /// (componentwise amounts, superset of tokens).
    pub fn contains(&self, other: &AssetBundle) -> bool {
        other
            .fungible
            .iter()
            .all(|(k, amt)| self.fungible.get(k).is_some_and(|have| have >= amt))
            && other.tokens.is_subset(&self.tokens)
    }

    /// Removes `other` from `self`, or returns `None` (leaving `self`
    /// untouched) when `self` does not contain it.
    pub fn try_remove(&mut self, other: &AssetBundle) -> Option<()> {
        if !self.contains(other) {
            return None;
        }
        for (k, amt) in &other.fungible {
            let slot = self.fungible.get_mut(k).expect("checked by contains");
            *slot -= amt;
            if *slot == 0 {
                self.fungible.remove(k);
            }
        }
        for t in &other.tokens {
            self.tokens.remove(t);
        }
        Some(())
    }

    pub fn is_empty(&self) -> bool {
        self.fungible.is_empty() && self.tokens.is_empty()
    }

    pub fn amount(&self, chain: &ChainId, kind: &AssetKind) -> u64 {
        self.fungible
            .get(&(chain.clone(), kind.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn has_token(&self, chain: &ChainId, token: &TokenId) -> bool {
        self.tokens.contains(&(chain.clone(), token.clone()))
    }

    pub fn fungible_entries(&self) -> impl Iterator<Item = (&ChainId, &AssetKind, u64)> {
        self.fungible.iter().map(|((c, k), a)| (c, k, *a))
    }

    pub fn token_entries(&self) -> impl Iterator<Item = (&ChainId, &TokenId)> {
        self.tokens.iter().map(|(c, t)| (c, t))
    }

    pub fn chains(&self) -> BTreeSet<ChainId> {
        self.fungible
            .keys()
            .map(|(c, _)| c.clone())
            .chain(self.tokens.iter().map(|(c, _)| c.clone()))
            .collect()
    }

    /// The part of the bundle that lives on `chain`.
    pub fn on_chain(&self, chain: &ChainId) -> AssetBundle {
        AssetBundle {
            fungible: self
                .fungible
                .iter()
                .filter(|((c, _), _)| c == chain)
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            tokens: self
                .tokens
                .iter()
                .filter(|(c, _)| c == chain)
                .cloned()
                .collect(),
        }
    }

    pub fn items(&self) -> Vec<AssetItem> {
        let mut out: Vec<AssetItem> = self
            .fungible
            .iter()
            .map(|((chain, kind), amount)| AssetItem::Fungible {
                chain: chain.clone(),
                kind: kind.clone(),
                amount: *amount,
            })
            .collect();
        out.extend(self.tokens.iter().map(|(chain, token)| AssetItem::Token {
            chain: chain.clone(),
            token: token.clone(),
        }));
        out
    }

    /// Splits `gross_in - gross_out` into its positive part (net incoming)
    /// and negative part (net outgoing). Identical fungible kinds cancel and
    /// a token present on both sides drops out.
    pub fn net(gross_in: &AssetBundle, gross_out: &AssetBundle) -> (AssetBundle, AssetBundle) {
        let mut incoming = AssetBundle::new();
        let mut outgoing = AssetBundle::new();
        let keys: BTreeSet<_> = gross_in
            .fungible
            .keys()
            .chain(gross_out.fungible.keys())
            .cloned()
            .collect();
        for key in keys {
            let i = gross_in.fungible.get(&key).copied().unwrap_or(0);
            let o = gross_out.fungible.get(&key).copied().unwrap_or(0);
            if i > o {
                incoming.fungible.insert(key, i - o);
            } else if o > i {
                outgoing.fungible.insert(key, o - i);
            }
        }
        incoming.tokens = gross_in
            .tokens
            .difference(&gross_out.tokens)
            .cloned()
            .collect();
        outgoing.tokens = gross_out
            .tokens
            .difference(&gross_in.tokens)
            .cloned()
            .collect();
        (incoming, outgoing)
    }
}

impl fmt::Display for AssetBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("{}");
        }
        let items: Vec<String> = self.items().iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", items.join(", "))
    }
}

impl Serialize for AssetBundle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let items: Vec<String> = self.items().iter().map(ToString::to_string).collect();
        items.serialize(s)
    }
}

impl<'de> Deserialize<'de> for AssetBundle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let items = Vec::<String>::deserialize(d)?;
        AssetBundle::parse_items(&items).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_item_forms() {
        let b = AssetBundle::parse_items(&["101 coin@coins", "#seat-A1@tickets"]).unwrap();
        assert_eq!(b.amount(&"coins".into(), &"coin".into()), 101);
        assert!(b.has_token(&"tickets".into(), &"seat-A1".into()));
        assert_eq!(b.to_string(), "{101 coin@coins, #seat-A1@tickets}");
    }

    #[test]
    fn rejects_malformed_items() {
        for bad in ["coin@coins", "x coin@coins", "#@t", "5 coin", "#a b@t", "5 @c"] {
            assert!(bad.parse::<AssetItem>().is_err(), "{bad}");
        }
    }

    #[test]
    fn zero_amounts_are_normalized_away() {
        let b = AssetBundle::fungible("c", "coin", 0);
        assert!(b.is_empty());
        assert_eq!(b, AssetBundle::new());
    }

    #[test]
    fn duplicate_token_is_an_error() {
        let mut b = AssetBundle::token("t", "x");
        assert!(matches!(
            b.merge(&AssetBundle::token("t", "x")),
            Err(AssetError::DuplicateToken { .. })
        ));
    }

    #[test]
    fn try_remove_is_all_or_nothing() {
        let mut b = AssetBundle::parse_items(&["150 coin@c", "#a@t"]).unwrap();
        let too_much = AssetBundle::parse_items(&["151 coin@c"]).unwrap();
        assert!(b.try_remove(&too_much).is_none());
        assert_eq!(b.amount(&"c".into(), &"coin".into()), 150);
        b.try_remove(&AssetBundle::parse_items(&["101 coin@c", "#a@t"]).unwrap())
            .unwrap();
        assert_eq!(b, AssetBundle::fungible("c", "coin", 49));
    }

    #[test]
    fn net_cancels_matching_flows() {
        let gin = AssetBundle::parse_items(&["101 coin@c", "#tix@t"]).unwrap();
        let gout = AssetBundle::parse_items(&["100 coin@c", "#tix@t"]).unwrap();
        let (i, o) = AssetBundle::net(&gin, &gout);
        assert_eq!(i, AssetBundle::fungible("c", "coin", 1));
        assert!(o.is_empty());
    }
}
