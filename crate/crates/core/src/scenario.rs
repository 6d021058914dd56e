//! Scenario files.
//!
//! A scenario is a TOML document describing one deal, the protocol that
//! executes it, initial wallets, the network, and how each party behaves.
//! All randomness in a run flows from `seed`.
//!
//! ```toml
//! name = "ticket_deal_timelock"
//! protocol = "timelock"          # timelock | cbc | naive-timeout
//! seed = 7
//!
//! [deal]
//! id = "ticket-deal-1"
//! parties = ["alice", "bob", "carol"]
//! t0 = 20                        # commit phase start
//! delta = 5                      # synchronous delivery bound
//!
//! [[deal.escrows]]
//! party = "bob"
//! assets = ["#seat-A1@tickets"]
//!
//! [[deal.transfers]]
//! from = "bob"
//! to = "alice"
//! assets = ["#seat-A1@tickets"]
//! step = 1
//!
//! [wallets]
//! bob = ["#seat-A1@tickets"]
//!
//! [network]
//! mode = "synchronous"           # or semi-synchronous, with gst
//!
//! [parties.alice]
//! strategy = { kind = "selective-communication", target = "bob" }
//! ```
//!
//! Optional tables: `[cbc]` (validators and timers), `[explore]` (adversary
//! variants for exhaustive search) and `[campaign]` (randomized runs).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::Strategy;
use crate::asset::AssetBundle;
use crate::cbc::validator_name;
use crate::deal::{DealError, DealSpec};
use crate::graph::is_well_formed;
use crate::ids::{ChainId, PartyId, ValidatorId};
use crate::ledger::schedule::{NetworkMode, NetworkModel};
use crate::ledger::{Protocol, Tick};

/// Name of the certified blockchain in CBC runs.
pub const CBC_CHAIN: &str = "cbc";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid deal: {0}")]
    Deal(#[from] DealError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineWindow {
    pub party: PartyId,
    pub from: Tick,
    pub to: Tick,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub mode: NetworkMode,
    #[serde(default)]
    pub gst: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_gst_cap: Option<Tick>,
    /// Contract clocks run ahead by a seeded amount in `[0, skew_max]`.
    #[serde(default)]
    pub skew_max: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Tick>,
    /// Declares that the run breaks the timing model on purpose.
    #[serde(default)]
    pub model_violation: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offline: Vec<OfflineWindow>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            mode: NetworkMode::Synchronous,
            gst: 0,
            pre_gst_cap: None,
            skew_max: 0,
            horizon: None,
            model_violation: false,
            offline: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    #[default]
    Pass,
    Fail,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyConfig {
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub validation: ValidationMode,
    /// Vote directly on every contract, not only incoming ones.
    #[serde(default)]
    pub altruistic: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbcConfig {
    #[serde(default = "one")]
    pub f: usize,
    /// How long a party waits after its commit vote before aborting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grace: Option<Tick>,
    /// A party that has not voted by this tick aborts. Defaults to
    /// `t0 + delta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<Tick>,
    #[serde(default)]
    pub reconfigurations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconfigure_at: Option<Tick>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corrupt_validators: Vec<ValidatorId>,
    /// Who publishes startDeal; defaults to the first party.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starter: Option<PartyId>,
}

fn one() -> usize {
    1
}

impl Default for CbcConfig {
    fn default() -> Self {
        Self {
            f: 1,
            grace: None,
            patience: None,
            reconfigurations: 0,
            reconfigure_at: None,
            corrupt_validators: Vec::new(),
            starter: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreConfig {
    /// Parties that take turns being the adversary. Empty means explore the
    /// scenario as written.
    #[serde(default)]
    pub adversaries: Vec<PartyId>,
    /// Strategies to try; empty means the full catalog.
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_points")]
    pub max_choice_points: usize,
    #[serde(default = "default_runs")]
    pub max_runs: usize,
}

fn default_points() -> usize {
    20
}

fn default_runs() -> usize {
    1 << 20
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            adversaries: Vec::new(),
            strategies: Vec::new(),
            max_choice_points: default_points(),
            max_runs: default_runs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "default_campaign_runs")]
    pub runs: usize,
    /// Strategies to draw from; empty means the full catalog.
    #[serde(default)]
    pub mix: Vec<Strategy>,
    /// Generate a fresh random deal per run instead of using this one.
    #[serde(default)]
    pub random_deals: bool,
}

fn default_campaign_runs() -> usize {
    100
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            runs: default_campaign_runs(),
            mix: Vec::new(),
            random_deals: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub protocol: Protocol,
    #[serde(default)]
    pub seed: u64,
    pub deal: DealSpec,
    #[serde(default)]
    pub wallets: BTreeMap<PartyId, AssetBundle>,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub parties: BTreeMap<PartyId, PartyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cbc: Option<CbcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore: Option<ExploreConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign: Option<CampaignConfig>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn party(&self, p: &PartyId) -> PartyConfig {
        self.parties.get(p).cloned().unwrap_or_default()
    }

    pub fn strategy(&self, p: &PartyId) -> Strategy {
        self.party(p).strategy
    }

    /// Parties following the protocol.
    pub fn compliant(&self) -> BTreeSet<PartyId> {
        self.deal
            .parties
            .iter()
            .filter(|p| self.strategy(p).is_compliant())
            .cloned()
            .collect()
    }

    pub fn adversaries(&self) -> BTreeSet<PartyId> {
        self.deal
            .parties
            .iter()
            .filter(|p| !self.strategy(p).is_compliant())
            .cloned()
            .collect()
    }

    pub fn delta(&self) -> Tick {
        self.deal.delta
    }

    pub fn net(&self) -> NetworkModel {
        let delta = self.delta();
        NetworkModel {
            mode: self.network.mode,
            delta,
            gst: match self.network.mode {
                NetworkMode::Synchronous => 0,
                NetworkMode::SemiSynchronous => self.network.gst,
            },
            pre_gst_cap: self.network.pre_gst_cap.unwrap_or(4 * delta),
        }
    }

    pub fn cbc_config(&self) -> CbcConfig {
        self.cbc.clone().unwrap_or_default()
    }

    pub fn grace(&self) -> Tick {
        self.cbc_config().grace.unwrap_or(2 * self.delta())
    }

    pub fn patience(&self) -> Tick {
        self.cbc_config()
            .patience
            .unwrap_or(self.deal.t0 + self.delta())
    }

    pub fn starter(&self) -> PartyId {
        self.cbc_config()
            .starter
            .unwrap_or_else(|| self.deal.parties[0].clone())
    }

    pub fn reconfigure_at(&self) -> Tick {
        self.cbc_config().reconfigure_at.unwrap_or(self.deal.t0)
    }

    pub fn horizon(&self) -> Tick {
        if let Some(h) = self.network.horizon {
            return h;
        }
        let d = self.delta();
        let n = self.deal.n() as Tick;
        let start = self.deal.t0.max(self.net().gst).max(self.patience());
        let extra = if self.protocol == Protocol::Cbc {
            self.grace() + 4 * d
        } else {
            0
        };
        start + (n + 6) * d + extra + self.network.skew_max
    }

    /// Chains touched by the deal or by any wallet, plus the certified
    /// blockchain when the protocol needs one.
    pub fn chains(&self) -> BTreeSet<ChainId> {
        let mut c = self.deal.chains();
        for w in self.wallets.values() {
            c.extend(w.chains());
        }
        if self.protocol == Protocol::Cbc {
            c.insert(ChainId::new(CBC_CHAIN));
        }
        c
    }

    pub fn is_well_formed(&self) -> bool {
        is_well_formed(&self.deal)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        self.deal.validate()?;
        if self.deal.chains().contains(&ChainId::new(CBC_CHAIN)) {
            return bad(format!("chain name {CBC_CHAIN:?} is reserved"));
        }
        for p in self.wallets.keys().chain(self.parties.keys()) {
            if !self.deal.has_party(p) {
                return bad(format!("unknown party {p}"));
            }
        }
        for (p, cfg) in &self.parties {
            cfg.strategy
                .validate(&self.deal)
                .map_err(|m| ScenarioError::Invalid(format!("{p}: {m}")))?;
        }
        for e in &self.deal.escrows {
            if self.strategy(&e.party).is_compliant()
                && !self.wallets.get(&e.party).is_some_and(|w| w.contains(&e.assets))
            {
                return bad(format!("{}'s wallet does not cover its escrow {}", e.party, e.assets));
            }
        }
        let net = &self.network;
        if net.mode == NetworkMode::Synchronous && net.gst != 0 {
            return bad("gst only applies to semi-synchronous networks".into());
        }
        if net.skew_max >= self.delta() {
            return bad("skew_max must be below delta".into());
        }
        if !net.offline.is_empty() && !net.model_violation {
            return bad("offline windows break the timing model; set model_violation = true".into());
        }
        for w in &net.offline {
            if !self.deal.has_party(&w.party) || w.from >= w.to {
                return bad(format!("bad offline window for {}", w.party));
            }
        }
        if self.horizon() <= self.deal.t0 + (self.deal.n() as Tick + 2) * self.delta() {
            return bad("horizon must exceed t0 + (n+2)·delta".into());
        }
        match (self.protocol, &self.cbc) {
            (Protocol::Cbc, _) => {
                let c = self.cbc_config();
                if c.corrupt_validators.len() > c.f {
                    return bad(format!("{} corrupt validators exceed f = {}", c.corrupt_validators.len(), c.f));
                }
                let names: BTreeSet<ValidatorId> = (0..3 * c.f + 1).map(|i| validator_name(0, i)).collect();
                for v in &c.corrupt_validators {
                    if !names.contains(v) {
                        return bad(format!("unknown validator {v}"));
                    }
                }
                if !self.deal.has_party(&self.starter()) {
                    return bad("starter is not a deal party".into());
                }
            }
            (_, Some(_)) => return bad("[cbc] given for a non-CBC protocol".into()),
            _ => {}
        }
        if let Some(x) = &self.explore {
            for p in &x.adversaries {
                if !self.deal.has_party(p) {
                    return bad(format!("explore: unknown party {p}"));
                }
            }
            for s in &x.strategies {
                s.validate(&self.deal).map_err(ScenarioError::Invalid)?;
            }
        }
        if let Some(c) = &self.campaign {
            if c.runs == 0 {
                return bad("campaign runs must be at least 1".into());
            }
        }
        Ok(())
    }
}
