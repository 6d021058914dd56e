//! Cross-chain deal simulation: escrow contracts, the timelock and CBC
//! commit protocols, adversarial parties, property checks and cost metering.

pub mod adversary;
pub mod agent;
pub mod asset;
pub mod cbc;
pub mod cost;
pub mod crypto;
pub mod deal;
pub mod escrow;
pub mod graph;
pub mod ids;
pub mod ledger;
pub mod properties;
pub mod replay;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod timelock;

pub use asset::{AssetBundle, AssetError, AssetItem};
pub use deal::{DealError, DealSpec, Payoff};
pub use escrow::{Outcome, Resolution};
pub use ids::{AssetKind, ChainId, ContractId, DealId, PartyId, TokenId, ValidatorId};
pub use ledger::{Protocol, Tick};
pub use scenario::{Scenario, ScenarioError};
pub use sim::{simulate, simulate_random, SimError};
