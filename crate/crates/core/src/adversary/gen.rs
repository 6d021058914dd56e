//! Random well-formed deals for campaigns and property tests.
//!
//! A deal is built around a cycle through every party, cut into segments;
//! each segment becomes one contract whose transfer script walks the
//! segment. The cycle makes the transfer graph strongly connected. Extra
//! contracts with short random scripts are added on top.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::asset::AssetBundle;
use crate::deal::{DealSpec, EscrowSpec, TransferSpec};
use crate::ids::{ChainId, PartyId};
use crate::ledger::Protocol;
use crate::scenario::{CbcConfig, Scenario};

const NAMES: [&str; 4] = ["alice", "bob", "carol", "dave"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenParams {
    pub max_parties: usize,
    pub max_contracts: usize,
    /// Fixed CBC fault bound; random in `1..=2` when unset.
    pub cbc_f: Option<usize>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            max_parties: 4,
            max_contracts: 4,
            cbc_f: None,
        }
    }
}

struct Plan {
    escrower: usize,
    path: Vec<usize>,
}

/// A random deal with `2..=max_parties` parties and at most `max_contracts`
/// contracts, wrapped in a scenario with funded wallets and everyone
/// compliant.
pub fn random_scenario<R: Rng>(rng: &mut R, protocol: Protocol, name: &str, p: GenParams) -> Scenario {
    let n = rng.gen_range(2..=p.max_parties.clamp(2, NAMES.len()));
    let parties: Vec<PartyId> = NAMES[..n].iter().map(PartyId::new).collect();
    let max_c = p.max_contracts.max(2);

    let segments = rng.gen_range(2..=n.min(max_c));
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts[..segments - 1].to_vec();
    cuts.push(0);
    cuts.sort_unstable();
    let rot = rng.gen_range(0..n);
    let mut plans = Vec::new();
    for (i, &start) in cuts.iter().enumerate() {
        let end = cuts.get(i + 1).copied().unwrap_or(n);
        let path: Vec<usize> = (start + 1..=end).map(|x| (x + rot) % n).collect();
        plans.push(Plan {
            escrower: (start + rot) % n,
            path,
        });
    }
    let extra = rng.gen_range(0..=max_c - segments);
    for _ in 0..extra {
        let escrower = rng.gen_range(0..n);
        let hops = rng.gen_range(1..=2);
        let mut path = Vec::new();
        let mut at = escrower;
        for _ in 0..hops {
            let next = (at + rng.gen_range(1..n)) % n;
            path.push(next);
            at = next;
        }
        plans.push(Plan { escrower, path });
    }

    let delta = rng.gen_range(2..=6);
    let mut chains: Vec<(ChainId, Vec<usize>)> = Vec::new();
    let mut escrows: BTreeMap<usize, AssetBundle> = BTreeMap::new();
    let mut wallets: BTreeMap<PartyId, AssetBundle> = BTreeMap::new();
    let mut transfers = Vec::new();
    for (j, plan) in plans.iter().enumerate() {
        let shared = chains
            .iter()
            .position(|(_, es)| !es.contains(&plan.escrower))
            .filter(|_| rng.gen_bool(0.3));
        let chain = match shared {
            Some(i) => {
                chains[i].1.push(plan.escrower);
                chains[i].0.clone()
            }
            None => {
                let c = ChainId::new(format!("chain{j}"));
                chains.push((c.clone(), vec![plan.escrower]));
                c
            }
        };
        let token = rng.gen_bool(0.4);
        let amount: u64 = rng.gen_range(10..=100);
        let bundle_at = |hop: usize| {
            if token {
                AssetBundle::token(chain.clone(), format!("t{j}"))
            } else {
                AssetBundle::fungible(chain.clone(), "coin", amount - hop as u64)
            }
        };
        let stake = bundle_at(0);
        let e = &parties[plan.escrower];
        escrows
            .entry(plan.escrower)
            .or_default()
            .merge(&stake)
            .expect("distinct chains per escrower");
        let w = wallets.entry(e.clone()).or_default();
        w.merge(&stake).expect("fresh assets");
        if !token {
            w.merge(&AssetBundle::fungible(chain.clone(), "coin", 1000))
                .expect("fungible");
        }
        let mut from = plan.escrower;
        for (hop, &to) in plan.path.iter().enumerate() {
            transfers.push(TransferSpec {
                from: parties[from].clone(),
                to: parties[to].clone(),
                assets: bundle_at(hop),
                step: hop as u32 + 1,
                via: Some(e.clone()),
            });
            from = to;
        }
    }
    let k = plans.iter().map(|p| p.path.len() as u64).max().unwrap_or(1);
    let deal = DealSpec {
        id: name.into(),
        parties: parties.clone(),
        t0: (k + 3) * delta + 1,
        delta,
        escrows: escrows
            .into_iter()
            .map(|(i, assets)| EscrowSpec {
                party: parties[i].clone(),
                assets,
            })
            .collect(),
        transfers,
        acceptable: BTreeMap::new(),
    };
    let cbc = (protocol == Protocol::Cbc).then(|| CbcConfig {
        f: p.cbc_f.unwrap_or_else(|| rng.gen_range(1..=2)),
        ..CbcConfig::default()
    });
    Scenario {
        name: name.into(),
        protocol,
        seed: 0,
        deal,
        wallets,
        network: Default::default(),
        parties: BTreeMap::new(),
        cbc,
        explore: None,
        campaign: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_deals_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..300 {
            let proto = if i % 2 == 0 { Protocol::Timelock } else { Protocol::Cbc };
            let s = random_scenario(&mut rng, proto, &format!("g{i}"), GenParams::default());
            s.validate().unwrap_or_else(|e| panic!("{e}\n{}", s.to_toml()));
            assert!(s.is_well_formed());
            assert!(s.deal.n() <= 4 && s.deal.contracts().len() <= 4);
        }
    }
}
