//! Deterministic discrete-event execution of a scenario.
//!
//! Events are ordered by `(tick, insertion order)`. Publishing appends to the
//! chain at once; each monitor then learns of the entry after a delay chosen
//! by the [`Schedule`]. A party's view of a chain only ever grows, in chain
//! order.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{Agent, PartyCtx, Plan};
use crate::cbc::{Certificate, Reconfiguration, Statement, ValidatorService};
use crate::crypto::{Hash, KeyDirectory, KeyPair, Signature};
use crate::escrow::Wallets;
use crate::ids::{ChainId, ContractId, DealId, PartyId, ValidatorId};
use crate::ledger::schedule::{Notice, RandomSchedule, Schedule, ScheduleViolation};
use crate::ledger::trace::{Delivery, RunTrace, TraceMeta};
use crate::ledger::{Actor, Chain, ChainState, ContractExt, Entry, Ledger, LedgerError, Payload, Protocol, Tick};
use crate::scenario::{Scenario, ScenarioError, CBC_CHAIN};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("{party} on {chain}: {source}")]
    Schedule {
        party: PartyId,
        chain: ChainId,
        source: ScheduleViolation,
    },
}

#[derive(Clone, Debug)]
enum Event {
    Deliver { party: PartyId, chain: ChainId, len: u64 },
    Wake { party: PartyId },
    Timeout { chain: ChainId, escrower: PartyId },
}

struct World<'a> {
    s: &'a Scenario,
    ledger: Ledger,
    keys: KeyDirectory,
    validators: Option<ValidatorService>,
    queue: BTreeMap<(Tick, u64), Event>,
    qseq: u64,
    views: BTreeMap<(PartyId, ChainId), u64>,
    last_delivery: BTreeMap<(ChainId, PartyId), Tick>,
    monitors: BTreeMap<ChainId, BTreeSet<PartyId>>,
    compliant: BTreeSet<PartyId>,
    schedule: &'a mut dyn Schedule,
    deliveries: Vec<Delivery>,
    wakes: BTreeSet<(Tick, PartyId)>,
    timeouts: BTreeSet<ContractId>,
    now: Tick,
    error: Option<SimError>,
}

impl World<'_> {
    fn push(&mut self, at: Tick, ev: Event) {
        self.queue.insert((at, self.qseq), ev);
        self.qseq += 1;
    }

    /// First tick at or after `t` when `party` is online.
    fn online_at(&self, party: &PartyId, mut t: Tick) -> Tick {
        loop {
            let moved = self
                .s
                .network
                .offline
                .iter()
                .find(|w| &w.party == party && w.from <= t && t < w.to);
            match moved {
                Some(w) => t = w.to,
                None => return t,
            }
        }
    }

    fn wake(&mut self, party: &PartyId, at: Tick) {
        let at = self.online_at(party, at.max(self.now));
        if self.wakes.insert((at, party.clone())) {
            self.push(at, Event::Wake { party: party.clone() });
        }
    }

    fn publish(&mut self, chain: &ChainId, publisher: Actor, contract: Option<PartyId>, payload: Payload) -> u64 {
        let entry = match self.ledger.publish(chain, self.now, publisher, contract, payload, &self.keys) {
            Ok(e) => e.clone(),
            Err(e) => {
                self.error.get_or_insert(e.into());
                return u64::MAX;
            }
        };
        self.after_publish(&entry);
        entry.seq
    }

    fn after_publish(&mut self, e: &Entry) {
        if let (true, Some(escrower), Payload::Escrow { .. }) = (e.accepted(), &e.contract, &e.payload) {
            let id = ContractId::new(e.chain.clone(), escrower.clone());
            let chain = self.ledger.chain(&e.chain).expect("just published");
            let due = chain
                .current()
                .contract(escrower)
                .and_then(|c| match &c.ext {
                    ContractExt::Timelock(t) => Some(t.timeout_at()),
                    ContractExt::Cbc(_) => None,
                })
                .map(|t| t.saturating_sub(chain.skew).max(self.now));
            if let Some(due) = due {
                if self.timeouts.insert(id) {
                    self.push(
                        due,
                        Event::Timeout {
                            chain: e.chain.clone(),
                            escrower: escrower.clone(),
                        },
                    );
                }
            }
        }
        let mut recipients = self.monitors.get(&e.chain).cloned().unwrap_or_default();
        if let Some(p) = e.publisher.party() {
            recipients.insert(p.clone());
        }
        let net = self.s.net();
        for m in recipients {
            let own = e.publisher.party() == Some(&m);
            let d = if own || !self.compliant.contains(&m) {
                1
            } else {
                self.schedule.delay(&Notice {
                    chain: &e.chain,
                    seq: e.seq,
                    publish: e.tick,
                    monitor: &m,
                    accepted: e.accepted(),
                    t0: self.s.deal.t0,
                })
            };
            if !self.s.network.model_violation {
                if let Err(source) = net.check(e.tick, d) {
                    self.error.get_or_insert(SimError::Schedule {
                        party: m.clone(),
                        chain: e.chain.clone(),
                        source,
                    });
                }
            }
            let key = (e.chain.clone(), m.clone());
            let last = self.last_delivery.get(&key).copied().unwrap_or(0);
            let at = self.online_at(&m, (e.tick + d).max(last));
            self.last_delivery.insert(key, at);
            self.push(
                at,
                Event::Deliver {
                    party: m,
                    chain: e.chain.clone(),
                    len: e.seq + 1,
                },
            );
        }
    }
}

struct Ctx<'w, 'a> {
    w: &'w mut World<'a>,
    party: PartyId,
}

impl PartyCtx for Ctx<'_, '_> {
    fn now(&self) -> Tick {
        self.w.now
    }

    fn view(&self, chain: &ChainId) -> Arc<ChainState> {
        let len = self.w.views.get(&(self.party.clone(), chain.clone())).copied().unwrap_or(0);
        match self.w.ledger.chain(chain) {
            Ok(c) => c.state_at(len as usize),
            Err(_) => Arc::new(ChainState::default()),
        }
    }

    fn seen(&self, chain: &ChainId) -> &[Entry] {
        let len = self.w.views.get(&(self.party.clone(), chain.clone())).copied().unwrap_or(0);
        match self.w.ledger.chain(chain) {
            Ok(c) => &c.entries[..(len as usize).min(c.entries.len())],
            Err(_) => &[],
        }
    }

    fn publish(&mut self, chain: &ChainId, contract: Option<&PartyId>, payload: Payload) -> u64 {
        let me = Actor::Party(self.party.clone());
        self.w.publish(chain, me, contract.cloned(), payload)
    }

    fn wake_at(&mut self, tick: Tick) {
        let p = self.party.clone();
        self.w.wake(&p, tick);
    }

    fn certificate(&self, deal: &DealId, h: &Hash) -> Option<Certificate> {
        let svc = self.w.validators.as_ref()?;
        let log = &self.w.ledger.chain(&ChainId::new(CBC_CHAIN)).ok()?.current().log;
        svc.issue(log, deal, h, self.w.now).ok()
    }

    fn corrupt_signatures(&self, statement: &Statement) -> Vec<(ValidatorId, Signature)> {
        match &self.w.validators {
            Some(svc) if !self.w.compliant.contains(&self.party) => svc.corrupt_sign(statement, self.w.now),
            _ => Vec::new(),
        }
    }

    fn reconfigurations(&self) -> Vec<Reconfiguration> {
        match &self.w.validators {
            Some(svc) => svc.links(svc.epoch_at(self.w.now)).to_vec(),
            None => Vec::new(),
        }
    }
}

/// Fresh chains holding the scenario's wallets. Chain clock skews are
/// drawn from `seed`, so a run and its replay see the same clocks.
pub fn genesis(s: &Scenario, seed: u64) -> Result<(Ledger, BTreeMap<ChainId, Wallets>), ScenarioError> {
    let mut skew_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c10c);
    let mut ledger = Ledger::new();
    let mut initial = BTreeMap::new();
    for chain in s.chains() {
        let mut w = Wallets::new();
        for (p, b) in &s.wallets {
            let on = b.on_chain(&chain);
            if !on.is_empty() {
                w.deposit(p, &on).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            }
        }
        let is_cbc = chain.as_str() == CBC_CHAIN;
        let skew = if is_cbc || s.network.skew_max == 0 {
            0
        } else {
            skew_rng.gen_range(0..=s.network.skew_max)
        };
        initial.insert(chain.clone(), w.clone());
        ledger.add_chain(Chain::new(
            chain,
            skew,
            is_cbc,
            ChainState {
                wallets: w,
                ..Default::default()
            },
        ));
    }
    Ok((ledger, initial))
}

/// Runs `scenario` under `seed` with delays from `schedule`.
pub fn simulate(scenario: &Scenario, seed: u64, schedule: &mut dyn Schedule) -> Result<RunTrace, SimError> {
    scenario.validate()?;
    let s = scenario;
    let deal = &s.deal;
    let mut keys = KeyDirectory::new();
    let mut agent_keys = BTreeMap::new();
    for p in &deal.parties {
        let k = KeyPair::derive(seed, p.as_str());
        keys.register_party(p.clone(), &k);
        agent_keys.insert(p.clone(), k);
    }
    let validators = (s.protocol == Protocol::Cbc).then(|| {
        let c = s.cbc_config();
        ValidatorService::new(
            seed,
            c.f,
            c.reconfigurations,
            s.reconfigure_at(),
            c.corrupt_validators.iter().cloned().collect(),
            &mut keys,
        )
    });
    let plan = Arc::new(Plan::new(s, validators.as_ref().map(|v| v.initial().clone())));

    let (ledger, initial) = genesis(s, seed)?;
    let monitors: BTreeMap<ChainId, BTreeSet<PartyId>> = s
        .chains()
        .into_iter()
        .map(|chain| {
            let m = if chain.as_str() == CBC_CHAIN {
                deal.plist()
            } else {
                deal.monitors(&chain)
            };
            (chain, m)
        })
        .collect();

    let mut agents: BTreeMap<PartyId, Agent> = deal
        .parties
        .iter()
        .map(|p| {
            let cfg = s.party(p);
            let a = Agent::new(
                p.clone(),
                agent_keys[p].clone(),
                cfg.strategy,
                cfg.validation,
                cfg.altruistic,
                seed,
                plan.clone(),
            );
            (p.clone(), a)
        })
        .collect();

    let mut w = World {
        s,
        ledger,
        keys,
        validators,
        queue: BTreeMap::new(),
        qseq: 0,
        views: BTreeMap::new(),
        last_delivery: BTreeMap::new(),
        monitors,
        compliant: s.compliant(),
        schedule,
        deliveries: Vec::new(),
        wakes: BTreeSet::new(),
        timeouts: BTreeSet::new(),
        now: 0,
        error: None,
    };
    for p in &deal.parties {
        w.wake(p, 0);
    }

    let horizon = s.horizon();
    let mut truncated = false;
    let mut ended_at = 0;
    while let Some(((t, _), ev)) = w.queue.pop_first() {
        if t > horizon {
            truncated = true;
            break;
        }
        w.now = t;
        ended_at = t;
        let party = match ev {
            Event::Deliver { party, chain, len } => {
                let v = w.views.entry((party.clone(), chain.clone())).or_insert(0);
                *v = (*v).max(len);
                let after = w.ledger.published();
                w.deliveries.push(Delivery {
                    tick: t,
                    party: party.clone(),
                    chain,
                    len,
                    after,
                });
                party
            }
            Event::Wake { party } => {
                w.wakes.remove(&(t, party.clone()));
                party
            }
            Event::Timeout { chain, escrower } => {
                let active = w
                    .ledger
                    .chain(&chain)?
                    .current()
                    .contract(&escrower)
                    .is_some_and(|c| c.escrow.is_active());
                if active {
                    let payload = Payload::Timeout { deal: deal.id.clone() };
                    w.publish(&chain, Actor::System, Some(escrower), payload);
                }
                continue;
            }
        };
        let mut agent = agents.remove(&party).expect("known party");
        agent.step(&mut Ctx {
            w: &mut w,
            party: party.clone(),
        });
        agents.insert(party, agent);
        if let Some(e) = w.error.take() {
            return Err(e);
        }
    }

    let mut entries: Vec<Entry> = w
        .ledger
        .chains
        .values()
        .flat_map(|c| c.entries.iter().cloned())
        .collect();
    entries.sort_by_key(|e| e.index);
    let terminal = w
        .ledger
        .chains
        .iter()
        .map(|(id, c)| (id.clone(), c.current().clone()))
        .collect();
    Ok(RunTrace {
        meta: TraceMeta {
            scenario: s.name.clone(),
            protocol: s.protocol,
            seed,
            horizon,
            ended_at,
            truncated,
        },
        entries,
        deliveries: w.deliveries,
        initial,
        terminal,
    })
}

/// Runs with seeded random delays inside the network model.
pub fn simulate_random(scenario: &Scenario, seed: u64) -> Result<RunTrace, SimError> {
    let mut schedule = RandomSchedule::new(seed ^ 0x00de_1a75, scenario.net());
    simulate(scenario, seed, &mut schedule)
}
