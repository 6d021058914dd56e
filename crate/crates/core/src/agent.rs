//! Party behavior.
//!
//! An [`Agent`] owns its key pair and reacts to what it has seen. It reaches
//! the world only through [`PartyCtx`]: read its own views, publish entries,
//! set timers. Compliant logic and every strategy in
//! [`crate::adversary::Strategy`] live here, so deviations are expressed as
//! small departures from the honest code path.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::adversary::{Phase, Strategy};
use crate::asset::AssetBundle;
use crate::cbc::{cbc_decide, definitive_start, validator_name, CbcEntry, Certificate, Reconfiguration, Statement, ValidatorSet};
use crate::crypto::{extend_path, sha256, sign, Canonical, Hash, KeyPair, Link, Nonce, PathSignature, Signature, Vote};
use crate::deal::{ContractPlan, DealSpec, Payoff};
use crate::escrow::Outcome;
use crate::ids::{ChainId, ContractId, DealId, PartyId, ValidatorId};
use crate::ledger::{ChainState, Dinfo, Entry, Payload, Protocol, Tick};
use crate::scenario::{Scenario, ValidationMode, CBC_CHAIN};
use crate::timelock::DeadlineRule;

/// What a party can do and see.
pub trait PartyCtx {
    fn now(&self) -> Tick;
    /// State of `chain` after the entries this party has seen.
    fn view(&self, chain: &ChainId) -> Arc<ChainState>;
    /// Entries of `chain` this party has seen.
    fn seen(&self, chain: &ChainId) -> &[Entry];
    /// Publishes and returns the entry's sequence number on its chain.
    fn publish(&mut self, chain: &ChainId, contract: Option<&PartyId>, payload: Payload) -> u64;
    fn wake_at(&mut self, tick: Tick);
    /// A validator certificate for the current decision on `(deal, h)`.
    fn certificate(&self, deal: &DealId, h: &Hash) -> Option<Certificate>;
    /// Signatures the corrupt validators grant; empty for compliant parties.
    fn corrupt_signatures(&self, statement: &Statement) -> Vec<(ValidatorId, Signature)>;
    /// Public reconfiguration links up to the current epoch.
    fn reconfigurations(&self) -> Vec<Reconfiguration>;
}

/// Deal-wide facts every agent shares.
#[derive(Clone, Debug)]
pub struct Plan {
    pub protocol: Protocol,
    pub deal: DealSpec,
    pub contracts: BTreeMap<ContractId, ContractPlan>,
    pub grace: Tick,
    pub patience: Tick,
    pub starter: PartyId,
    pub cbc_chain: ChainId,
    pub validators: Option<ValidatorSet>,
}

impl Plan {
    pub fn new(s: &Scenario, validators: Option<ValidatorSet>) -> Self {
        Self {
            protocol: s.protocol,
            deal: s.deal.clone(),
            contracts: s.deal.contracts(),
            grace: s.grace(),
            patience: s.patience(),
            starter: s.starter(),
            cbc_chain: ChainId::new(CBC_CHAIN),
            validators,
        }
    }

    pub fn rule(&self) -> DeadlineRule {
        match self.protocol {
            Protocol::NaiveTimeout => DeadlineRule::Fixed,
            _ => DeadlineRule::PathScaled,
        }
    }

    /// The deal parameters a compliant escrow carries.
    pub fn dinfo(&self, h: Option<Hash>) -> Option<Dinfo> {
        let plist = self.deal.parties.clone();
        if self.protocol.is_timelock_family() {
            Some(Dinfo::Timelock {
                plist,
                t0: self.deal.t0,
                delta: self.deal.delta,
                rule: self.rule(),
            })
        } else {
            Some(Dinfo::Cbc {
                plist,
                h: h?,
                validators: self.validators.clone()?,
            })
        }
    }

    fn timeout_at(&self) -> Tick {
        self.deal.t0 + self.deal.n() as Tick * self.deal.delta
    }
}

#[derive(Clone, Debug)]
pub struct Agent {
    me: PartyId,
    key: KeyPair,
    strategy: Strategy,
    validation: ValidationMode,
    altruistic: bool,
    seed: u64,
    plan: Arc<Plan>,
    incoming: BTreeSet<ContractId>,
    outgoing: BTreeSet<ContractId>,
    involved: BTreeSet<ContractId>,
    nonces: u64,
    started: bool,
    escrowed: bool,
    /// Own transfers published: script index to (chain, seq).
    transfers: BTreeMap<usize, (ChainId, u64)>,
    validated_at: Option<Tick>,
    refused: bool,
    voted_at: Option<Tick>,
    aborted: bool,
    forwarded: BTreeSet<(PartyId, ContractId)>,
    replayed: BTreeSet<(PartyId, ContractId)>,
    settled: BTreeSet<ContractId>,
    once: BTreeSet<&'static str>,
}

impl Agent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        me: PartyId,
        key: KeyPair,
        strategy: Strategy,
        validation: ValidationMode,
        altruistic: bool,
        seed: u64,
        plan: Arc<Plan>,
    ) -> Self {
        let deal = &plan.deal;
        let incoming = deal.incoming(&me);
        let outgoing = deal.outgoing(&me);
        let involved = deal.involved(&me);
        Self {
            me,
            key,
            strategy,
            validation,
            altruistic,
            seed,
            plan,
            incoming,
            outgoing,
            involved,
            nonces: 0,
            started: false,
            escrowed: false,
            transfers: BTreeMap::new(),
            validated_at: None,
            refused: false,
            voted_at: None,
            aborted: false,
            forwarded: BTreeSet::new(),
            replayed: BTreeSet::new(),
            settled: BTreeSet::new(),
            once: BTreeSet::new(),
        }
    }

    pub fn party(&self) -> &PartyId {
        &self.me
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn validated_at(&self) -> Option<Tick> {
        self.validated_at
    }

    fn acts(&self, phase: Phase) -> bool {
        !matches!(self.strategy, Strategy::SilentCrash { phase: p } if phase >= p)
    }

    fn may_publish(&self, now: Tick, cid: &ContractId) -> bool {
        match &self.strategy {
            Strategy::SelectiveCommunication { target } if now >= self.plan.deal.t0 => self
                .plan
                .contracts
                .get(cid)
                .is_none_or(|c| !c.involves(target, &self.plan.deal)),
            _ => true,
        }
    }

    fn first(&mut self, tag: &'static str) -> bool {
        self.once.insert(tag)
    }

    fn next_nonce(&mut self) -> Nonce {
        self.nonces += 1;
        Nonce::derive(self.seed, &self.me, self.nonces)
    }

    fn overpaid(&self, assets: &AssetBundle) -> AssetBundle {
        let Strategy::Overpay { extra } = self.strategy else {
            return assets.clone();
        };
        let mut out = assets.clone();
        let kinds: Vec<(ChainId, _)> = assets
            .fungible_entries()
            .map(|(c, k, _)| (c.clone(), k.clone()))
            .collect();
        for (c, k) in kinds {
            let _ = out.add_fungible(c, k, extra);
        }
        out
    }

    /// Reacts to the current views. Called on every delivery and timer.
    pub fn step(&mut self, ctx: &mut dyn PartyCtx) {
        let plan = self.plan.clone();
        if plan.protocol == Protocol::Cbc {
            self.start_deal(ctx, &plan);
        }
        self.escrow(ctx, &plan);
        self.transfer(ctx, &plan);
        self.validate(ctx, &plan);
        if plan.protocol.is_timelock_family() {
            self.timelock_commit(ctx, &plan);
        } else {
            self.cbc_commit(ctx, &plan);
        }
        self.deviate(ctx, &plan);
    }

    fn start_deal(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan) {
        if self.started || self.me != plan.starter || !self.acts(Phase::Escrow) {
            return;
        }
        self.started = true;
        let entry = CbcEntry::StartDeal {
            deal: plan.deal.id.clone(),
            plist: plan.deal.parties.clone(),
        };
        ctx.publish(&plan.cbc_chain, None, Payload::Cbc { entry });
    }

    /// Definitive startDeal hash and the tick it was published at.
    fn cbc_start(&self, ctx: &dyn PartyCtx, plan: &Plan) -> Option<(Hash, Tick)> {
        let view = ctx.view(&plan.cbc_chain);
        let (rec, _) = definitive_start(&view.log, &plan.deal.id)?;
        let tick = ctx
            .seen(&plan.cbc_chain)
            .iter()
            .find(|e| e.seq == rec.position)
            .map_or(0, |e| e.tick);
        Some((rec.hash, tick))
    }

    fn cbc_decided(&self, ctx: &dyn PartyCtx, plan: &Plan, h: &Hash) -> Option<Outcome> {
        let view = ctx.view(&plan.cbc_chain);
        cbc_decide(&view.log, &plan.deal.id, h).ok()?.outcome()
    }

    fn escrow(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan) {
        if self.escrowed || !self.acts(Phase::Escrow) {
            return;
        }
        let h = if plan.protocol == Protocol::Cbc {
            let Some((h, start)) = self.cbc_start(ctx, plan) else {
                return;
            };
            if self.cbc_decided(ctx, plan, &h).is_some() {
                self.escrowed = true;
                return;
            }
            let at = start + plan.deal.delta;
            if ctx.now() < at {
                ctx.wake_at(at);
                return;
            }
            Some(h)
        } else {
            None
        };
        let Some(dinfo) = plan.dinfo(h) else {
            return;
        };
        self.escrowed = true;
        for e in plan.deal.escrows.iter().filter(|e| e.party == self.me) {
            for chain in e.assets.chains() {
                let payload = Payload::Escrow {
                    deal: plan.deal.id.clone(),
                    assets: self.overpaid(&e.assets.on_chain(&chain)),
                    dinfo: dinfo.clone(),
                };
                ctx.publish(&chain, Some(&self.me), payload);
            }
        }
    }

    fn transfer(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan) {
        if !self.acts(Phase::Transfer) {
            return;
        }
        let now = ctx.now();
        for idx in plan.deal.script_order() {
            let t = &plan.deal.transfers[idx];
            if t.from != self.me || self.transfers.contains_key(&idx) {
                continue;
            }
            let Ok(cid) = plan.deal.contract_of(idx) else {
                continue;
            };
            if !self.may_publish(now, &cid) {
                continue;
            }
            let view_len = ctx.seen(&cid.chain).len() as u64;
            let pending = self
                .transfers
                .iter()
                .any(|(&j, (chain, seq))| chain == &cid.chain && *seq >= view_len && plan.deal.contract_of(j).ok() == Some(cid.clone()));
            if pending {
                continue;
            }
            let view = ctx.view(&cid.chain);
            let Some(c) = view.contract(&cid.escrower) else {
                continue;
            };
            if !c.escrow.is_active() {
                continue;
            }
            let assets = if cid.escrower == self.me {
                self.overpaid(&t.assets)
            } else {
                t.assets.clone()
            };
            if !c.escrow.ownership.commit_owned(&self.me).contains(&assets) {
                continue;
            }
            let payload = Payload::Transfer {
                deal: plan.deal.id.clone(),
                to: t.to.clone(),
                assets,
            };
            let seq = ctx.publish(&cid.chain, Some(&cid.escrower), payload);
            self.transfers.insert(idx, (cid.chain.clone(), seq));
        }
    }

    fn own_transfers_done(&self, plan: &Plan) -> bool {
        (0..plan.deal.transfers.len())
            .filter(|&i| plan.deal.transfers[i].from == self.me)
            .all(|i| self.transfers.contains_key(&i))
    }

    /// Prospective payoff if every involved contract commits as it stands,
    /// or `None` while something is missing or wrong.
    fn prospective(&self, ctx: &dyn PartyCtx, plan: &Plan, h: Option<Hash>) -> Option<Payoff> {
        let expected = plan.dinfo(h)?;
        let mut gross_in = AssetBundle::new();
        let mut gross_out = AssetBundle::new();
        for cid in &self.involved {
            let view = ctx.view(&cid.chain);
            let c = view.contract(&cid.escrower)?;
            if c.dinfo != expected || !c.escrow.is_active() || c.escrow.deal != plan.deal.id {
                return None;
            }
            gross_in.merge(&c.escrow.ownership.commit_owned(&self.me)).ok()?;
            gross_out.merge(&c.escrow.ownership.abort_owned(&self.me)).ok()?;
        }
        Some(Payoff::net(&gross_in, &gross_out))
    }

    fn validate(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan) {
        if self.validated_at.is_some() || self.refused || !self.acts(Phase::Validation) {
            return;
        }
        if !self.own_transfers_done(plan) {
            return;
        }
        let h = if plan.protocol == Protocol::Cbc {
            match self.cbc_start(ctx, plan) {
                Some((h, _)) => Some(h),
                None => return,
            }
        } else {
            None
        };
        let Some(payoff) = self.prospective(ctx, plan, h) else {
            return;
        };
        // An overpayer gives away more than the deal asks on purpose.
        let overpays = matches!(self.strategy, Strategy::Overpay { .. });
        if !overpays && !payoff.dominates(&plan.deal.all_payoff(&self.me)) {
            return;
        }
        match self.validation {
            ValidationMode::Pass => self.validated_at = Some(ctx.now()),
            ValidationMode::Fail => self.refused = true,
        }
    }

    fn sign_vote(&mut self, plan: &Plan) -> PathSignature {
        let vote = Vote {
            deal: plan.deal.id.clone(),
            voter: self.me.clone(),
            nonce: self.next_nonce(),
        };
        PathSignature::direct(vote, &self.key).expect("own key signs own vote")
    }

    fn timelock_commit(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan) {
        if !self.acts(Phase::Commit) {
            return;
        }
        let now = ctx.now();
        if let Strategy::LastMinuteVote { target } = &self.strategy {
            let target = target.clone();
            self.last_minute_vote(ctx, plan, &target);
            return;
        }
        let Some(v) = self.validated_at else {
            return;
        };
        let mut at = v.max(plan.deal.t0);
        if self.strategy == Strategy::LateClaim {
            at = at.max(plan.timeout_at());
        }
        if now < at {
            ctx.wake_at(at);
            return;
        }
        if self.voted_at.is_none() && self.strategy != Strategy::WithholdOwnVote {
            self.voted_at = Some(now);
            let path = self.sign_vote(plan);
            let dests = if self.altruistic {
                self.involved.clone()
            } else {
                self.incoming.clone()
            };
            let copies = match self.strategy {
                Strategy::ReplayVotes { copies } => copies + 1,
                _ => 1,
            };
            for d in dests.iter().filter(|d| self.may_publish(now, d)) {
                for _ in 0..copies {
                    ctx.publish(&d.chain, Some(&d.escrower), Payload::Vote { path: path.clone() });
                }
            }
        }
        if self.strategy != Strategy::IgnoreForwarding {
            self.forward(ctx);
        }
    }

    fn last_minute_vote(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan, target: &ContractId) {
        if self.voted_at.is_some() {
            return;
        }
        let view = ctx.view(&target.chain);
        let Some(ext) = view.contract(&target.escrower).and_then(|c| c.timelock()) else {
            return;
        };
        let at = ext.deadline(1).saturating_sub(1);
        let now = ctx.now();
        if now < at {
            ctx.wake_at(at);
            return;
        }
        self.voted_at = Some(now);
        let path = self.sign_vote(plan);
        ctx.publish(&target.chain, Some(&target.escrower), Payload::Vote { path });
    }

    /// Extends the shortest path seen for each voter on an outgoing contract
    /// onto every incoming contract that still lacks that vote.
    fn forward(&mut self, ctx: &mut dyn PartyCtx) {
        let now = ctx.now();
        let mut best: BTreeMap<PartyId, PathSignature> = BTreeMap::new();
        for o in &self.outgoing {
            let view = ctx.view(&o.chain);
            let Some(ext) = view.contract(&o.escrower).and_then(|c| c.timelock()) else {
                continue;
            };
            for (voter, p) in &ext.votes {
                if voter == &self.me || p.has_signer(&self.me) {
                    continue;
                }
                match best.get(voter) {
                    Some(b) if b.len() <= p.len() => {}
                    _ => {
                        best.insert(voter.clone(), p.clone());
                    }
                }
            }
        }
        for (voter, p) in best {
            for d in self.incoming.clone() {
                if self.forwarded.contains(&(voter.clone(), d.clone())) || !self.may_publish(now, &d) {
                    continue;
                }
                let view = ctx.view(&d.chain);
                let Some(c) = view.contract(&d.escrower) else {
                    continue;
                };
                let Some(ext) = c.timelock() else {
                    continue;
                };
                if !c.escrow.is_active() || ext.has_vote(&voter) {
                    continue;
                }
                let Ok(q) = extend_path(&p, &self.key) else {
                    continue;
                };
                ctx.publish(&d.chain, Some(&d.escrower), Payload::Vote { path: q });
                self.forwarded.insert((voter.clone(), d));
            }
        }
    }

    fn cbc_vote(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan, h: Hash, commit: bool) {
        let deal = plan.deal.id.clone();
        let voter = self.me.clone();
        let entry = if commit {
            CbcEntry::Commit { deal, h, voter }
        } else {
            self.aborted = true;
            CbcEntry::Abort { deal, h, voter }
        };
        ctx.publish(&plan.cbc_chain, None, Payload::Cbc { entry });
    }

    fn cbc_commit(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan) {
        let Some((h, _)) = self.cbc_start(ctx, plan) else {
            return;
        };
        if self.cbc_decided(ctx, plan, &h).is_some() {
            self.settle(ctx, plan, h);
            return;
        }
        if !self.acts(Phase::Commit) {
            return;
        }
        let now = ctx.now();
        let t0 = plan.deal.t0;
        if self.refused && !self.aborted {
            self.cbc_vote(ctx, plan, h, false);
        }
        let aborts = !matches!(
            self.strategy,
            Strategy::IgnoreForwarding | Strategy::WithholdOwnVote | Strategy::LateClaim | Strategy::LastMinuteVote { .. }
        );
        if let Some(v) = self.validated_at {
            if self.voted_at.is_none() && !self.aborted && self.strategy != Strategy::WithholdOwnVote {
                let at = match self.strategy {
                    Strategy::LateClaim => t0 + plan.grace + plan.deal.delta,
                    Strategy::LastMinuteVote { .. } => (t0 + plan.grace).saturating_sub(1),
                    _ => v.max(t0),
                };
                if now >= at {
                    self.voted_at = Some(now);
                    let copies = match self.strategy {
                        Strategy::ReplayVotes { copies } => copies + 1,
                        _ => 1,
                    };
                    for _ in 0..copies {
                        self.cbc_vote(ctx, plan, h, true);
                    }
                    if self.strategy == Strategy::AbortAfterCommit {
                        self.cbc_vote(ctx, plan, h, false);
                    }
                } else {
                    ctx.wake_at(at);
                }
            }
        }
        if !aborts || self.aborted {
            return;
        }
        match self.voted_at {
            None if now >= plan.patience => self.cbc_vote(ctx, plan, h, false),
            None => ctx.wake_at(plan.patience),
            Some(v) if now >= v + plan.grace => self.cbc_vote(ctx, plan, h, false),
            Some(v) => ctx.wake_at(v + plan.grace),
        }
    }

    fn settle(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan, h: Hash) {
        if !self.acts(Phase::Settle) || self.strategy == Strategy::IgnoreForwarding {
            return;
        }
        let Some(cert) = ctx.certificate(&plan.deal.id, &h) else {
            return;
        };
        let now = ctx.now();
        for cid in self.involved.clone() {
            if self.settled.contains(&cid) || !self.may_publish(now, &cid) {
                continue;
            }
            let view = ctx.view(&cid.chain);
            if !view.contract(&cid.escrower).is_some_and(|c| c.escrow.is_active()) {
                continue;
            }
            ctx.publish(&cid.chain, Some(&cid.escrower), Payload::Settle { cert: cert.clone() });
            self.settled.insert(cid);
        }
    }

    /// One-shot and recurring misbehavior on top of the code paths above.
    fn deviate(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan) {
        let now = ctx.now();
        let t0 = plan.deal.t0;
        match self.strategy.clone() {
            Strategy::ForgeSignatures { attempts } => {
                if now < t0 {
                    ctx.wake_at(t0);
                } else if self.first("forge") {
                    self.forge(ctx, plan, attempts);
                }
            }
            Strategy::FakeCertificate { status } if plan.protocol == Protocol::Cbc => {
                if now < t0 {
                    ctx.wake_at(t0);
                } else if let Some((h, _)) = self.cbc_start(ctx, plan) {
                    if self.first("fake") {
                        self.fake_certificate(ctx, plan, h, status);
                    }
                }
            }
            Strategy::ReplayVotes { copies } => self.replay(ctx, plan, copies),
            _ => {}
        }
    }

    fn junk_signature(&self, tag: &str, i: u64) -> Signature {
        Signature(sha256(&[b"forged", tag.as_bytes(), self.me.as_str().as_bytes(), &i.to_be_bytes()]))
    }

    fn forge(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan, attempts: u32) {
        let others: Vec<PartyId> = plan.deal.parties.iter().filter(|p| **p != self.me).cloned().collect();
        if plan.protocol.is_timelock_family() {
            for cid in self.involved.clone() {
                let view = ctx.view(&cid.chain);
                let observed = view.contract(&cid.escrower).and_then(|c| c.timelock()).map(|e| e.votes.clone());
                for v in &others {
                    for a in 0..attempts as u64 {
                        let path = match observed.as_ref().and_then(|o| o.get(v)) {
                            // Reuse a real signature on a fresh nonce.
                            Some(real) if a % 2 == 1 => {
                                let mut p = real.clone();
                                p.vote.nonce = self.next_nonce();
                                p.links.truncate(1);
                                p
                            }
                            _ => PathSignature {
                                vote: Vote {
                                    deal: plan.deal.id.clone(),
                                    voter: v.clone(),
                                    nonce: self.next_nonce(),
                                },
                                links: vec![Link {
                                    signer: v.clone(),
                                    sig: self.junk_signature(v.as_str(), a),
                                }],
                            },
                        };
                        ctx.publish(&cid.chain, Some(&cid.escrower), Payload::Vote { path });
                    }
                }
            }
            return;
        }
        let Some((h, _)) = self.cbc_start(ctx, plan) else {
            return;
        };
        for v in &others {
            let entry = CbcEntry::Commit {
                deal: plan.deal.id.clone(),
                h,
                voter: v.clone(),
            };
            ctx.publish(&plan.cbc_chain, None, Payload::Cbc { entry });
        }
        let f = plan.validators.as_ref().map_or(1, |s| s.f);
        for a in 0..attempts as u64 {
            let status = if a % 2 == 0 { Outcome::Commit } else { Outcome::Abort };
            let cert = Certificate {
                statement: Statement {
                    deal: plan.deal.id.clone(),
                    h,
                    status,
                },
                epoch: 0,
                signatures: (0..=f)
                    .map(|i| (validator_name(0, i), self.junk_signature("cert", a * 100 + i as u64)))
                    .collect(),
                reconfigurations: Vec::new(),
            };
            self.publish_everywhere(ctx, Payload::Settle { cert });
        }
    }

    fn fake_certificate(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan, h: Hash, status: Outcome) {
        let statement = Statement {
            deal: plan.deal.id.clone(),
            h,
            status,
        };
        let reconfigurations = ctx.reconfigurations();
        let epoch = reconfigurations.len() as u64;
        let corrupt = ctx.corrupt_signatures(&statement);
        let f = plan.validators.as_ref().map_or(1, |s| s.f);
        let msg = statement.canonical_bytes();
        let cert = |signatures: Vec<(ValidatorId, Signature)>| Certificate {
            statement: statement.clone(),
            epoch,
            signatures,
            reconfigurations: reconfigurations.clone(),
        };
        // Corrupt signatures alone.
        let mut variants = vec![cert(corrupt.clone())];
        // Padded with honest validators' names over our own signature.
        let mut padded = corrupt.clone();
        let mut i = 0;
        while padded.len() < f + 1 && i < 3 * f + 1 {
            let id = validator_name(epoch, i);
            if !padded.iter().any(|(v, _)| v == &id) {
                padded.push((id, sign(&self.key, &msg)));
            }
            i += 1;
        }
        variants.push(cert(padded));
        // Padded with an outsider.
        let mut outsider = corrupt;
        outsider.push((ValidatorId::new(format!("{}-validator", self.me)), sign(&self.key, &msg)));
        variants.push(cert(outsider));
        for c in variants {
            self.publish_everywhere(ctx, Payload::Settle { cert: c });
        }
    }

    /// Publishes to every involved contract present in this party's view.
    fn publish_everywhere(&self, ctx: &mut dyn PartyCtx, payload: Payload) {
        for cid in &self.involved {
            if ctx.view(&cid.chain).contract(&cid.escrower).is_some() {
                ctx.publish(&cid.chain, Some(&cid.escrower), payload.clone());
            }
        }
    }

    fn replay(&mut self, ctx: &mut dyn PartyCtx, plan: &Plan, copies: u32) {
        if self.voted_at.is_none() {
            return;
        }
        if plan.protocol == Protocol::Cbc {
            if self.first("restart") {
                let entry = CbcEntry::StartDeal {
                    deal: plan.deal.id.clone(),
                    plist: plan.deal.parties.clone(),
                };
                ctx.publish(&plan.cbc_chain, None, Payload::Cbc { entry });
            }
            return;
        }
        for cid in self.involved.clone() {
            let view = ctx.view(&cid.chain);
            let Some(ext) = view.contract(&cid.escrower).and_then(|c| c.timelock()) else {
                continue;
            };
            for (voter, p) in &ext.votes {
                if voter == &self.me || !self.replayed.insert((voter.clone(), cid.clone())) {
                    continue;
                }
                for _ in 0..copies {
                    ctx.publish(&cid.chain, Some(&cid.escrower), Payload::Vote { path: p.clone() });
                }
            }
        }
    }
}
