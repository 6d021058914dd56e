//! Trace export and independent replay.
//!
//! An exported trace embeds the scenario and seed in its header. Replay
//! rebuilds the chains from genesis, re-applies every recorded call through
//! the contract logic and checks each recorded status, signature count,
//! resolution and digest against what the contracts do now.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::trace::{
    finalize_digest, parse_tsv, resolution_word, Delivery, RunTrace, TraceError, TraceMeta, TRACE_FORMAT,
};
use crate::ledger::{Entry, Protocol, Tick};
use crate::properties::{self, key_directory, Status};
use crate::report::verdict_summary;
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::genesis;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub scenario: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub horizon: Tick,
    pub ended_at: Tick,
    pub truncated: bool,
    pub verdicts: BTreeMap<String, Status>,
    /// The full scenario, as TOML.
    pub scenario_toml: String,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("bad header: {0}")]
    Header(String),
    #[error("embedded scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("line {line}: {msg}")]
    Inconsistent { line: usize, msg: String },
}

impl ReplayError {
    /// Whether the trace parsed but disagrees with the contract logic.
    pub fn is_inconsistency(&self) -> bool {
        matches!(self, ReplayError::Inconsistent { .. })
    }
}

pub fn header(trace: &RunTrace, s: &Scenario) -> TraceHeader {
    TraceHeader {
        format: TRACE_FORMAT.to_string(),
        scenario: trace.meta.scenario.clone(),
        protocol: trace.meta.protocol,
        seed: trace.meta.seed,
        horizon: trace.meta.horizon,
        ended_at: trace.meta.ended_at,
        truncated: trace.meta.truncated,
        verdicts: verdict_summary(&properties::check_all(trace, s)),
        scenario_toml: s.to_toml(),
    }
}

/// The exported, replayable form of a run.
pub fn export(trace: &RunTrace, s: &Scenario) -> String {
    let h = serde_json::to_value(header(trace, s)).expect("header serializes");
    trace.to_tsv(&h)
}

#[derive(Clone, Debug)]
pub struct Replayed {
    pub header: TraceHeader,
    pub scenario: Scenario,
    pub trace: RunTrace,
}

pub fn replay(text: &str) -> Result<Replayed, ReplayError> {
    let (h, records) = parse_tsv(text)?;
    let header: TraceHeader = serde_json::from_value(h).map_err(|e| ReplayError::Header(e.to_string()))?;
    if header.format != TRACE_FORMAT {
        return Err(ReplayError::Header(format!("unsupported format {}", header.format)));
    }
    let scenario = Scenario::from_toml(&header.scenario_toml)?;
    scenario.validate()?;
    let keys = key_directory(&scenario, header.seed);
    let (mut ledger, initial) = genesis(&scenario, header.seed)?;

    let mut entries: Vec<Entry> = Vec::new();
    let mut deliveries = Vec::new();
    let mut pending_finalize: Option<(usize, Entry)> = None;
    let mut last_tick = 0;
    for r in &records {
        let bad = |msg: String| ReplayError::Inconsistent { line: r.line, msg };
        if r.tick < last_tick {
            return Err(bad(format!("tick {} goes back from {last_tick}", r.tick)));
        }
        last_tick = r.tick;
        if let Some((line, e)) = pending_finalize.take() {
            if r.kind != "finalize" {
                return Err(ReplayError::Inconsistent {
                    line,
                    msg: format!("entry #{} resolved its contract but no finalize record follows", e.index),
                });
            }
            let o = e.finalized.expect("pending only when finalized");
            if r.status != resolution_word(o) {
                return Err(bad(format!("finalize says {}, contract {}", r.status, resolution_word(o))));
            }
            if r.digest != finalize_digest(&e.digest, o).to_string() {
                return Err(bad("finalize digest mismatch".into()));
            }
            if r.tick != e.tick {
                return Err(bad("finalize tick differs from its entry".into()));
            }
            continue;
        }
        match r.kind.as_str() {
            "finalize" => return Err(bad("finalize record without a resolving entry".into())),
            "notify" => {
                let chain = r
                    .payload
                    .get("chain")
                    .and_then(|c| c.as_str())
                    .ok_or_else(|| bad("notify without chain".into()))?;
                let len = r
                    .payload
                    .get("len")
                    .and_then(|c| c.as_u64())
                    .ok_or_else(|| bad("notify without len".into()))?;
                let c = ledger
                    .chains
                    .get(&chain.into())
                    .ok_or_else(|| bad(format!("unknown chain {chain}")))?;
                if len == 0 || len > c.entries.len() as u64 {
                    return Err(bad(format!("{chain} has {} entries, notify claims {len}", c.entries.len())));
                }
                if c.entries[len as usize - 1].digest.to_string() != r.digest {
                    return Err(bad("notify digest mismatch".into()));
                }
                deliveries.push(Delivery {
                    tick: r.tick,
                    party: r.subject.as_str().into(),
                    chain: chain.into(),
                    len,
                    after: entries.len() as u64,
                });
            }
            _ => {
                let rec: Entry = serde_json::from_value(r.payload.clone()).map_err(|e| bad(format!("bad entry: {e}")))?;
                if rec.index != entries.len() as u64 {
                    return Err(bad(format!("entry index {} out of order", rec.index)));
                }
                if rec.tick != r.tick || rec.payload.kind() != r.kind {
                    return Err(bad("record columns disagree with entry".into()));
                }
                let fresh = ledger
                    .publish(
                        &rec.chain,
                        rec.tick,
                        rec.publisher.clone(),
                        rec.contract.clone(),
                        rec.payload.clone(),
                        &keys,
                    )
                    .map_err(|e| bad(e.to_string()))?
                    .clone();
                if fresh.status != rec.status {
                    return Err(bad(format!("recorded {:?}, contract now says {:?}", rec.status, fresh.status)));
                }
                if fresh.sig_checks != rec.sig_checks {
                    return Err(bad(format!(
                        "recorded {} signature checks, contract now does {}",
                        rec.sig_checks, fresh.sig_checks
                    )));
                }
                if fresh.finalized != rec.finalized {
                    return Err(bad(format!(
                        "recorded resolution {:?}, contract now gives {:?}",
                        rec.finalized, fresh.finalized
                    )));
                }
                if fresh != rec || fresh.digest.to_string() != r.digest {
                    return Err(bad("entry digest mismatch".into()));
                }
                let status = if fresh.accepted() { "accepted" } else { "rejected" };
                if r.status != status {
                    return Err(bad(format!("status column says {}, entry is {status}", r.status)));
                }
                if fresh.finalized.is_some() {
                    pending_finalize = Some((r.line, fresh.clone()));
                }
                entries.push(fresh);
            }
        }
    }
    if let Some((line, e)) = pending_finalize {
        return Err(ReplayError::Inconsistent {
            line,
            msg: format!("entry #{} resolved its contract but no finalize record follows", e.index),
        });
    }

    let terminal = ledger
        .chains
        .iter()
        .map(|(id, c)| (id.clone(), c.current().clone()))
        .collect();
    let trace = RunTrace {
        meta: TraceMeta {
            scenario: header.scenario.clone(),
            protocol: header.protocol,
            seed: header.seed,
            horizon: header.horizon,
            ended_at: header.ended_at,
            truncated: header.truncated,
        },
        entries,
        deliveries,
        initial,
        terminal,
    };
    let verdicts = verdict_summary(&properties::check_all(&trace, &scenario));
    if verdicts != header.verdicts {
        return Err(ReplayError::Inconsistent {
            line: 1,
            msg: format!("header verdicts {:?} differ from replayed {:?}", header.verdicts, verdicts),
        });
    }
    Ok(Replayed {
        header,
        scenario,
        trace,
    })
}
