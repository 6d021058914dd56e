//! Bounded exhaustive search over adversary strategies and delivery
//! schedules.
//!
//! Each variant puts one party under one catalog strategy. For a variant,
//! every delivery of an accepted post-`t0` entry to a compliant monitor is a
//! choice point with delays `{1, delta}`, and the search enumerates every
//! choice vector depth-first. Variants run in parallel; results are merged
//! in variant order, so reports are reproducible.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{builtin_strategies, Strategy};
use crate::ids::PartyId;
use crate::ledger::schedule::ChoiceSchedule;
use crate::ledger::trace::RunTrace;
use crate::properties::{self, Status};
use crate::replay;
use crate::report::outcome_word;
use crate::scenario::{ExploreConfig, Scenario};
use crate::sim::{simulate, SimError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<PartyId>,
    pub strategy: Strategy,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.adversary {
            Some(p) => write!(f, "{p} as {}", self.strategy),
            None => f.write_str("as written"),
        }
    }
}

impl Variant {
    pub fn apply(&self, s: &Scenario) -> Scenario {
        let mut out = s.clone();
        if let Some(p) = &self.adversary {
            out.parties.entry(p.clone()).or_default().strategy = self.strategy.clone();
        }
        out
    }
}

/// The variants an explore configuration asks for.
pub fn variants(s: &Scenario, cfg: &ExploreConfig) -> Vec<Variant> {
    if cfg.adversaries.is_empty() {
        return vec![Variant {
            adversary: None,
            strategy: Strategy::Compliant,
        }];
    }
    let mut out = Vec::new();
    for p in &cfg.adversaries {
        let catalog = if cfg.strategies.is_empty() {
            builtin_strategies(&s.deal, p)
        } else {
            cfg.strategies.clone()
        };
        for strategy in catalog {
            if strategy.validate(&s.deal).is_ok() {
                out.push(Variant {
                    adversary: Some(p.clone()),
                    strategy,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub variant: Variant,
    /// Delay choices, `0` for one tick and `1` for delta.
    pub choices: Vec<u8>,
    pub properties: Vec<String>,
    /// Exported trace that reproduces the violation under replay.
    pub trace: String,
}

impl Violation {
    fn weight(&self) -> (usize, usize, &[u8]) {
        (
            self.choices.iter().filter(|&&c| c != 0).count(),
            self.choices.len(),
            &self.choices,
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantStats {
    pub variant: String,
    pub runs: u64,
    /// Runs that hit more choice points than the bound allows.
    pub truncated_runs: u64,
    pub max_choice_points: usize,
    pub committed: u64,
    pub aborted: u64,
    pub mixed: u64,
    pub unresolved: u64,
    pub violations: u64,
    /// Failing runs per property.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub failures: BTreeMap<String, u64>,
    /// The run budget ran out before the space was covered.
    pub budget_exhausted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExploreVerdict {
    /// No violation and the whole bounded space was covered.
    Safe,
    /// No violation, but some runs were truncated or the budget ran out.
    SafeWithinBound,
    Unsafe,
}

impl fmt::Display for ExploreVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExploreVerdict::Safe => "SAFE",
            ExploreVerdict::SafeWithinBound => "SAFE (within bound; coverage incomplete)",
            ExploreVerdict::Unsafe => "UNSAFE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub scenario: String,
    pub seed: u64,
    pub max_choice_points: usize,
    pub max_runs: usize,
    pub verdict: ExploreVerdict,
    pub runs: u64,
    pub variants: Vec<VariantStats>,
    /// Violation with the fewest slow deliveries, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimal: Option<Violation>,
}

impl ExploreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Failing runs per property, over all variants.
    pub fn failures(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for v in &self.variants {
            for (k, n) in &v.failures {
                *out.entry(k.clone()).or_default() += n;
            }
        }
        out
    }

    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut o = String::new();
        let _ = writeln!(
            o,
            "explore {} (seed {}, up to {} choice points, {} runs per variant)",
            self.scenario, self.seed, self.max_choice_points, self.max_runs
        );
        let _ = writeln!(
            o,
            "  {:<44} {:>7} {:>6} {:>6} {:>6} {:>6} {:>5} {:>5}",
            "variant", "runs", "commit", "abort", "mixed", "trunc", "pts", "viol"
        );
        for v in &self.variants {
            let _ = writeln!(
                o,
                "  {:<44} {:>7} {:>6} {:>6} {:>6} {:>6} {:>5} {:>5}{}",
                v.variant,
                v.runs,
                v.committed,
                v.aborted,
                v.mixed,
                v.truncated_runs,
                v.max_choice_points,
                v.violations,
                if v.budget_exhausted { "  (budget)" } else { "" }
            );
        }
        let _ = writeln!(o, "total runs: {}", self.runs);
        let _ = writeln!(o, "verdict: {}", self.verdict);
        if let Some(m) = &self.minimal {
            let _ = writeln!(
                o,
                "minimal violation: {} with choices {:?} breaks {}",
                m.variant,
                m.choices,
                m.properties.join(", ")
            );
        }
        o
    }
}

/// Property failures in one run.
pub fn failed_properties(trace: &RunTrace, s: &Scenario) -> Vec<String> {
    properties::check_all(trace, s)
        .into_iter()
        .filter(|v| v.status == Status::Fail)
        .map(|v| v.property)
        .collect()
}

/// Runs `s` with an explicit choice vector.
pub fn run_choices(
    s: &Scenario,
    seed: u64,
    choices: &[u8],
    max_points: usize,
) -> Result<(RunTrace, Vec<u8>, bool), SimError> {
    let mut sched = ChoiceSchedule::new(s.delta(), choices.to_vec(), max_points);
    let trace = simulate(s, seed, &mut sched)?;
    Ok((trace, sched.taken().to_vec(), sched.truncated()))
}

fn explore_variant(
    base: &Scenario,
    v: &Variant,
    seed: u64,
    max_points: usize,
    max_runs: usize,
) -> Result<(VariantStats, Option<Violation>), SimError> {
    let s = v.apply(base);
    let mut stats = VariantStats {
        variant: v.to_string(),
        ..Default::default()
    };
    let mut best: Option<Violation> = None;
    let mut stack: Vec<Vec<u8>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        if stats.runs as usize >= max_runs {
            stats.budget_exhausted = true;
            break;
        }
        let (trace, taken, truncated) = run_choices(&s, seed, &prefix, max_points)?;
        stats.runs += 1;
        stats.truncated_runs += truncated as u64;
        stats.max_choice_points = stats.max_choice_points.max(taken.len());
        match outcome_word(&trace) {
            "committed" => stats.committed += 1,
            "aborted" => stats.aborted += 1,
            "mixed" => stats.mixed += 1,
            _ => stats.unresolved += 1,
        }
        let failed = failed_properties(&trace, &s);
        for f in &failed {
            *stats.failures.entry(f.clone()).or_default() += 1;
        }
        if !failed.is_empty() {
            stats.violations += 1;
            let cand = Violation {
                variant: v.clone(),
                choices: taken.clone(),
                properties: failed,
                trace: String::new(),
            };
            if best.as_ref().is_none_or(|b| cand.weight() < b.weight()) {
                best = Some(Violation {
                    trace: replay::export(&trace, &s),
                    ..cand
                });
            }
        }
        for i in (prefix.len()..taken.len()).rev() {
            let mut next = taken[..i].to_vec();
            next.push(1);
            stack.push(next);
        }
    }
    Ok((stats, best))
}

/// Explores every variant the scenario's `[explore]` table names, or the
/// scenario as written if it has none.
pub fn explore(s: &Scenario, seed: u64, cfg: &ExploreConfig) -> Result<ExploreReport, SimError> {
    s.validate()?;
    let vs = variants(s, cfg);
    let results: Vec<_> = vs
        .par_iter()
        .map(|v| explore_variant(s, v, seed, cfg.max_choice_points, cfg.max_runs))
        .collect::<Result<_, _>>()?;
    let mut minimal: Option<Violation> = None;
    let mut variants = Vec::new();
    for (stats, best) in results {
        variants.push(stats);
        if let Some(b) = best {
            if minimal.as_ref().is_none_or(|m| b.weight() < m.weight()) {
                minimal = Some(b);
            }
        }
    }
    let incomplete = variants
        .iter()
        .any(|v| v.truncated_runs > 0 || v.budget_exhausted);
    let verdict = if minimal.is_some() {
        ExploreVerdict::Unsafe
    } else if incomplete {
        ExploreVerdict::SafeWithinBound
    } else {
        ExploreVerdict::Safe
    };
    Ok(ExploreReport {
        scenario: s.name.clone(),
        seed,
        max_choice_points: cfg.max_choice_points,
        max_runs: cfg.max_runs,
        verdict,
        runs: variants.iter().map(|v| v.runs).sum(),
        variants,
        minimal,
    })
}
