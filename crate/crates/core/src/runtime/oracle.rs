//! Exhaustive exploration of every interleaving of visible operations.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::compile::Code;
use super::machine::{Budget, State};
use super::{code_for, strip_traces};
use crate::frontend::{AccessKind, Program, SiteId};
use crate::{Error, Result};

/// Operation budget for a single visible step of the oracle.
const STEP_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RaceAccess {
    pub site: SiteId,
    pub slot: u32,
    pub kind: AccessKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FinalState {
    pub memory: BTreeMap<String, Vec<i64>>,
    /// Printed values per thread.
    pub output: Vec<Vec<i64>>,
    pub deadlock: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OracleResult {
    pub finals: BTreeSet<FinalState>,
    /// Conflicting accesses of different threads that can execute
    /// back to back; each pair is ordered.
    pub races: BTreeSet<(RaceAccess, RaceAccess)>,
    pub states: usize,
}

impl OracleResult {
    pub fn racing_sites(&self) -> BTreeSet<(SiteId, SiteId)> {
        self.races.iter().map(|(a, b)| (a.site.clone(), b.site.clone())).collect()
    }
}

/// Visits every reachable state of `p` run with `threads` as `nthreads`.
/// Fails once more than `cap` distinct states have been seen.
pub fn explore_exhaustive(p: &Program, threads: usize, cap: usize) -> Result<OracleResult> {
    if threads == 0 {
        return Err(Error::Runtime("thread count must be at least 1".into()));
    }
    let code = code_for(&strip_traces(p), None)?;
    let mut budget = Budget::new(STEP_BUDGET);
    let init = State::new(&code, threads, &mut budget)?;
    let mut out = OracleResult::default();
    let mut seen: HashSet<State> = HashSet::new();
    seen.insert(init.clone());
    let mut stack = vec![init];
    while let Some(s) = stack.pop() {
        if s.all_finished() {
            out.finals.insert(final_state(&code, &s, false));
            continue;
        }
        let enabled: Vec<usize> = (0..s.threads.len()).filter(|&t| s.enabled(&code, t)).collect();
        if enabled.is_empty() {
            out.finals.insert(final_state(&code, &s, true));
            continue;
        }
        record_races(&code, &s, &enabled, &mut out.races);
        for &t in &enabled {
            let mut next = s.clone();
            let mut budget = Budget::new(STEP_BUDGET);
            next.step(&code, t, &mut budget)?;
            if !seen.contains(&next) {
                if seen.len() >= cap {
                    return Err(Error::ResourceCap(format!("oracle state space exceeds {cap} states")));
                }
                seen.insert(next.clone());
                stack.push(next);
            }
        }
    }
    out.states = seen.len();
    Ok(out)
}

fn record_races(code: &Code, s: &State, enabled: &[usize], races: &mut BTreeSet<(RaceAccess, RaceAccess)>) {
    let poised: Vec<_> = enabled.iter().filter_map(|&t| s.poised_access(code, t)).collect();
    for (i, a) in poised.iter().enumerate() {
        for b in &poised[i + 1..] {
            let conflict = a.2 == b.2 && a.3 == b.3 && (a.1 == AccessKind::Write || b.1 == AccessKind::Write);
            if conflict {
                let ra = race_access(code, a.0, a.1);
                let rb = race_access(code, b.0, b.1);
                races.insert(if ra <= rb { (ra, rb) } else { (rb, ra) });
            }
        }
    }
}

fn race_access(code: &Code, tag: super::compile::Tag, kind: AccessKind) -> RaceAccess {
    RaceAccess {
        site: code.sites[tag.stmt as usize].clone(),
        slot: tag.slot,
        kind,
    }
}

fn final_state(code: &Code, s: &State, deadlock: bool) -> FinalState {
    FinalState {
        memory: code
            .globals
            .iter()
            .zip(&s.memory)
            .map(|((n, _, _), m)| (n.clone(), m.clone()))
            .collect(),
        output: s.threads.iter().map(|t| t.output.clone()).collect(),
        deadlock,
    }
}
