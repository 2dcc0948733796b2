//! The outer refinement loop: run one search round, stop on a counterexample
//! or on a stable predicate set, otherwise feed the discovered predicates
//! into the next round. Includes the stuck-transition heuristic for finite
//! state spaces and the transition-dependent (per-location) predicate mode.

use crate::abstraction::{property_atoms, PredicateSet};
use crate::logic::{self, PredicateAtom};
use crate::model::Model;
use crate::search::{
    alpha_search, CheckKey, ExploredStructure, PredicateMap, SearchConfig, SearchError,
    SearchOutcome,
};
use crate::semantics::Trace;
use crate::solver::{Solver, SolverStats};
use num_bigint::BigInt;
use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

/// Which predicates seed the first iteration. The property atoms are always
/// included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitPreds {
    /// Property atoms plus every atom of every transition guard.
    #[default]
    Guards,
    /// Property atoms only.
    ApOnly,
}

#[derive(Debug, Clone)]
pub struct RefineConfig {
    pub init_preds: InitPreds,
    /// Seed the atoms of `assume` declarations into the initial predicates.
    pub seed_assumes: bool,
    /// Stuck-transition threshold; after this many consecutive rounds in
    /// which a transition fails its exactness checks, equality predicates
    /// describing the failing source state are added.
    pub heuristic: Option<u32>,
    /// Keep discovered predicates local to the control valuation of the
    /// state that generated them.
    pub transition_dependent: bool,
    pub max_iterations: usize,
    pub search: SearchConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            init_preds: InitPreds::default(),
            seed_assumes: true,
            heuristic: None,
            transition_dependent: false,
            max_iterations: 50,
            search: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UndecidedReason {
    IterationLimit,
    ResourceLimit,
}

/// Final answer of the refinement loop.
#[derive(Debug, Clone)]
pub enum Verdict {
    /// A concretely replayable run into the error property.
    ErrorFound(Trace),
    /// The predicate set stabilized: the error is unreachable and the final
    /// structure is bisimilar to the concrete system.
    Unreachable(ExploredStructure),
    Undecided(UndecidedReason),
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::ErrorFound(_) => "error-found",
            Verdict::Unreachable(_) => "unreachable",
            Verdict::Undecided(_) => "undecided",
        }
    }
}

/// Everything recorded about one iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Size of the predicate set the round ran with (distinct atoms across
    /// locations in transition-dependent mode).
    pub phi_size: usize,
    pub concrete_states: u64,
    pub abstract_states: u64,
    pub exactness_checks: u64,
    pub failed_checks: u64,
    /// Atoms added by this round's failed checks, in discovery order.
    pub new_atoms: Vec<PredicateAtom>,
    /// Atoms contributed by the stuck-transition heuristic this round.
    pub heuristic_atoms: Vec<PredicateAtom>,
    /// Solver counters attributable to this round.
    pub solver: SolverStats,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub verdict: Verdict,
    pub iterations: Vec<IterationRecord>,
    /// Iteration after which the predicate set stopped growing, when that
    /// happened.
    pub stabilized_after: Option<usize>,
    /// The predicates the final round ran with.
    pub final_predicates: PredicateMap,
    pub wall: Duration,
}

impl VerificationReport {
    pub fn iterations_run(&self) -> usize {
        self.iterations.len()
    }
}

fn stats_delta(after: SolverStats, before: SolverStats) -> SolverStats {
    SolverStats {
        queries: after.queries - before.queries,
        cache_hits: after.cache_hits - before.cache_hits,
        backend_calls: after.backend_calls - before.backend_calls,
        sat_queries: after.sat_queries - before.sat_queries,
        backend_failures: after.backend_failures - before.backend_failures,
    }
}

/// The initial predicate set for a model under a seeding policy. Atoms over
/// control variables alone are skipped: the stored control values already
/// decide them.
pub fn initial_predicates(m: &Model, cfg: &RefineConfig) -> PredicateSet {
    let data = |atom: &crate::logic::PredicateAtom| crate::abstraction::is_data_atom(atom, m);
    let mut phi = PredicateSet::from_atoms(property_atoms(m).into_iter().filter(data));
    if cfg.init_preds == InitPreds::Guards {
        for t in &m.transitions {
            for atom in logic::atoms(&t.guard).into_iter().filter(data) {
                phi.insert(atom);
            }
        }
    }
    if cfg.seed_assumes {
        for a in &m.assumes {
            for atom in logic::atoms(a).into_iter().filter(data) {
                phi.insert(atom);
            }
        }
    }
    phi
}

fn distinct_atom_count(map: &PredicateMap) -> usize {
    match &map.by_location {
        None => map.global.len(),
        Some(locs) => {
            let mut all = map.global.clone();
            for set in locs.values() {
                for a in set.atoms() {
                    all.insert(a.clone());
                }
            }
            all.len()
        }
    }
}

/// Iterative refinement: search, stop on error or stable predicates, refine.
pub fn refinement_search(m: &Model, cfg: &RefineConfig, solver: &mut Solver) -> VerificationReport {
    let started = Instant::now();
    let base = initial_predicates(m, cfg);
    let mut map = if cfg.transition_dependent {
        PredicateMap {
            global: base,
            by_location: Some(BTreeMap::new()),
        }
    } else {
        PredicateMap::global(base)
    };
    let mut history: HashMap<CheckKey, u32> = HashMap::new();
    let mut iterations = Vec::new();
    for _round in 1..=cfg.max_iterations {
        let before = solver.stats();
        let outcome = match alpha_search(m, &map, &cfg.search, solver) {
            Ok(o) => o,
            Err(SearchError::ResourceLimit { .. }) => {
                return VerificationReport {
                    verdict: Verdict::Undecided(UndecidedReason::ResourceLimit),
                    iterations,
                    stabilized_after: None,
                    final_predicates: map,
                    wall: started.elapsed(),
                };
            }
            Err(SearchError::PropertyAtomsNotInPredicates) => {
                unreachable!("initial_predicates always seeds the property atoms")
            }
        };
        let heuristic_atoms = match cfg.heuristic {
            Some(threshold) => stuck_heuristic(m, threshold, &outcome, &mut history),
            None => Vec::new(),
        };
        let record = IterationRecord {
            phi_size: distinct_atom_count(&map),
            concrete_states: outcome.stats.concrete_states,
            abstract_states: outcome.stats.abstract_states,
            exactness_checks: outcome.stats.exactness_checks,
            failed_checks: outcome.stats.failed_checks,
            new_atoms: outcome.new_atoms(),
            heuristic_atoms: heuristic_atoms.iter().map(|(_, a)| a.clone()).collect(),
            solver: stats_delta(solver.stats(), before),
        };
        iterations.push(record);
        if let Some(trace) = outcome.counterexample {
            return VerificationReport {
                verdict: Verdict::ErrorFound(trace),
                iterations,
                stabilized_after: None,
                final_predicates: map,
                wall: started.elapsed(),
            };
        }
        let grew = grow_predicates(&mut map, &outcome, &heuristic_atoms);
        if !grew {
            let stabilized = iterations.len();
            return VerificationReport {
                verdict: Verdict::Unreachable(outcome.structure),
                iterations,
                stabilized_after: Some(stabilized),
                final_predicates: map,
                wall: started.elapsed(),
            };
        }
    }
    VerificationReport {
        verdict: Verdict::Undecided(UndecidedReason::IterationLimit),
        iterations,
        stabilized_after: None,
        final_predicates: map,
        wall: started.elapsed(),
    }
}

/// Extends the predicate map with the round's discoveries; returns whether
/// anything was actually new.
fn grow_predicates(
    map: &mut PredicateMap,
    outcome: &SearchOutcome,
    heuristic: &[(Vec<BigInt>, PredicateAtom)],
) -> bool {
    let mut grew = false;
    match &mut map.by_location {
        None => {
            for (_, atom) in outcome.discovered.iter().chain(heuristic) {
                grew |= map.global.insert(atom.clone());
            }
        }
        Some(locs) => {
            let global = &map.global;
            for (control, atom) in outcome.discovered.iter().chain(heuristic) {
                let set = locs
                    .entry(control.clone())
                    .or_insert_with(|| global.clone());
                grew |= set.insert(atom.clone());
            }
        }
    }
    grew
}

/// Updates the stuck-transition counters from one round's check outcomes and
/// returns the state-describing equality atoms of transitions that failed
/// their exactness checks in `threshold` consecutive rounds. Counters reset
/// when a transition's checks pass (and when the heuristic fires).
pub fn stuck_heuristic(
    m: &Model,
    threshold: u32,
    outcome: &SearchOutcome,
    history: &mut HashMap<CheckKey, u32>,
) -> Vec<(Vec<BigInt>, PredicateAtom)> {
    let threshold = threshold.max(1);
    let mut added = Vec::new();
    for key in &outcome.passes {
        history.remove(key);
    }
    for (key, sample) in &outcome.failures {
        let count = history.entry(key.clone()).or_insert(0);
        *count += 1;
        if *count >= threshold {
            *count = 0;
            for atoms in describe_state(m, sample) {
                added.push((key.0.clone(), atoms));
            }
        }
    }
    added
}

/// Equality predicates pinning the data values of a concrete state.
pub fn describe_state(m: &Model, s: &crate::semantics::ConcreteState) -> Vec<PredicateAtom> {
    m.data_vars()
        .filter_map(|v| {
            let value = s.get(v)?;
            let text = format!("{} = {}", m.var_name(v), value);
            logic::parse_atom_in(m, &text).ok()
        })
        .collect()
}
