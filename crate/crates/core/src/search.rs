//! One exploration round: concrete search with abstract matching, on-the-fly
//! exactness checking, accumulation of refinement predicates, and
//! counterexample reconstruction.
//!
//! The loop executes concrete transitions but matches states on their
//! abstractions. For every considered transition it asks the solver whether
//! the abstraction is exact: an enabled guard must follow from the source
//! cube, the substituted target cube must follow from the source cube, and a
//! disabled guard must be refuted by the source cube. The atoms of whatever
//! cannot be proven become candidate predicates for the next round. The
//! predicate set itself is frozen for the duration of one search.

use crate::abstraction::{
    abstract_formula, abstract_state, cube_literals, label, property_atoms, AbstractState,
    LabelSet, PredicateSet,
};
use crate::logic::{self, PredicateAtom};
use crate::model::{Formula, Model, Transition, VarId};
use crate::semantics::{apply, initial_state, ConcreteState, InputMode, Trace, TraceStep};
use crate::solver::{SatOutcome, Solver};
use num_bigint::BigInt;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchOrder {
    #[default]
    BreadthFirst,
    DepthFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckMode {
    /// Validity checking with a solver; only unprovable conjuncts refine.
    #[default]
    Prover,
    /// No solver: every considered transition contributes its guard atoms and
    /// substituted target-cube atoms. A superset of what prover mode adds.
    Lightweight,
}

/// How successors of `x := input` assignments are produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputStrategy {
    /// Enumerate the whole domain; matching discards most of the results.
    BruteForce(i64, i64),
    /// One solver witness per satisfiable polarity combination of the
    /// predicates that mention input variables.
    Satisfiability,
}

impl Default for InputStrategy {
    fn default() -> Self {
        InputStrategy::BruteForce(-8, 8)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[derive(Default)]
pub struct SearchConfig {
    pub order: SearchOrder,
    pub mode: CheckMode,
    pub input: InputStrategy,
    pub max_states: Option<usize>,
    pub max_millis: Option<u64>,
}


/// Predicates used for abstraction: a global set, optionally specialized per
/// control valuation (transition-dependent refinement keeps location-local
/// sets on top of the shared base).
#[derive(Debug, Clone, Default)]
pub struct PredicateMap {
    pub global: PredicateSet,
    pub by_location: Option<BTreeMap<Vec<BigInt>, PredicateSet>>,
}

impl PredicateMap {
    pub fn global(phi: PredicateSet) -> Self {
        PredicateMap {
            global: phi,
            by_location: None,
        }
    }

    pub fn for_control(&self, control: &[BigInt]) -> &PredicateSet {
        match &self.by_location {
            Some(map) => map.get(control).unwrap_or(&self.global),
            None => &self.global,
        }
    }

    pub fn is_local(&self) -> bool {
        self.by_location.is_some()
    }
}

/// The structure assembled by the search: stored abstract states (index 0 is
/// the initial one), the labeled abstract transitions in discovery order, and
/// the proposition labeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploredStructure {
    pub states: Vec<AbstractState>,
    pub transitions: Vec<(usize, usize, usize)>,
    pub initial: usize,
    pub labels: Vec<LabelSet>,
}

impl ExploredStructure {
    /// The set of labelings of the stored states.
    pub fn reachable_labelings(&self) -> HashSet<LabelSet> {
        self.labels.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct SearchStats {
    /// Concrete states generated: the initial state plus one per executed
    /// transition instance, matched or not.
    pub concrete_states: u64,
    /// Abstract states stored.
    pub abstract_states: u64,
    /// Validity checks issued for exactness.
    pub exactness_checks: u64,
    /// Checks whose validity could not be proven.
    pub failed_checks: u64,
}

/// Key of the stuck-transition bookkeeping: control values of the source
/// state plus the transition index.
pub type CheckKey = (Vec<BigInt>, usize);

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub structure: ExploredStructure,
    /// The concrete state that first reached each stored abstract state,
    /// parallel to `structure.states`.
    pub representatives: Vec<ConcreteState>,
    /// The input predicates plus everything discovered this round.
    pub phi_new: PredicateSet,
    /// Discovered atoms with the control valuation of the state that
    /// generated them, in discovery order.
    pub discovered: Vec<(Vec<BigInt>, PredicateAtom)>,
    pub counterexample: Option<Trace>,
    pub stats: SearchStats,
    /// Per transition-at-location outcomes of this round, for the
    /// stuck-transition heuristic: keys that failed at least one check (with
    /// a sample source state) and keys whose checks all passed.
    pub failures: Vec<(CheckKey, ConcreteState)>,
    pub passes: Vec<CheckKey>,
}

impl SearchOutcome {
    pub fn new_atoms(&self) -> Vec<PredicateAtom> {
        let mut out = Vec::new();
        for (_, a) in &self.discovered {
            if !out.contains(a) {
                out.push(a.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SearchError {
    #[error("resource limit reached after storing {states} abstract states")]
    ResourceLimit { states: usize },
    #[error("the property atoms must all be abstraction predicates")]
    PropertyAtomsNotInPredicates,
}

/// Verdict of one exactness check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactnessResult {
    pub exact: bool,
    pub new_atoms: Vec<PredicateAtom>,
}

impl ExactnessResult {
    fn exact() -> Self {
        ExactnessResult {
            exact: true,
            new_atoms: Vec::new(),
        }
    }
}

/// Exactness checking for one search round: owns the source-cube formula
/// cache and counts checks.
pub struct ExactnessChecker<'a> {
    model: &'a Model,
    phi: &'a PredicateMap,
    mode: CheckMode,
    pub checks: u64,
    pub failed: u64,
}

impl<'a> ExactnessChecker<'a> {
    pub fn new(model: &'a Model, phi: &'a PredicateMap, mode: CheckMode) -> Self {
        ExactnessChecker {
            model,
            phi,
            mode,
            checks: 0,
            failed: 0,
        }
    }

    fn fresh_atoms(&self, from: &Formula, source_set: &PredicateSet, out: &mut Vec<PredicateAtom>) {
        for atom in logic::atoms(from) {
            // Atoms over control variables alone carry no information beyond
            // the stored control values and never become predicates.
            if !crate::abstraction::is_data_atom(&atom, self.model) {
                continue;
            }
            if !source_set.contains(&atom) && !out.contains(&atom) {
                out.push(atom);
            }
        }
    }

    /// Checks `alpha(s) => guard` and, conjunct-wise, `alpha(s) =>
    /// alpha(s_next)[updates]`. Atoms of whatever fails are returned.
    pub fn check_enabled(
        &mut self,
        solver: &mut Solver,
        s: &ConcreteState,
        source_cube: &Formula,
        t: &Transition,
        inputs: &BTreeMap<VarId, BigInt>,
        s_next: &ConcreteState,
    ) -> ExactnessResult {
        let source_set = self.phi.for_control(&s.control_values(self.model));
        let target_control = s_next.control_values(self.model);
        let target_set = self.phi.for_control(&target_control);
        let target_abs = abstract_state(s_next, target_set, self.model);
        let sigma = logic::update_map(t, Some(inputs)).expect("inputs supplied");
        let mut new_atoms = Vec::new();
        let mut exact = true;
        if self.mode == CheckMode::Lightweight {
            self.fresh_atoms(&t.guard, source_set, &mut new_atoms);
            for lit in cube_literals(&target_abs, target_set, self.model) {
                let shifted = logic::normalize(&logic::substitute(&lit, &sigma));
                self.fresh_atoms(&shifted, source_set, &mut new_atoms);
            }
            return ExactnessResult {
                exact: new_atoms.is_empty(),
                new_atoms,
            };
        }
        self.checks += 1;
        if !solver.check_valid(source_cube, &t.guard).is_valid() {
            self.failed += 1;
            exact = false;
            self.fresh_atoms(&t.guard, source_set, &mut new_atoms);
        }
        // One query for the whole substituted cube; the conjuncts are probed
        // individually only when it fails, to find the atoms worth adding.
        let shifted: Vec<Formula> = cube_literals(&target_abs, target_set, self.model)
            .iter()
            .map(|lit| logic::substitute(lit, &sigma))
            .collect();
        let whole = Formula::and(shifted.clone());
        self.checks += 1;
        if !solver.check_valid(source_cube, &whole).is_valid() {
            self.failed += 1;
            exact = false;
            for conjunct in &shifted {
                self.checks += 1;
                if !solver.check_valid(source_cube, conjunct).is_valid() {
                    self.fresh_atoms(&logic::normalize(conjunct), source_set, &mut new_atoms);
                }
            }
        }
        ExactnessResult { exact, new_atoms }
    }

    /// Checks `alpha(s) => not guard` for a disabled transition.
    pub fn check_disabled(
        &mut self,
        solver: &mut Solver,
        s: &ConcreteState,
        source_cube: &Formula,
        t: &Transition,
    ) -> ExactnessResult {
        let source_set = self.phi.for_control(&s.control_values(self.model));
        let mut new_atoms = Vec::new();
        if self.mode == CheckMode::Lightweight {
            self.fresh_atoms(&t.guard, source_set, &mut new_atoms);
            return ExactnessResult {
                exact: new_atoms.is_empty(),
                new_atoms,
            };
        }
        self.checks += 1;
        if solver
            .check_valid(source_cube, &Formula::not(t.guard.clone()))
            .is_valid()
        {
            ExactnessResult::exact()
        } else {
            self.failed += 1;
            self.fresh_atoms(&t.guard, source_set, &mut new_atoms);
            ExactnessResult {
                exact: false,
                new_atoms,
            }
        }
    }
}

/// Convenience wrappers matching the two exactness conditions, for callers
/// outside the search loop (tests, exploration tools).
pub fn exactness_check_enabled(
    m: &Model,
    phi: &PredicateSet,
    solver: &mut Solver,
    s: &ConcreteState,
    t: &Transition,
    s_next: &ConcreteState,
) -> ExactnessResult {
    let map = PredicateMap::global(phi.clone());
    let mut checker = ExactnessChecker::new(m, &map, CheckMode::Prover);
    let cube = abstract_formula(&abstract_state(s, phi, m), phi, m);
    checker.check_enabled(solver, s, &cube, t, &BTreeMap::new(), s_next)
}

pub fn exactness_check_disabled(
    m: &Model,
    phi: &PredicateSet,
    solver: &mut Solver,
    s: &ConcreteState,
    t: &Transition,
) -> ExactnessResult {
    let map = PredicateMap::global(phi.clone());
    let mut checker = ExactnessChecker::new(m, &map, CheckMode::Prover);
    let cube = abstract_formula(&abstract_state(s, phi, m), phi, m);
    checker.check_disabled(solver, s, &cube, t)
}

/// How a stored state was first reached: predecessor index, transition
/// index, and the chosen input values.
pub type ParentLink = Option<(usize, usize, BTreeMap<VarId, BigInt>)>;

struct StoredState {
    rep: ConcreteState,
    parent: ParentLink,
}

/// Walks parent links back to the initial state.
pub fn reconstruct_counterexample(
    stored: &[(ConcreteState, ParentLink)],
    hit: usize,
) -> Trace {
    let mut rev = Vec::new();
    let mut cursor = hit;
    while let Some((parent, trans, inputs)) = &stored[cursor].1 {
        rev.push(TraceStep {
            transition: *trans,
            inputs: inputs.clone(),
            state: stored[cursor].0.clone(),
        });
        cursor = *parent;
    }
    rev.reverse();
    Trace {
        initial: stored[0].0.clone(),
        steps: rev,
    }
}

/// Concrete search with abstract matching and exactness checking.
///
/// The wait list is seeded with the initial state; dequeued states are
/// checked against the error property (stopping early on a hit) and expanded
/// in transition order. A successor is enqueued only when its abstract state
/// has not been stored yet; the abstract transition is recorded either way.
pub fn alpha_search(
    m: &Model,
    phi: &PredicateMap,
    cfg: &SearchConfig,
    solver: &mut Solver,
) -> Result<SearchOutcome, SearchError> {
    let ap = property_atoms(m);
    // Labels must be a function of the stored abstract states: every data
    // proposition has to be a predicate. Control-only propositions are
    // determined by the stored control values and need no predicate.
    for a in &ap {
        if crate::abstraction::is_data_atom(a, m) && !phi.global.contains(a) {
            return Err(SearchError::PropertyAtomsNotInPredicates);
        }
    }
    let started = Instant::now();
    let s0 = initial_state(m);
    let mut stored: Vec<StoredState> = Vec::new();
    let mut states: Vec<AbstractState> = Vec::new();
    let mut labels: Vec<LabelSet> = Vec::new();
    let mut index: HashMap<AbstractState, usize> = HashMap::new();
    let mut transitions: Vec<(usize, usize, usize)> = Vec::new();
    let mut trans_seen: HashSet<(usize, usize, usize)> = HashSet::new();
    let mut wait: VecDeque<usize> = VecDeque::new();
    let mut stats = SearchStats::default();
    let mut checker = ExactnessChecker::new(m, phi, cfg.mode);
    let mut discovered: Vec<(Vec<BigInt>, PredicateAtom)> = Vec::new();
    let mut failures: Vec<(CheckKey, ConcreteState)> = Vec::new();
    let mut failure_keys: HashSet<CheckKey> = HashSet::new();
    let mut pass_keys: HashSet<CheckKey> = HashSet::new();
    let mut pass_order: Vec<CheckKey> = Vec::new();

    let a0 = abstract_state(&s0, phi.for_control(&s0.control_values(m)), m);
    index.insert(a0.clone(), 0);
    states.push(a0);
    labels.push(label(&s0, &ap));
    stored.push(StoredState {
        rep: s0,
        parent: None,
    });
    wait.push_back(0);
    stats.concrete_states = 1;
    stats.abstract_states = 1;

    let mut counterexample: Option<Trace> = None;

    'search: while let Some(id) = match cfg.order {
        SearchOrder::BreadthFirst => wait.pop_front(),
        SearchOrder::DepthFirst => wait.pop_back(),
    } {
        if let Some(limit) = cfg.max_millis {
            if started.elapsed().as_millis() as u64 > limit {
                return Err(SearchError::ResourceLimit {
                    states: states.len(),
                });
            }
        }
        let s = stored[id].rep.clone();
        if logic::evaluate(&m.property, &s).unwrap_or(false) {
            let flat: Vec<_> = stored
                .iter()
                .map(|st| (st.rep.clone(), st.parent.clone()))
                .collect();
            counterexample = Some(reconstruct_counterexample(&flat, id));
            break 'search;
        }
        let source_control = s.control_values(m);
        let source_set = phi.for_control(&source_control);
        let source_cube = abstract_formula(&states[id], source_set, m);
        for t in &m.transitions {
            let key: CheckKey = (source_control.clone(), t.index);
            let enabled = logic::evaluate(&t.guard, &s).unwrap_or(false);
            let mut key_failed = false;
            if enabled {
                for (inputs, s_next) in expand(m, phi, solver, &s, t, &cfg.input) {
                    stats.concrete_states += 1;
                    let result =
                        checker.check_enabled(solver, &s, &source_cube, t, &inputs, &s_next);
                    if !result.exact {
                        key_failed = true;
                    }
                    for atom in result.new_atoms {
                        if !discovered
                            .iter()
                            .any(|(c, a)| a == &atom && (!phi.is_local() || c == &source_control))
                        {
                            discovered.push((source_control.clone(), atom));
                        }
                    }
                    let target_set = phi.for_control(&s_next.control_values(m));
                    let a_next = abstract_state(&s_next, target_set, m);
                    let target_id = match index.get(&a_next) {
                        Some(&existing) => existing,
                        None => {
                            let new_id = states.len();
                            if let Some(limit) = cfg.max_states {
                                if new_id >= limit {
                                    return Err(SearchError::ResourceLimit { states: new_id });
                                }
                            }
                            index.insert(a_next.clone(), new_id);
                            states.push(a_next);
                            labels.push(label(&s_next, &ap));
                            stored.push(StoredState {
                                rep: s_next.clone(),
                                parent: Some((id, t.index, inputs.clone())),
                            });
                            wait.push_back(new_id);
                            stats.abstract_states += 1;
                            new_id
                        }
                    };
                    if trans_seen.insert((id, t.index, target_id)) {
                        transitions.push((id, t.index, target_id));
                    }
                }
            } else {
                let result = checker.check_disabled(solver, &s, &source_cube, t);
                if !result.exact {
                    key_failed = true;
                }
                for atom in result.new_atoms {
                    if !discovered
                        .iter()
                        .any(|(c, a)| a == &atom && (!phi.is_local() || c == &source_control))
                    {
                        discovered.push((source_control.clone(), atom));
                    }
                }
            }
            if key_failed {
                if failure_keys.insert(key.clone()) {
                    failures.push((key, s.clone()));
                }
            } else if pass_keys.insert(key.clone()) {
                pass_order.push(key);
            }
        }
    }

    stats.exactness_checks = checker.checks;
    stats.failed_checks = checker.failed;
    let mut phi_new = phi.global.clone();
    for (_, atom) in &discovered {
        phi_new.insert(atom.clone());
    }
    // A transition that failed anywhere this round does not count as passing.
    let passes: Vec<CheckKey> = pass_order
        .into_iter()
        .filter(|k| !failure_keys.contains(k))
        .collect();
    Ok(SearchOutcome {
        structure: ExploredStructure {
            states,
            transitions,
            initial: 0,
            labels,
        },
        representatives: stored.into_iter().map(|st| st.rep).collect(),
        phi_new,
        discovered,
        counterexample,
        stats,
        failures,
        passes,
    })
}

/// Successor expansion for one enabled transition: a single successor for
/// closed transitions, the enumerated or witness-driven set for input
/// transitions.
fn expand(
    m: &Model,
    phi: &PredicateMap,
    solver: &mut Solver,
    s: &ConcreteState,
    t: &Transition,
    strategy: &InputStrategy,
) -> Vec<(BTreeMap<VarId, BigInt>, ConcreteState)> {
    let ivars = t.input_vars();
    if ivars.is_empty() {
        let next = apply(s, t, &BTreeMap::new()).expect("guard holds");
        return vec![(BTreeMap::new(), next)];
    }
    match strategy {
        InputStrategy::BruteForce(lo, hi) => {
            crate::semantics::successors(s, m, &InputMode::BruteForce(*lo, *hi))
                .into_iter()
                .filter(|(i, _, _)| *i == t.index)
                .map(|(_, inputs, next)| (inputs, next))
                .collect()
        }
        InputStrategy::Satisfiability => witness_successors(m, phi, solver, s, t, &ivars),
    }
}

/// One witness per satisfiable polarity combination of the predicates that
/// mention input variables, with all other variables fixed to their
/// post-state values.
fn witness_successors(
    m: &Model,
    phi: &PredicateMap,
    solver: &mut Solver,
    s: &ConcreteState,
    t: &Transition,
    ivars: &[VarId],
) -> Vec<(BTreeMap<VarId, BigInt>, ConcreteState)> {
    // Post-state with inputs temporarily zero; non-input variables are final.
    let zeros: BTreeMap<VarId, BigInt> = ivars.iter().map(|v| (*v, BigInt::from(0))).collect();
    let base_next = apply(s, t, &zeros).expect("guard holds");
    let set = phi.for_control(&base_next.control_values(m));
    let relevant: Vec<&PredicateAtom> = set
        .atoms()
        .iter()
        .filter(|a| a.vars().iter().any(|v| ivars.contains(v)))
        .collect();
    // Fix every non-input variable in the relevant predicates to its
    // post-state value.
    let fix: BTreeMap<VarId, crate::model::Expr> = relevant
        .iter()
        .flat_map(|a| a.vars())
        .filter(|v| !ivars.contains(v))
        .map(|v| {
            (
                v,
                crate::model::Expr::Const(base_next.get(v).unwrap().clone()),
            )
        })
        .collect();
    let mut out = Vec::new();
    let k = relevant.len().min(16);
    for mask in 0u32..(1u32 << k) {
        let mut parts = Vec::new();
        for (j, atom) in relevant.iter().take(k).enumerate() {
            let f = logic::substitute(&atom.to_formula(), &fix);
            parts.push(if mask >> j & 1 == 1 {
                f
            } else {
                Formula::not(f)
            });
        }
        let cube = Formula::and(parts);
        if let SatOutcome::Sat(witness) = solver.check_sat(&cube) {
            let inputs: BTreeMap<VarId, BigInt> = ivars
                .iter()
                .map(|v| {
                    (
                        *v,
                        witness.get(v).cloned().unwrap_or_else(|| BigInt::from(0)),
                    )
                })
                .collect();
            let next = apply(s, t, &inputs).expect("guard holds");
            if !out.iter().any(|(i, _)| i == &inputs) {
                out.push((inputs, next));
            }
        }
    }
    // Deterministic order: ascending input tuples.
    out.sort_by(|(a, _), (b, _)| a.values().cmp(b.values()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::model::parse_model;

    fn solver_for(m: &Model) -> Solver {
        Solver::builtin(m.vars.iter().map(|v| v.name.clone()).collect())
    }

    fn phi_map(m: &Model, preds: &[&str]) -> PredicateMap {
        let data_props = property_atoms(m)
            .into_iter()
            .filter(|a| crate::abstraction::is_data_atom(a, m));
        let mut set = PredicateSet::from_atoms(data_props);
        for p in preds {
            set.insert(logic::parse_atom_in(m, p).unwrap());
        }
        PredicateMap::global(set)
    }

    fn run(m: &Model, preds: &[&str]) -> SearchOutcome {
        let phi = phi_map(m, preds);
        let mut solver = solver_for(m);
        alpha_search(m, &phi, &SearchConfig::default(), &mut solver).unwrap()
    }

    fn state_names(m: &Model, out: &SearchOutcome) -> Vec<String> {
        out.structure.states.iter().map(|a| a.display(m)).collect()
    }

    #[test]
    fn rejoin_with_one_predicate_misses_the_high_branch() {
        let m = parse_model(corpus::REJOIN).unwrap();
        let out = run(&m, &["x < 2"]);
        // Locations 0..3 are stored once each; location 4 is never reached
        // because the second copy of location 3 matches the first.
        assert_eq!(out.structure.states.len(), 4);
        let names = state_names(&m, &out);
        assert!(names.iter().all(|n| !n.starts_with("pc=4")), "{names:?}");
        assert!(out.counterexample.is_none());
    }

    #[test]
    fn rejoin_with_two_predicates_is_exact() {
        let m = parse_model(corpus::REJOIN).unwrap();
        let out = run(&m, &["x < 2", "x < 1"]);
        assert_eq!(out.structure.states.len(), 6);
        let names = state_names(&m, &out);
        assert!(names.iter().any(|n| n.starts_with("pc=4")), "{names:?}");
    }

    #[test]
    fn rejoin_refinement_discovers_the_splitting_predicate() {
        // With only x < 2 the disabled check at the joined location cannot be
        // proven, which surfaces the guard atom x < 1.
        let m = parse_model(corpus::REJOIN).unwrap();
        let out = run(&m, &["x < 2"]);
        let want = logic::parse_atom_in(&m, "x < 1").unwrap();
        assert!(out.new_atoms().contains(&want), "{:?}", out.new_atoms());
    }

    #[test]
    fn pump_iteration_one_visits_the_listed_states() {
        let m = parse_model(corpus::PUMP).unwrap();
        let out = run(&m, &["x >= 3"]);
        let visited: Vec<(i64, i64)> = out
            .structure
            .states
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let rep = &out.structure;
                let _ = rep;
                let pc: i64 = a.control_values()[0].clone().try_into().unwrap();
                (i as i64, pc)
            })
            .collect();
        let _ = visited;
        assert_eq!(out.structure.states.len(), 8);
        assert!(out.counterexample.is_none());
    }

    #[test]
    fn identity_transition_is_exact() {
        let m = parse_model("vars x; trans id: true -> x := x; prop p: x < 0;").unwrap();
        let phi = phi_map(&m, &["x < 0"]);
        let mut solver = solver_for(&m);
        let s = initial_state(&m);
        let next = apply(&s, &m.transitions[0], &BTreeMap::new()).unwrap();
        let r = exactness_check_enabled(&m, &phi.global, &mut solver, &s, &m.transitions[0], &next);
        assert!(r.exact, "{r:?}");
    }

    #[test]
    fn false_guard_is_always_exactly_disabled() {
        let m = parse_model("vars x; trans never: false -> x := x + 1; prop p: x < 0;").unwrap();
        let phi = phi_map(&m, &[]);
        let mut solver = solver_for(&m);
        let s = initial_state(&m);
        let r = exactness_check_disabled(&m, &phi.global, &mut solver, &s, &m.transitions[0]);
        assert!(r.exact);
    }

    #[test]
    fn disabled_guard_without_predicates_refines() {
        // With an empty predicate set the cube at x = -1 is just `true`,
        // which cannot refute the guard: the check fails and surfaces the
        // guard atom.
        let m = parse_model("vars x; trans dec: x >= 0 -> x := x - 1; prop p: false;").unwrap();
        let phi = PredicateSet::new();
        let mut solver = solver_for(&m);
        let s1 = ConcreteState::new(vec![BigInt::from(-1)]);
        let r = exactness_check_disabled(&m, &phi, &mut solver, &s1, &m.transitions[0]);
        assert!(!r.exact);
        let want = logic::parse_atom_in(&m, "x >= 0").unwrap();
        assert!(r.new_atoms.contains(&want));
    }

    #[test]
    fn update_check_failure_reports_substituted_atom() {
        // The loop body y := y + x under predicate y >= 0 fails its update
        // check and contributes y + x >= 0.
        let m = parse_model(corpus::ADDLOOP).unwrap();
        let out = run(&m, &["y >= 0"]);
        let want = logic::parse_atom_in(&m, "y + x >= 0").unwrap();
        assert!(out.new_atoms().contains(&want), "{:?}", out.new_atoms());
        assert_eq!(out.structure.states.len(), 1);
        assert_eq!(out.stats.concrete_states, 2);
    }

    #[test]
    fn property_hit_on_initial_state_gives_empty_trace() {
        let m = parse_model("vars x; prop p: x = 0;").unwrap();
        let out = run(&m, &["x = 0"]);
        let trace = out
            .counterexample
            .expect("initial state satisfies the property");
        assert!(trace.is_empty());
    }

    #[test]
    fn search_rejects_missing_property_atoms() {
        let m = parse_model(corpus::COUNTDOWN).unwrap();
        let phi = PredicateMap::global(PredicateSet::new());
        let mut solver = solver_for(&m);
        let err = alpha_search(&m, &phi, &SearchConfig::default(), &mut solver).unwrap_err();
        assert_eq!(err, SearchError::PropertyAtomsNotInPredicates);
    }

    #[test]
    fn rerun_at_fixed_point_is_stable() {
        let m = parse_model(corpus::DRIVER).unwrap();
        let mut set = PredicateSet::from_atoms(property_atoms(&m));
        for t in &m.transitions {
            for a in logic::atoms(&t.guard) {
                set.insert(a);
            }
        }
        let phi = PredicateMap::global(set);
        let mut solver = solver_for(&m);
        let first = alpha_search(&m, &phi, &SearchConfig::default(), &mut solver).unwrap();
        assert!(first.new_atoms().is_empty(), "{:?}", first.new_atoms());
        let phi2 = PredicateMap::global(first.phi_new.clone());
        let second = alpha_search(&m, &phi2, &SearchConfig::default(), &mut solver).unwrap();
        assert_eq!(first.structure, second.structure);
        assert!(second.new_atoms().is_empty());
    }

    #[test]
    fn lightweight_superset_of_prover_mode() {
        for src in [corpus::REJOIN, corpus::ADDLOOP, corpus::DRIVER, corpus::TICKET2] {
            let m = parse_model(src).unwrap();
            let mut set = PredicateSet::from_atoms(property_atoms(&m));
            for t in &m.transitions {
                for a in logic::atoms(&t.guard) {
                    set.insert(a);
                }
            }
            let phi = PredicateMap::global(set);
            let mut solver = solver_for(&m);
            let prover = alpha_search(&m, &phi, &SearchConfig::default(), &mut solver).unwrap();
            let lw_cfg = SearchConfig {
                mode: CheckMode::Lightweight,
                ..SearchConfig::default()
            };
            let mut solver2 = solver_for(&m);
            let calls_before = solver2.stats().backend_calls;
            let light = alpha_search(&m, &phi, &lw_cfg, &mut solver2).unwrap();
            assert_eq!(
                solver2.stats().backend_calls,
                calls_before,
                "lightweight used the solver"
            );
            let light_atoms = light.new_atoms();
            for a in prover.new_atoms() {
                assert!(light_atoms.contains(&a), "missing {a:?}");
            }
        }
    }

    #[test]
    fn input_witness_mode_covers_both_polarities() {
        let m =
            parse_model("control pc; vars x; trans pick: pc = 0 -> x := input, pc := 1; prop p: x < 2 && pc = 1;")
                .unwrap();
        let phi = phi_map(&m, &["x < 2"]);
        let cfg = SearchConfig {
            input: InputStrategy::Satisfiability,
            ..Default::default()
        };
        let mut solver = solver_for(&m);
        let out = alpha_search(&m, &phi, &cfg, &mut solver).unwrap();
        // Successor states must include both a model of x < 2 and one of its
        // negation (one of them is the error hit).
        let bits: HashSet<String> = out
            .structure
            .states
            .iter()
            .filter(|a| a.control_values()[0] == BigInt::from(1))
            .map(|a| a.bits_string())
            .collect();
        assert_eq!(bits.len(), 2, "{bits:?}");
    }

    #[test]
    fn depth_first_order_also_terminates() {
        // Depth-first exploration is supported but its state counts are not
        // pinned to anything; it must still close the abstract space.
        let m = parse_model(corpus::TICKET2).unwrap();
        let phi = phi_map(&m, &["a1 <= s", "a2 <= s"]);
        let cfg = SearchConfig {
            order: SearchOrder::DepthFirst,
            ..Default::default()
        };
        let mut solver = solver_for(&m);
        let out = alpha_search(&m, &phi, &cfg, &mut solver).unwrap();
        assert!(out.counterexample.is_none());
        assert!(out.structure.states.len() >= 9);
    }

    #[test]
    fn deterministic_across_runs() {
        let m = parse_model(corpus::TICKET2).unwrap();
        let out1 = run(&m, &["a1 <= s", "a2 <= s"]);
        let out2 = run(&m, &["a1 <= s", "a2 <= s"]);
        assert_eq!(out1.structure, out2.structure);
        assert_eq!(out1.discovered, out2.discovered);
        assert_eq!(out1.stats, out2.stats);
    }

    #[test]
    fn ticket2_first_round_matches_hand_computation() {
        let m = parse_model(corpus::TICKET2).unwrap();
        let out = run(&m, &["a1 <= s", "a2 <= s"]);
        assert_eq!(out.stats.concrete_states, 15);
        assert_eq!(out.stats.abstract_states, 9);
        let atoms = out.new_atoms();
        for want in ["t <= s", "a1 <= s + 1", "a2 <= s + 1"] {
            let a = logic::parse_atom_in(&m, want).unwrap();
            assert!(atoms.contains(&a), "missing {want}: {atoms:?}");
        }
        assert_eq!(atoms.len(), 3, "{atoms:?}");
    }
}
