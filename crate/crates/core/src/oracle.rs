//! Brute-force ground-truth engines used to cross-check the main algorithm:
//! bounded concrete exploration, reachable labelings, bisimulation quotients
//! by partition refinement, exhaustively enumerated may/must abstractions,
//! and concrete post-images.
//!
//! Everything here trades efficiency for obviousness; these engines are the
//! reference the property suites compare against.

use crate::abstraction::{
    abstract_state, label, property_atoms, AbstractState, LabelSet, PredicateSet,
};
use crate::model::{Model, Transition};
use crate::search::ExploredStructure;
use crate::semantics::{apply, initial_state, successors, ConcreteState, InputMode};
use num_bigint::BigInt;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("the finite transition system was truncated by an exploration bound")]
pub struct TruncatedInput;

/// Bounds of the reference exploration.
#[derive(Debug, Clone)]
pub struct ExploreBounds {
    pub max_states: usize,
    pub max_depth: usize,
    pub input: InputMode,
}

impl Default for ExploreBounds {
    fn default() -> Self {
        ExploreBounds {
            max_states: 100_000,
            max_depth: 100_000,
            input: InputMode::default(),
        }
    }
}

impl ExploreBounds {
    pub fn states(max_states: usize) -> Self {
        ExploreBounds {
            max_states,
            ..Default::default()
        }
    }
}

/// An explicitly explored transition system with full-state matching.
#[derive(Debug, Clone)]
pub struct FiniteLts {
    pub states: Vec<ConcreteState>,
    pub transitions: Vec<(usize, usize, usize)>,
    pub initial: usize,
    pub labels: Vec<LabelSet>,
    /// Set when an exploration bound cut the state space.
    pub truncated: bool,
}

/// Plain breadth-first exploration of the concrete semantics.
pub fn concrete_explore(m: &Model, bounds: &ExploreBounds) -> FiniteLts {
    let ap = property_atoms(m);
    let mut states = vec![initial_state(m)];
    let mut labels = vec![label(&states[0], &ap)];
    let mut index: HashMap<ConcreteState, usize> = HashMap::new();
    index.insert(states[0].clone(), 0);
    let mut depth = vec![0usize];
    let mut transitions = Vec::new();
    let mut truncated = false;
    let mut wait = VecDeque::from([0usize]);
    while let Some(id) = wait.pop_front() {
        if depth[id] >= bounds.max_depth {
            truncated = true;
            continue;
        }
        let s = states[id].clone();
        for (t, _, next) in successors(&s, m, &bounds.input) {
            let target = match index.get(&next) {
                Some(&existing) => existing,
                None => {
                    if states.len() >= bounds.max_states {
                        truncated = true;
                        continue;
                    }
                    let new_id = states.len();
                    index.insert(next.clone(), new_id);
                    labels.push(label(&next, &ap));
                    states.push(next);
                    depth.push(depth[id] + 1);
                    wait.push_back(new_id);
                    new_id
                }
            };
            transitions.push((id, t, target));
        }
    }
    transitions.sort();
    transitions.dedup();
    FiniteLts {
        states,
        transitions,
        initial: 0,
        labels,
        truncated,
    }
}

/// `{ L(s) | s reachable }`.
pub fn reachable_labelings(l: &FiniteLts) -> HashSet<LabelSet> {
    l.labels.iter().cloned().collect()
}

/// Block assignment of a partition over `0..n`.
pub type Partition = Vec<usize>;

/// Signature-based partition refinement: the coarsest partition that respects
/// the labeling and is stable under every transition index.
fn refine_partition(n: usize, labels: &[LabelSet], edges: &[(usize, usize, usize)]) -> Partition {
    let mut block: Partition = vec![0; n];
    // Initial split by label.
    let mut by_label: BTreeMap<&LabelSet, usize> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        let next = by_label.len();
        let b = *by_label.entry(l).or_insert(next);
        block[i] = b;
    }
    let mut out_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (src, act, dst) in edges {
        out_edges[*src].push((*act, *dst));
    }
    loop {
        let mut sig_to_block: BTreeMap<(usize, BTreeSet<(usize, usize)>), usize> = BTreeMap::new();
        let mut next_block: Partition = vec![0; n];
        for s in 0..n {
            let sig: BTreeSet<(usize, usize)> =
                out_edges[s].iter().map(|(a, d)| (*a, block[*d])).collect();
            let key = (block[s], sig);
            let fresh = sig_to_block.len();
            next_block[s] = *sig_to_block.entry(key).or_insert(fresh);
        }
        let stable = (0..n)
            .all(|s| (0..n).all(|t| (next_block[s] == next_block[t]) == (block[s] == block[t])));
        block = next_block;
        if stable {
            return block;
        }
    }
}

/// Coarsest bisimulation partition of a complete finite system.
pub fn bisimulation_quotient(l: &FiniteLts) -> Result<Partition, TruncatedInput> {
    if l.truncated {
        return Err(TruncatedInput);
    }
    Ok(refine_partition(l.states.len(), &l.labels, &l.transitions))
}

/// The naive quadratic bisimilarity fixpoint, used to validate the partition
/// refinement on small systems.
#[allow(clippy::needless_range_loop)]
pub fn naive_bisimilarity(l: &FiniteLts) -> Vec<Vec<bool>> {
    let n = l.states.len();
    let mut rel = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            rel[i][j] = l.labels[i] == l.labels[j];
        }
    }
    let mut out_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (src, act, dst) in &l.transitions {
        out_edges[*src].push((*act, *dst));
    }
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if !rel[i][j] {
                    continue;
                }
                let simulates = |a: usize, b: usize, rel: &Vec<Vec<bool>>| {
                    out_edges[a].iter().all(|(act, ad)| {
                        out_edges[b]
                            .iter()
                            .any(|(bct, bd)| act == bct && rel[*ad][*bd])
                    })
                };
                if !simulates(i, j, &rel) || !simulates(j, i, &rel) {
                    rel[i][j] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return rel;
        }
    }
}

/// Are the explored structure and the complete concrete system bisimilar?
/// Labels come from the property atoms, actions are transition indices.
pub fn check_bisimilar(a: &ExploredStructure, l: &FiniteLts) -> Result<bool, TruncatedInput> {
    if l.truncated {
        return Err(TruncatedInput);
    }
    let n = l.states.len();
    let m = a.states.len();
    let mut labels: Vec<LabelSet> = l.labels.clone();
    labels.extend(a.labels.iter().cloned());
    let mut edges: Vec<(usize, usize, usize)> = l.transitions.clone();
    for (src, act, dst) in &a.transitions {
        edges.push((n + src, *act, n + dst));
    }
    let block = refine_partition(n + m, &labels, &edges);
    Ok(block[l.initial] == block[n + a.initial])
}

/// Exhaustively enumerated abstract transition relations over the cubes
/// realizable in a bounded variable domain.
#[derive(Debug, Clone)]
pub struct AbstractionRelations {
    pub cubes: Vec<AbstractState>,
    /// One representative concrete state per cube.
    pub reps: Vec<ConcreteState>,
    pub may: BTreeSet<(usize, usize, usize)>,
    pub must_plus: BTreeSet<(usize, usize, usize)>,
    pub must_minus: BTreeSet<(usize, usize, usize)>,
    /// Cube of the model's initial state, when it lies in the domain.
    pub initial: Option<usize>,
}

impl AbstractionRelations {
    pub fn cube_of(&self, a: &AbstractState) -> Option<usize> {
        self.cubes.iter().position(|c| c == a)
    }

    /// Cubes reachable from the initial cube along the given edge set.
    pub fn reachable(&self, edges: &BTreeSet<(usize, usize, usize)>) -> BTreeSet<usize> {
        let Some(init) = self.initial else {
            return BTreeSet::new();
        };
        let mut seen = BTreeSet::from([init]);
        let mut wait = vec![init];
        while let Some(c) = wait.pop() {
            for (src, _, dst) in edges.iter().filter(|(src, _, _)| *src == c) {
                debug_assert_eq!(*src, c);
                if seen.insert(*dst) {
                    wait.push(*dst);
                }
            }
        }
        seen
    }

    /// Labelings of the cubes reachable along the given edges.
    pub fn reachable_labelings(
        &self,
        edges: &BTreeSet<(usize, usize, usize)>,
        m: &Model,
    ) -> HashSet<LabelSet> {
        let ap = property_atoms(m);
        self.reachable(edges)
            .into_iter()
            .map(|c| label(&self.reps[c], &ap))
            .collect()
    }

    /// Reachability over the union of must-plus and must-minus edges, the
    /// analysis style that mixes both under-approximating relations.
    pub fn must_pm_reachable_labelings(&self, m: &Model) -> HashSet<LabelSet> {
        let union: BTreeSet<_> = self.must_plus.union(&self.must_minus).cloned().collect();
        self.reachable_labelings(&union, m)
    }
}

fn domain_states(m: &Model, lo: i64, hi: i64) -> Vec<ConcreteState> {
    let nvars = m.vars.len();
    let mut out = Vec::new();
    let width = (hi - lo + 1) as usize;
    let total = width.checked_pow(nvars as u32).expect("domain too large");
    for mut idx in 0..total {
        let mut values = Vec::with_capacity(nvars);
        for _ in 0..nvars {
            values.push(BigInt::from(lo + (idx % width) as i64));
            idx /= width;
        }
        out.push(ConcreteState::new(values));
    }
    out
}

/// Enumerates the may, must-plus, and must-minus abstract transitions of a
/// model over all valuations in `[lo, hi]` per variable. The existential
/// side of must-minus searches sources in a slack-extended domain so that
/// interior targets are not starved by the domain boundary.
pub fn enumerate_abstraction(
    m: &Model,
    phi: &PredicateSet,
    lo: i64,
    hi: i64,
    slack: i64,
) -> AbstractionRelations {
    let core = domain_states(m, lo, hi);
    let ext = domain_states(m, lo - slack, hi + slack);
    let mut cubes: Vec<AbstractState> = Vec::new();
    let mut cube_ix: HashMap<AbstractState, usize> = HashMap::new();
    let mut reps: Vec<ConcreteState> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, s) in core.iter().enumerate() {
        let a = abstract_state(s, phi, m);
        let ix = *cube_ix.entry(a.clone()).or_insert_with(|| {
            cubes.push(a.clone());
            reps.push(s.clone());
            members.push(Vec::new());
            cubes.len() - 1
        });
        members[ix].push(i);
    }
    let step = |s: &ConcreteState, t: &Transition| -> Option<ConcreteState> {
        if t.has_input() {
            return None;
        }
        apply(s, t, &BTreeMap::new()).ok()
    };
    let mut may = BTreeSet::new();
    let mut must_plus = BTreeSet::new();
    // may and must-plus quantify over core states.
    for (c1, member_ids) in members.iter().enumerate() {
        for t in &m.transitions {
            let mut all_same: Option<Option<usize>> = None;
            for &sid in member_ids {
                let s = &core[sid];
                let target = step(s, t).map(|next| {
                    let a = abstract_state(&next, phi, m);
                    match cube_ix.get(&a) {
                        Some(&ix) => ix,
                        None => usize::MAX, // successor cube outside the domain
                    }
                });
                if let Some(c2) = target {
                    if c2 != usize::MAX {
                        may.insert((c1, t.index, c2));
                    }
                }
                match &all_same {
                    None => all_same = Some(target),
                    Some(prev) if *prev == target => {}
                    Some(_) => all_same = Some(None),
                }
            }
            if let Some(Some(c2)) = all_same {
                if c2 != usize::MAX {
                    must_plus.insert((c1, t.index, c2));
                }
            }
        }
    }
    // must-minus: every core target state of the cube has a predecessor in
    // the source cube (sources drawn from the extended domain).
    let mut preds: HashMap<(ConcreteState, usize), BTreeSet<usize>> = HashMap::new();
    for s in &ext {
        for t in &m.transitions {
            if let Some(next) = step(s, t) {
                let a1 = abstract_state(s, phi, m);
                if let Some(&c1) = cube_ix.get(&a1) {
                    preds.entry((next, t.index)).or_default().insert(c1);
                }
            }
        }
    }
    let mut must_minus = BTreeSet::new();
    for (c2, member_ids) in members.iter().enumerate() {
        for t in &m.transitions {
            let mut common: Option<BTreeSet<usize>> = None;
            for &sid in member_ids {
                let s2 = &core[sid];
                let sources = preds
                    .get(&(s2.clone(), t.index))
                    .cloned()
                    .unwrap_or_default();
                common = Some(match common {
                    None => sources,
                    Some(acc) => acc.intersection(&sources).cloned().collect(),
                });
                if common.as_ref().is_some_and(|c| c.is_empty()) {
                    break;
                }
            }
            for c1 in common.unwrap_or_default() {
                must_minus.insert((c1, t.index, c2));
            }
        }
    }
    let init = initial_state(m);
    let initial = cube_ix.get(&abstract_state(&init, phi, m)).copied();
    AbstractionRelations {
        cubes,
        reps,
        may,
        must_plus,
        must_minus,
        initial,
    }
}

/// `{ apply(s, t) | s in states, s satisfies the guard }`, deduplicated.
pub fn post_image(states: &[ConcreteState], t: &Transition) -> Vec<ConcreteState> {
    let mut out: Vec<ConcreteState> = Vec::new();
    for s in states {
        if let Ok(next) = apply(s, t, &BTreeMap::new()) {
            if !out.contains(&next) {
                out.push(next);
            }
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::logic;
    use crate::model::parse_model;

    #[test]
    fn countdown_explores_one_step() {
        let m = parse_model(corpus::COUNTDOWN).unwrap();
        let lts = concrete_explore(&m, &ExploreBounds::default());
        assert!(!lts.truncated);
        assert_eq!(lts.states.len(), 2);
        let rl = reachable_labelings(&lts);
        assert_eq!(rl.len(), 2);
        let err_atom = logic::parse_atom_in(&m, "x < 0").unwrap();
        assert!(rl.contains(&LabelSet::new()));
        assert!(rl.contains(&LabelSet::from([err_atom])));
    }

    #[test]
    fn driver_is_finite() {
        let m = parse_model(corpus::DRIVER).unwrap();
        let lts = concrete_explore(&m, &ExploreBounds::default());
        assert!(!lts.truncated);
        assert!(lts.states.len() >= 9);
    }

    #[test]
    fn ticket3_is_infinite_hence_truncated() {
        let m = parse_model(corpus::TICKET3).unwrap();
        let lts = concrete_explore(&m, &ExploreBounds::states(10_000));
        assert!(lts.truncated);
    }

    #[test]
    fn empty_transition_model_has_one_labeling() {
        let m = parse_model("vars x; prop p: x < 0;").unwrap();
        let lts = concrete_explore(&m, &ExploreBounds::default());
        assert_eq!(lts.states.len(), 1);
        assert_eq!(reachable_labelings(&lts).len(), 1);
    }

    #[test]
    fn addloop_quotient_is_a_single_reachable_block() {
        let m = parse_model(corpus::ADDLOOP).unwrap();
        let lts = concrete_explore(&m, &ExploreBounds::default());
        assert!(!lts.truncated);
        assert_eq!(lts.states.len(), 1);
        let q = bisimulation_quotient(&lts).unwrap();
        assert_eq!(q, vec![0]);
    }

    #[test]
    fn quotient_rejects_truncated_input() {
        let m = parse_model(corpus::TICKET3).unwrap();
        let lts = concrete_explore(&m, &ExploreBounds::states(100));
        assert_eq!(bisimulation_quotient(&lts), Err(TruncatedInput));
    }

    #[test]
    fn single_block_when_unlabeled_and_no_transitions() {
        let m = parse_model("vars x; trans t: x >= 0 -> x := input; prop p: x < -90;").unwrap();
        let lts = concrete_explore(
            &m,
            &ExploreBounds {
                max_states: 50,
                max_depth: 1,
                input: InputMode::BruteForce(0, 3),
            },
        );
        // depth bound 1: initial plus four successors, no further expansion;
        // labels are all empty but successor sets differ, so only the four
        // leaves merge once transitions are cut off at the bound.
        assert!(lts.truncated);
    }

    #[test]
    fn partition_refinement_agrees_with_naive_fixpoint() {
        // Pseudorandom small systems, compared block-by-block.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..20 {
            let n = 2 + (next() % 40) as usize;
            let nacts = 1 + (next() % 3) as usize;
            let nlabels = 1 + (next() % 2) as usize;
            let a0 = logic::parse_atom_in(&parse_model("vars x; prop p: x < 0;").unwrap(), "x < 0")
                .unwrap();
            let labels: Vec<LabelSet> = (0..n)
                .map(|_| {
                    if nlabels > 1 && next() % 2 == 0 {
                        LabelSet::from([a0.clone()])
                    } else {
                        LabelSet::new()
                    }
                })
                .collect();
            let mut edges = Vec::new();
            for s in 0..n {
                for a in 1..=nacts {
                    if next() % 3 != 0 {
                        edges.push((s, a, (next() % n as u64) as usize));
                    }
                }
            }
            edges.sort();
            edges.dedup();
            let lts = FiniteLts {
                states: (0..n)
                    .map(|i| ConcreteState::new(vec![BigInt::from(i)]))
                    .collect(),
                transitions: edges,
                initial: 0,
                labels,
                truncated: false,
            };
            let blocks = bisimulation_quotient(&lts).unwrap();
            let rel = naive_bisimilarity(&lts);
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(
                        blocks[i] == blocks[j],
                        rel[i][j],
                        "partition and naive fixpoint disagree on ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn identity_structure_is_bisimilar() {
        let m = parse_model(corpus::REJOIN).unwrap();
        let lts = concrete_explore(&m, &ExploreBounds::default());
        assert!(!lts.truncated);
        let ap = property_atoms(&m);
        let phi = PredicateSet::from_atoms(ap);
        let structure = ExploredStructure {
            states: lts
                .states
                .iter()
                .map(|s| abstract_state(s, &phi, &m))
                .collect(),
            transitions: lts.transitions.clone(),
            initial: 0,
            labels: lts.labels.clone(),
        };
        // All states are distinguished by their concrete identity here, so
        // the copy is trivially bisimilar.
        assert!(check_bisimilar(&structure, &lts).unwrap());
    }

    #[test]
    fn rejoin_quotient_has_six_blocks() {
        let m = parse_model(corpus::REJOIN).unwrap();
        let lts = concrete_explore(&m, &ExploreBounds::default());
        let blocks = bisimulation_quotient(&lts).unwrap();
        let distinct: BTreeSet<_> = blocks.iter().collect();
        assert_eq!(lts.states.len(), 6);
        assert_eq!(distinct.len(), 6);
    }

    #[test]
    fn must_transitions_are_contained_in_may() {
        for (src, pred) in [
            (corpus::REJOIN, "x < 2"),
            (corpus::COUNTDOWN, "x >= 0"),
            (corpus::THRESHOLD, "x >= 3"),
        ] {
            let m = parse_model(src).unwrap();
            let mut phi = PredicateSet::from_atoms(property_atoms(&m));
            phi.insert(logic::parse_atom_in(&m, pred).unwrap());
            let rel = enumerate_abstraction(&m, &phi, -4, 4, 2);
            for e in &rel.must_plus {
                assert!(rel.may.contains(e), "must+ edge {e:?} not in may");
            }
            for e in &rel.must_minus {
                assert!(rel.may.contains(e), "must- edge {e:?} not in may");
            }
        }
    }

    #[test]
    fn countdown_boundary_crossing_is_neither_must_plus_nor_must_minus() {
        let m = parse_model(corpus::COUNTDOWN).unwrap();
        let mut phi = PredicateSet::from_atoms(property_atoms(&m));
        phi.insert(logic::parse_atom_in(&m, "x >= 0").unwrap());
        let rel = enumerate_abstraction(&m, &phi, -4, 4, 2);
        let c0 = rel.initial.unwrap();
        let below = rel
            .cubes
            .iter()
            .position(|c| c != &rel.cubes[c0])
            .expect("the negative cube is realizable");
        // The step from the non-negative cube into the negative one is a may
        // transition but neither flavor of must transition, so must-based
        // reachability never leaves the non-negative cube.
        assert!(rel.may.contains(&(c0, 1, below)));
        assert!(!rel.must_plus.contains(&(c0, 1, below)));
        assert!(!rel.must_minus.contains(&(c0, 1, below)));
        let rl = rel.must_pm_reachable_labelings(&m);
        assert_eq!(rl.len(), 1, "{rl:?}");
        assert!(rl.contains(&LabelSet::new()));
    }

    #[test]
    fn rejoin_may_reaches_the_end_but_must_does_not() {
        let m = parse_model(corpus::REJOIN).unwrap();
        let mut phi = PredicateSet::from_atoms(property_atoms(&m));
        phi.insert(logic::parse_atom_in(&m, "x < 2").unwrap());
        let rel = enumerate_abstraction(&m, &phi, -4, 4, 2);
        let pc_of = |c: usize| rel.reps[c].get(m.var("pc").unwrap()).unwrap().clone();
        let may_reach = rel.reachable(&rel.may);
        let must_reach = rel.reachable(&rel.must_plus);
        assert!(may_reach.iter().any(|&c| pc_of(c) == BigInt::from(4)));
        assert!(!must_reach.iter().any(|&c| pc_of(c) == BigInt::from(4)));
    }

    #[test]
    fn post_image_of_decrement() {
        let m = parse_model(corpus::COUNTDOWN).unwrap();
        let s0 = initial_state(&m);
        let img = post_image(&[s0], &m.transitions[0]);
        assert_eq!(img, vec![ConcreteState::new(vec![BigInt::from(-1)])]);
        assert!(post_image(&[], &m.transitions[0]).is_empty());
    }

    #[test]
    fn post_image_respects_wp_duality() {
        // post(phi) implies phi' exactly when phi implies wp(phi', t), over
        // all cubes in a small box.
        let m = parse_model(corpus::COUNTDOWN).unwrap();
        let t = &m.transitions[0];
        let x = m.var("x").unwrap();
        let box_states: Vec<ConcreteState> = (-4..=4)
            .map(|v| ConcreteState::new(vec![BigInt::from(v)]))
            .collect();
        let phis = ["x >= 0", "x >= 2", "x < 0", "x < 3"];
        for pre in phis {
            for post in phis {
                let pre_f = logic::parse_formula_in(&m, pre).unwrap();
                let post_f = logic::parse_formula_in(&m, post).unwrap();
                let wp_f = logic::wp(&post_f, t).unwrap();
                let pre_states: Vec<ConcreteState> = box_states
                    .iter()
                    .filter(|s| logic::evaluate(&pre_f, s).unwrap())
                    .cloned()
                    .collect();
                let image = post_image(&pre_states, t);
                let img_ok = image.iter().all(|s| logic::evaluate(&post_f, s).unwrap());
                let wp_ok = pre_states
                    .iter()
                    .all(|s| logic::evaluate(&wp_f, s).unwrap());
                // x is unbounded below only through the guard, which the box
                // respects for these predicates.
                assert_eq!(img_ok, wp_ok, "duality fails for {pre} / {post}");
                let _ = x;
            }
        }
    }
}
