//! Predicate abstraction: predicate sets, abstract states (concrete control
//! values plus one truth bit per predicate), the abstract-state cube formula,
//! and atomic-proposition labeling.

use crate::logic::{self, PredicateAtom};
use crate::model::{Expr, Formula, Model, RelOp};
use crate::semantics::ConcreteState;
use num_bigint::BigInt;
use std::collections::BTreeSet;
use std::fmt;

/// An insertion-ordered, duplicate-free set of canonical predicate atoms.
/// Bit `i` of every abstract state produced against this set refers to
/// `atoms()[i]`; appending predicates never renumbers existing bits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredicateSet {
    atoms: Vec<PredicateAtom>,
}

impl PredicateSet {
    pub fn new() -> Self {
        PredicateSet::default()
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = PredicateAtom>) -> Self {
        let mut set = PredicateSet::new();
        for a in atoms {
            set.insert(a);
        }
        set
    }

    /// Inserts a canonical atom; returns true if it was new.
    pub fn insert(&mut self, atom: PredicateAtom) -> bool {
        if self.atoms.contains(&atom) {
            return false;
        }
        self.atoms.push(atom);
        true
    }

    pub fn contains(&self, atom: &PredicateAtom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn atoms(&self) -> &[PredicateAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Order-insensitive equality, the termination test of the refinement
    /// loop.
    pub fn same_atoms(&self, other: &PredicateSet) -> bool {
        if self.atoms.len() != other.atoms.len() {
            return false;
        }
        let a: BTreeSet<_> = self.atoms.iter().collect();
        let b: BTreeSet<_> = other.atoms.iter().collect();
        a == b
    }

    pub fn union(&self, other: &PredicateSet) -> PredicateSet {
        let mut out = self.clone();
        for a in &other.atoms {
            out.insert(a.clone());
        }
        out
    }
}

impl fmt::Debug for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AbstractState(control={:?}, bits=", self.control)?;
        for i in 0..self.nbits {
            write!(f, "{}", u8::from(self.bit(i)))?;
        }
        write!(f, ")")
    }
}

/// Predicate abstraction of a concrete state: the control variables stay
/// concrete, the data part collapses to one bit per predicate.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbstractState {
    control: Vec<BigInt>,
    bits: Vec<u64>,
    nbits: usize,
}

impl AbstractState {
    pub fn bit(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn bit_len(&self) -> usize {
        self.nbits
    }

    pub fn control_values(&self) -> &[BigInt] {
        &self.control
    }

    pub fn bits_string(&self) -> String {
        (0..self.nbits)
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }

    /// Compact display `pc1=0,pc2=1|1011`.
    pub fn display(&self, m: &Model) -> String {
        let controls: Vec<String> = m
            .control_vars()
            .zip(&self.control)
            .map(|(v, k)| format!("{}={}", m.var_name(v), k))
            .collect();
        if self.nbits == 0 {
            controls.join(",")
        } else if controls.is_empty() {
            self.bits_string()
        } else {
            format!("{}|{}", controls.join(","), self.bits_string())
        }
    }
}

/// Maps a concrete state to its abstraction: control values copied verbatim,
/// bit `i` set exactly when predicate `i` holds.
pub fn abstract_state(s: &ConcreteState, phi: &PredicateSet, m: &Model) -> AbstractState {
    let control = s.control_values(m);
    let n = phi.len();
    let mut bits = vec![0u64; n.div_ceil(64)];
    for (i, atom) in phi.atoms().iter().enumerate() {
        if atom.holds(s).unwrap_or(false) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    AbstractState {
        control,
        bits,
        nbits: n,
    }
}

/// The cube formula of an abstract state: a conjunction of control-variable
/// equalities and one (possibly negated) predicate per bit. Every concrete
/// state abstracting to `a` satisfies this formula.
pub fn abstract_formula(a: &AbstractState, phi: &PredicateSet, m: &Model) -> Formula {
    let mut parts = Vec::with_capacity(a.control.len() + phi.len());
    for (v, value) in m.control_vars().zip(&a.control) {
        parts.push(Formula::Atom(
            RelOp::Eq,
            Expr::Var(v),
            Expr::Const(value.clone()),
        ));
    }
    for (i, atom) in phi.atoms().iter().enumerate() {
        let f = atom.to_formula();
        parts.push(if a.bit(i) { f } else { Formula::not(f) });
    }
    Formula::and(parts)
}

/// The conjuncts of the cube, as literal formulas, in the same order as
/// [`abstract_formula`] builds them.
pub fn cube_literals(a: &AbstractState, phi: &PredicateSet, m: &Model) -> Vec<Formula> {
    let mut parts = Vec::with_capacity(a.control.len() + phi.len());
    for (v, value) in m.control_vars().zip(&a.control) {
        parts.push(Formula::Atom(
            RelOp::Eq,
            Expr::Var(v),
            Expr::Const(value.clone()),
        ));
    }
    for (i, atom) in phi.atoms().iter().enumerate() {
        let f = atom.to_formula();
        parts.push(if a.bit(i) { f } else { Formula::not(f) });
    }
    parts
}

/// The set of atomic propositions true in a state.
pub type LabelSet = BTreeSet<PredicateAtom>;

/// Extracts the canonical atoms of the model's property; these are the
/// atomic propositions AP that label states.
pub fn property_atoms(m: &Model) -> Vec<PredicateAtom> {
    logic::atoms(&m.property)
}

/// `{ a in AP | s satisfies a }`.
pub fn label(s: &ConcreteState, ap: &[PredicateAtom]) -> LabelSet {
    ap.iter()
        .filter(|a| a.holds(s).unwrap_or(false))
        .cloned()
        .collect()
}

/// Atoms over data variables only (control atoms carry no information beyond
/// the stored control values, but they are kept in predicate sets for
/// faithfulness; this helper filters them where only data matters).
pub fn is_data_atom(atom: &PredicateAtom, m: &Model) -> bool {
    atom.vars().iter().any(|v| !m.is_control(*v))
}
