//! Concrete operational semantics: states, guard evaluation, simultaneous
//! updates, successor enumeration (including input transitions of open
//! systems), and counterexample replay.

use crate::logic::{eval_expr, evaluate, LogicError};
use crate::model::{Model, Transition, Update, VarId};
use num_bigint::BigInt;
use num_traits::Zero;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Total valuation of a model's variables, indexed by [`VarId`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConcreteState {
    values: Vec<BigInt>,
}

impl ConcreteState {
    pub fn new(values: Vec<BigInt>) -> Self {
        ConcreteState { values }
    }

    pub fn get(&self, v: VarId) -> Option<&BigInt> {
        self.values.get(v.index())
    }

    pub fn values(&self) -> &[BigInt] {
        &self.values
    }

    pub fn set(&mut self, v: VarId, value: BigInt) {
        self.values[v.index()] = value;
    }

    /// Values of the model's control variables, in declaration order.
    pub fn control_values(&self, m: &Model) -> Vec<BigInt> {
        m.control_vars()
            .map(|v| self.values[v.index()].clone())
            .collect()
    }

    pub fn display<'a>(&'a self, m: &'a Model) -> StateDisplay<'a> {
        StateDisplay {
            state: self,
            model: m,
        }
    }
}

pub struct StateDisplay<'a> {
    state: &'a ConcreteState,
    model: &'a Model,
}

impl fmt::Display for StateDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.state.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}: {}", self.model.vars[i].name, v)?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("guard of transition {0} is false in the source state")]
    GuardFalse(usize),
    #[error("missing input value for variable #{0}")]
    MissingInput(u32),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// One step of a counterexample: the executed transition, the values chosen
/// for its input variables, and the state it produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub transition: usize,
    pub inputs: BTreeMap<VarId, BigInt>,
    pub state: ConcreteState,
}

/// A concrete run from the initial state. Replaying the transition indices
/// and input choices reproduces exactly the recorded states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub initial: ConcreteState,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> &ConcreteState {
        self.steps.last().map(|s| &s.state).unwrap_or(&self.initial)
    }
}

/// The zero valuation extended with the model's `init` overrides.
pub fn initial_state(m: &Model) -> ConcreteState {
    let mut values = vec![BigInt::zero(); m.vars.len()];
    for (v, k) in &m.init {
        values[v.index()] = k.clone();
    }
    ConcreteState::new(values)
}

/// Indices (1-based) of the transitions enabled in `s`, in model order.
pub fn enabled(s: &ConcreteState, m: &Model) -> Vec<usize> {
    m.transitions
        .iter()
        .filter(|t| evaluate(&t.guard, s).unwrap_or(false))
        .map(|t| t.index)
        .collect()
}

/// Executes one transition: evaluates all right-hand sides in the pre-state,
/// then writes them simultaneously. Input variables take the supplied values.
pub fn apply(
    s: &ConcreteState,
    t: &Transition,
    inputs: &BTreeMap<VarId, BigInt>,
) -> Result<ConcreteState, SemanticsError> {
    if !evaluate(&t.guard, s)? {
        return Err(SemanticsError::GuardFalse(t.index));
    }
    let mut written = Vec::with_capacity(t.updates.len());
    for (v, u) in &t.updates {
        let value = match u {
            Update::Expr(e) => eval_expr(e, s)?,
            Update::Input => inputs
                .get(v)
                .cloned()
                .ok_or(SemanticsError::MissingInput(v.0))?,
        };
        written.push((*v, value));
    }
    let mut next = s.clone();
    for (v, value) in written {
        next.set(v, value);
    }
    Ok(next)
}

/// How successor states of input transitions are produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputMode {
    /// Enumerate every tuple over the inclusive integer range.
    BruteForce(i64, i64),
    /// One solver witness per satisfiable combination of the abstraction
    /// predicates that mention the input variables. Handled by the search;
    /// plain successor enumeration treats it like the embedded range.
    Witness(i64, i64),
}

impl Default for InputMode {
    fn default() -> Self {
        InputMode::BruteForce(-8, 8)
    }
}

impl InputMode {
    pub fn range(&self) -> (i64, i64) {
        match self {
            InputMode::BruteForce(lo, hi) | InputMode::Witness(lo, hi) => (*lo, *hi),
        }
    }
}

/// All successors of `s`: one per enabled closed transition, and one per
/// input tuple for enabled input transitions, ordered by transition index and
/// then by ascending input values.
pub fn successors(
    s: &ConcreteState,
    m: &Model,
    inputs: &InputMode,
) -> Vec<(usize, BTreeMap<VarId, BigInt>, ConcreteState)> {
    let mut out = Vec::new();
    for t in &m.transitions {
        if !evaluate(&t.guard, s).unwrap_or(false) {
            continue;
        }
        let ivars = t.input_vars();
        if ivars.is_empty() {
            let next = apply(s, t, &BTreeMap::new()).expect("guard checked");
            out.push((t.index, BTreeMap::new(), next));
            continue;
        }
        let (lo, hi) = inputs.range();
        if lo > hi {
            continue;
        }
        let mut tuple = vec![lo; ivars.len()];
        'tuples: loop {
            let binding: BTreeMap<VarId, BigInt> = ivars
                .iter()
                .zip(&tuple)
                .map(|(v, k)| (*v, BigInt::from(*k)))
                .collect();
            let next = apply(s, t, &binding).expect("guard checked");
            out.push((t.index, binding, next));
            // Advance lexicographically from the last position.
            let mut pos = ivars.len();
            while pos > 0 {
                pos -= 1;
                if tuple[pos] < hi {
                    tuple[pos] += 1;
                    for later in tuple.iter_mut().skip(pos + 1) {
                        *later = lo;
                    }
                    continue 'tuples;
                }
            }
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("step {step}: transition {transition} does not exist")]
    NoSuchTransition { step: usize, transition: usize },
    #[error("step {step}: guard of transition {transition} is false")]
    GuardFalse { step: usize, transition: usize },
    #[error("step {step}: missing input value")]
    MissingInput { step: usize },
    #[error("step {step}: replayed state differs from recorded state")]
    StateMismatch { step: usize },
}

/// Re-executes a trace from the initial state, verifying that every guard
/// holds and every recorded state is reproduced. Returns the final state.
pub fn replay(m: &Model, trace: &Trace) -> Result<ConcreteState, ReplayError> {
    let mut current = initial_state(m);
    if current != trace.initial {
        return Err(ReplayError::StateMismatch { step: 0 });
    }
    for (i, step) in trace.steps.iter().enumerate() {
        let step_no = i + 1;
        let t = m
            .transition(step.transition)
            .ok_or(ReplayError::NoSuchTransition {
                step: step_no,
                transition: step.transition,
            })?;
        current = apply(&current, t, &step.inputs).map_err(|e| match e {
            SemanticsError::GuardFalse(_) => ReplayError::GuardFalse {
                step: step_no,
                transition: t.index,
            },
            _ => ReplayError::MissingInput { step: step_no },
        })?;
        if current != step.state {
            return Err(ReplayError::StateMismatch { step: step_no });
        }
    }
    Ok(current)
}
