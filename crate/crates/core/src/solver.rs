//! Validity and satisfiability checking for quantifier-free integer formulas.
//!
//! All refinement queries have the shape `antecedent => consequent` where the
//! antecedent is a conjunction of literals. The solver pipeline is: fold the
//! consequent and consult the tautology cache, consult the implication cache
//! (keyed by the normalized implication), and only then call the backend.
//! Whatever the backend cannot prove is reported as not proven; the refinement
//! algorithm stays correct under that answer, it just refines more.
//!
//! Two backends are provided. [`BuiltinBackend`] decides linear integer
//! arithmetic with Fourier-Motzkin elimination (exact on unit coefficients,
//! which covers every query the corpus generates; anything else degrades to
//! bounded enumeration or `NotProven`). [`SmtProcessBackend`] drives an
//! external SMT-LIB process such as z3 over a pipe.

use crate::logic::{self, AtomRel, Poly, PredicateAtom};
use crate::model::{Formula, VarId};
use crate::semantics::ConcreteState;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;
use thiserror::Error;

/// Answer of a validity query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    NotProven(NotProvenReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotProvenReason {
    /// The backend found the implication falsifiable.
    Counterexample,
    /// The backend could not decide.
    Unknown,
    /// The backend exceeded its time budget.
    Timeout,
}

impl Verdict {
    pub fn is_valid(self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

/// Answer of a satisfiability query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatOutcome {
    /// Satisfiable, with a witness assignment for the formula's variables.
    Sat(BTreeMap<VarId, BigInt>),
    Unsat,
    Unknown,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("solver backend unavailable: {0}")]
    Unavailable(String),
    #[error("solver query timed out")]
    Timeout,
}

/// A validity/satisfiability engine. `vars` maps [`VarId`] indices to names.
pub trait Backend: Send {
    fn name(&self) -> &str;
    fn check_valid(&mut self, vars: &[String], formula: &Formula) -> Result<Verdict, BackendError>;
    fn check_sat(&mut self, vars: &[String], formula: &Formula)
        -> Result<SatOutcome, BackendError>;
}

/// Monotone counters over the lifetime of one solver instance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct SolverStats {
    /// Validity queries received.
    pub queries: u64,
    /// Queries resolved from the implication or tautology cache.
    pub cache_hits: u64,
    /// Queries that reached the backend.
    pub backend_calls: u64,
    /// Satisfiability queries (not cached).
    pub sat_queries: u64,
    /// Backend failures that were conservatively reported as not proven.
    pub backend_failures: u64,
}

/// Caching validity checker over a pluggable backend.
pub struct Solver {
    backend: Box<dyn Backend>,
    vars: Vec<String>,
    cache: HashMap<Formula, Verdict>,
    taut_cache: HashMap<Formula, bool>,
    cache_enabled: bool,
    stats: SolverStats,
}

impl Solver {
    pub fn new(backend: Box<dyn Backend>, vars: Vec<String>) -> Self {
        Solver {
            backend,
            vars,
            cache: HashMap::new(),
            taut_cache: HashMap::new(),
            cache_enabled: true,
            stats: SolverStats::default(),
        }
    }

    pub fn builtin(vars: Vec<String>) -> Self {
        Solver::new(Box::new(BuiltinBackend::default()), vars)
    }

    /// Disables the query cache (verdicts must not change; used in tests).
    pub fn set_cache_enabled(&mut self, enabled: bool) {
        self.cache_enabled = enabled;
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Is `antecedent => consequent` valid over the integers?
    pub fn check_valid(&mut self, antecedent: &Formula, consequent: &Formula) -> Verdict {
        self.stats.queries += 1;
        let nb = logic::normalize(consequent);
        if self.cache_enabled {
            if let Some(&taut) = self.taut_cache.get(&nb) {
                if taut {
                    self.stats.cache_hits += 1;
                    return Verdict::Valid;
                }
            } else {
                let taut = nb == Formula::True;
                self.taut_cache.insert(nb.clone(), taut);
                if taut {
                    return Verdict::Valid;
                }
            }
        } else if nb == Formula::True {
            return Verdict::Valid;
        }
        let na = logic::normalize(antecedent);
        if na == Formula::False {
            return Verdict::Valid;
        }
        let query = logic::normalize(&Formula::implies(na, nb));
        if query == Formula::True {
            return Verdict::Valid;
        }
        if self.cache_enabled {
            if let Some(&v) = self.cache.get(&query) {
                self.stats.cache_hits += 1;
                return v;
            }
        }
        self.stats.backend_calls += 1;
        let verdict = match self.backend.check_valid(&self.vars, &query) {
            Ok(v) => v,
            Err(BackendError::Timeout) => {
                self.stats.backend_failures += 1;
                Verdict::NotProven(NotProvenReason::Timeout)
            }
            Err(BackendError::Unavailable(_)) => {
                self.stats.backend_failures += 1;
                Verdict::NotProven(NotProvenReason::Unknown)
            }
        };
        if self.cache_enabled {
            self.cache.insert(query, verdict);
        }
        verdict
    }

    /// Is `formula` satisfiable? Witnesses are verified by ground evaluation
    /// before being returned.
    pub fn check_sat(&mut self, formula: &Formula) -> SatOutcome {
        self.stats.sat_queries += 1;
        let nf = logic::normalize(formula);
        match nf {
            Formula::True => return SatOutcome::Sat(BTreeMap::new()),
            Formula::False => return SatOutcome::Unsat,
            _ => {}
        }
        let out = match self.backend.check_sat(&self.vars, &nf) {
            Ok(o) => o,
            Err(_) => {
                self.stats.backend_failures += 1;
                SatOutcome::Unknown
            }
        };
        if let SatOutcome::Sat(witness) = &out {
            let mut values = vec![BigInt::zero(); self.vars.len()];
            for (v, k) in witness {
                values[v.index()] = k.clone();
            }
            let state = ConcreteState::new(values);
            if logic::evaluate(&nf, &state) != Ok(true) {
                return SatOutcome::Unknown;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Built-in linear integer arithmetic backend.
// ---------------------------------------------------------------------------

/// Decides validity by refuting `not(formula)` with Fourier-Motzkin
/// elimination over the integers. Sound in both directions on systems where
/// every elimination step has a unit coefficient; otherwise `Unsat` answers
/// stay sound and everything else is reported as unknown. Nonlinear atoms
/// fall back to bounded exhaustive evaluation when the branch constrains all
/// their variables to a small box.
#[derive(Debug, Clone)]
pub struct BuiltinBackend {
    /// Branch cap for the disjunctive normal form expansion.
    pub max_branches: usize,
    /// Row cap for elimination.
    pub max_rows: usize,
    /// Half-width of the fallback enumeration box per variable.
    pub enum_radius: i64,
    /// Volume cap for fallback enumeration.
    pub max_points: u64,
}

impl Default for BuiltinBackend {
    fn default() -> Self {
        BuiltinBackend {
            max_branches: 4096,
            max_rows: 4000,
            enum_radius: 32,
            max_points: 200_000,
        }
    }
}

/// One linear constraint `sum(coeffs) + k (<=|=) 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Row {
    coeffs: BTreeMap<VarId, BigInt>,
    k: BigInt,
    eq: bool,
}

impl Row {
    /// Converts a linear literal to a row. Negative equality literals are
    /// handled by the disequality splitting in the caller.
    fn from_atom(atom: &PredicateAtom, positive: bool) -> Row {
        let poly = &atom.poly;
        let coeffs: BTreeMap<VarId, BigInt> =
            poly.terms.iter().map(|(m, c)| (m[0], c.clone())).collect();
        match (atom.rel, positive) {
            (AtomRel::Le, true) => Row {
                coeffs,
                k: poly.constant.clone(),
                eq: false,
            },
            (AtomRel::Le, false) => {
                // not(p <= 0)  ==  -p + 1 <= 0
                let neg: BTreeMap<VarId, BigInt> = coeffs.iter().map(|(v, c)| (*v, -c)).collect();
                Row {
                    coeffs: neg,
                    k: -&poly.constant + 1,
                    eq: false,
                }
            }
            (AtomRel::Eq, true) => Row {
                coeffs,
                k: poly.constant.clone(),
                eq: true,
            },
            (AtomRel::Eq, false) => unreachable!("disequalities are split lazily"),
        }
    }

    /// Divide by the gcd of the variable coefficients, tightening the
    /// constant for inequalities. Returns `Err(truth)` for constant rows.
    fn reduce(mut self) -> Result<Row, bool> {
        if self.coeffs.is_empty() {
            return Err(if self.eq {
                self.k.is_zero()
            } else {
                !self.k.is_positive()
            });
        }
        let mut g = BigInt::zero();
        for c in self.coeffs.values() {
            g = gcd(&g, c);
        }
        if g > BigInt::one() {
            if self.eq {
                if (&self.k % &g) != BigInt::zero() {
                    return Err(false);
                }
                for c in self.coeffs.values_mut() {
                    *c /= &g;
                }
                self.k /= &g;
            } else {
                for c in self.coeffs.values_mut() {
                    *c /= &g;
                }
                self.k = div_ceil(&self.k, &g);
            }
        }
        Ok(self)
    }
}

fn gcd(a: &BigInt, b: &BigInt) -> BigInt {
    let (mut a, mut b) = (a.abs(), b.abs());
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

fn div_floor(a: &BigInt, b: &BigInt) -> BigInt {
    let q = a / b;
    if (a % b).is_zero() || (a.is_negative() == b.is_negative()) {
        q
    } else {
        q - 1
    }
}

fn div_ceil(a: &BigInt, b: &BigInt) -> BigInt {
    -div_floor(&-a.clone(), b)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Feasibility {
    Unsat,
    /// Feasible; `exact` records whether every elimination step was integer
    /// exact, and `trail` allows witness reconstruction.
    Sat {
        exact: bool,
        trail: Vec<TrailEntry>,
    },
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TrailEntry {
    /// Variable fixed by an equality: `var = -(rest + k) / coeff`.
    Fixed { var: VarId, row: Row },
    /// Variable eliminated by Fourier-Motzkin; rows are its bounds.
    Bounded { var: VarId, rows: Vec<Row> },
}

fn eliminate(mut rows: Vec<Row>, max_rows: usize) -> Feasibility {
    let mut trail = Vec::new();
    let mut exact = true;
    loop {
        // Constant folding and gcd reduction.
        let mut next = Vec::with_capacity(rows.len());
        for row in rows {
            match row.reduce() {
                Ok(r) => next.push(r),
                Err(true) => {}
                Err(false) => return Feasibility::Unsat,
            }
        }
        rows = next;
        if rows.len() > max_rows {
            return Feasibility::Overflow;
        }
        // Substitute out a variable with a unit coefficient in an equality.
        if let Some(pos) = rows
            .iter()
            .position(|r| r.eq && r.coeffs.values().any(|c| c.abs() == BigInt::one()))
        {
            let eq_row = rows.remove(pos);
            let (var, coeff) = eq_row
                .coeffs
                .iter()
                .find(|(_, c)| c.abs() == BigInt::one())
                .map(|(v, c)| (*v, c.clone()))
                .unwrap();
            // var = -(rest + k) / coeff with coeff = +-1.
            for row in &mut rows {
                let Some(c) = row.coeffs.remove(&var) else {
                    continue;
                };
                // row + (c / coeff) * (-(eq_row without var)) substituted:
                // new = row - (c/coeff) * eq_row (var terms cancel).
                let scale = &c / &coeff;
                for (v, ec) in &eq_row.coeffs {
                    if *v == var {
                        continue;
                    }
                    let slot = row.coeffs.entry(*v).or_insert_with(BigInt::zero);
                    *slot -= &scale * ec;
                    if slot.is_zero() {
                        row.coeffs.remove(v);
                    }
                }
                row.k -= &scale * &eq_row.k;
            }
            trail.push(TrailEntry::Fixed { var, row: eq_row });
            continue;
        }
        // Remaining equalities without unit coefficients become inequality
        // pairs (semantically exact).
        if let Some(pos) = rows.iter().position(|r| r.eq) {
            let row = rows.remove(pos);
            let mut le = row.clone();
            le.eq = false;
            let ge = Row {
                coeffs: row.coeffs.iter().map(|(v, c)| (*v, -c)).collect(),
                k: -&row.k,
                eq: false,
            };
            rows.push(le);
            rows.push(ge);
            continue;
        }
        // Pick the variable with the cheapest lower*upper product.
        let mut counts: BTreeMap<VarId, (usize, usize)> = BTreeMap::new();
        for row in &rows {
            for (v, c) in &row.coeffs {
                let e = counts.entry(*v).or_insert((0, 0));
                if c.is_positive() {
                    e.0 += 1; // upper bound on v
                } else {
                    e.1 += 1; // lower bound on v
                }
            }
        }
        let Some((&var, _)) = counts.iter().min_by_key(|(_, (u, l))| u * l + u + l) else {
            return Feasibility::Sat { exact, trail };
        };
        let mut uppers = Vec::new();
        let mut lowers = Vec::new();
        let mut rest = Vec::new();
        for row in rows {
            match row.coeffs.get(&var) {
                Some(c) if c.is_positive() => uppers.push(row),
                Some(_) => lowers.push(row),
                None => rest.push(row),
            }
        }
        let mut bounds = uppers.clone();
        bounds.extend(lowers.iter().cloned());
        for up in &uppers {
            for lo in &lowers {
                let cu = up.coeffs.get(&var).unwrap().clone();
                let cl = lo.coeffs.get(&var).unwrap().abs();
                if cu != BigInt::one() && cl != BigInt::one() {
                    exact = false;
                }
                // cl * up + cu * lo eliminates var.
                let mut coeffs: BTreeMap<VarId, BigInt> = BTreeMap::new();
                for (v, c) in &up.coeffs {
                    if *v != var {
                        coeffs.insert(*v, c * &cl);
                    }
                }
                for (v, c) in &lo.coeffs {
                    if *v == var {
                        continue;
                    }
                    let slot = coeffs.entry(*v).or_insert_with(BigInt::zero);
                    *slot += c * &cu;
                    if slot.is_zero() {
                        coeffs.remove(v);
                    }
                }
                let k = &up.k * &cl + &lo.k * &cu;
                rest.push(Row {
                    coeffs,
                    k,
                    eq: false,
                });
            }
        }
        if rest.len() > max_rows {
            return Feasibility::Overflow;
        }
        trail.push(TrailEntry::Bounded { var, rows: bounds });
        rows = rest;
    }
}

/// Rebuilds an integer witness from an elimination trail. Variables that
/// dropped out unconstrained default to zero.
fn witness_from_trail(trail: &[TrailEntry]) -> Option<BTreeMap<VarId, BigInt>> {
    let mut assign: BTreeMap<VarId, BigInt> = BTreeMap::new();
    let eval_rest = |row: &Row, var: VarId, assign: &mut BTreeMap<VarId, BigInt>| -> BigInt {
        let mut acc = row.k.clone();
        for (v, c) in &row.coeffs {
            if *v == var {
                continue;
            }
            acc += c * assign.entry(*v).or_insert_with(BigInt::zero).clone();
        }
        acc
    };
    for entry in trail.iter().rev() {
        match entry {
            TrailEntry::Fixed { var, row } => {
                let rest = eval_rest(row, *var, &mut assign);
                let coeff = row.coeffs.get(var).unwrap();
                // coeff * var + rest = 0
                if (&rest % coeff).is_zero() {
                    assign.insert(*var, -rest / coeff);
                } else {
                    return None;
                }
            }
            TrailEntry::Bounded { var, rows } => {
                let mut lo: Option<BigInt> = None;
                let mut hi: Option<BigInt> = None;
                for row in rows {
                    let rest = eval_rest(row, *var, &mut assign);
                    let c = row.coeffs.get(var).unwrap();
                    if c.is_positive() {
                        // c*var <= -rest  ->  var <= floor(-rest / c)
                        let b = div_floor(&-rest, c);
                        hi = Some(match hi {
                            None => b,
                            Some(h) => h.min(b),
                        });
                    } else {
                        // c*var <= -rest, c < 0  ->  var >= ceil(rest / -c)
                        let b = div_ceil(&rest, &-c.clone());
                        lo = Some(match lo {
                            None => b,
                            Some(l) => l.max(b),
                        });
                    }
                }
                let value = match (lo, hi) {
                    (Some(l), Some(h)) => {
                        if l > h {
                            return None;
                        }
                        if l <= BigInt::zero() && BigInt::zero() <= h {
                            BigInt::zero()
                        } else if l > BigInt::zero() {
                            l
                        } else {
                            h
                        }
                    }
                    (Some(l), None) => l.max(BigInt::zero()),
                    (None, Some(h)) => h.min(BigInt::zero()),
                    (None, None) => BigInt::zero(),
                };
                assign.insert(*var, value);
            }
        }
    }
    Some(assign)
}

/// A DNF branch: linear literal rows, pending disequalities (split lazily,
/// with unsatisfiability pruning), and opaque nonlinear literals.
#[derive(Debug, Clone, Default)]
struct Branch {
    rows: Vec<Row>,
    diseqs: Vec<Poly>,
    nonlinear: Vec<(bool, PredicateAtom)>,
}

impl BuiltinBackend {
    /// Negation normal form to disjunctive normal form, over canonical
    /// literals. Returns `None` on branch explosion.
    fn dnf(&self, f: &Formula, negate: bool, acc: &mut Vec<Branch>) -> Option<()> {
        match (f, negate) {
            (Formula::True, false) | (Formula::False, true) => Some(()),
            (Formula::True, true) | (Formula::False, false) => {
                acc.clear();
                Some(())
            }
            (Formula::Atom(op, a, b), _) => {
                let lit = match logic::canon_atom(*op, a, b) {
                    Ok(l) => l,
                    Err(truth) => {
                        if truth == negate {
                            acc.clear();
                        }
                        return Some(());
                    }
                };
                let positive = lit.positive != negate;
                self.add_literal(acc, &lit.atom, positive)
            }
            (Formula::Not(g), _) => self.dnf(g, !negate, acc),
            (Formula::And(fs), false) | (Formula::Or(fs), true) => {
                for g in fs {
                    self.dnf(g, negate, acc)?;
                    if acc.is_empty() {
                        return Some(());
                    }
                }
                Some(())
            }
            (Formula::Or(fs), false) | (Formula::And(fs), true) => {
                let base = std::mem::take(acc);
                for g in fs {
                    let mut branch = base.clone();
                    self.dnf(g, negate, &mut branch)?;
                    acc.extend(branch);
                    if acc.len() > self.max_branches {
                        return None;
                    }
                }
                Some(())
            }
            (Formula::Implies(a, b), false) => {
                let or = Formula::Or(vec![Formula::not((**a).clone()), (**b).clone()]);
                self.dnf(&or, false, acc)
            }
            (Formula::Implies(a, b), true) => {
                let and = Formula::And(vec![(**a).clone(), Formula::not((**b).clone())]);
                self.dnf(&and, false, acc)
            }
        }
    }

    fn add_literal(
        &self,
        acc: &mut [Branch],
        atom: &PredicateAtom,
        positive: bool,
    ) -> Option<()> {
        if !atom.poly.is_linear() {
            for b in acc.iter_mut() {
                b.nonlinear.push((positive, atom.clone()));
            }
            return Some(());
        }
        match (atom.rel, positive) {
            (AtomRel::Eq, false) => {
                for b in acc.iter_mut() {
                    b.diseqs.push(atom.poly.clone());
                }
                Some(())
            }
            _ => {
                let row = Row::from_atom(atom, positive);
                for b in acc.iter_mut() {
                    b.rows.push(row.clone());
                }
                Some(())
            }
        }
    }

    /// Satisfiability of one branch; `Some(Some(w))` = sat with witness,
    /// `Some(None)` = unsat, `None` = unknown.
    fn branch_sat(&self, branch: &Branch) -> Option<Option<BTreeMap<VarId, BigInt>>> {
        self.sat_rec(&branch.rows, &branch.diseqs, &branch.nonlinear)
    }

    /// Case-splits pending disequalities one at a time, pruning branches whose
    /// accumulated linear system is already infeasible.
    fn sat_rec(
        &self,
        rows: &[Row],
        diseqs: &[Poly],
        nonlinear: &[(bool, PredicateAtom)],
    ) -> Option<Option<BTreeMap<VarId, BigInt>>> {
        let feas = eliminate(rows.to_vec(), self.max_rows);
        match feas {
            Feasibility::Unsat => return Some(None),
            Feasibility::Overflow => return None,
            Feasibility::Sat { .. } => {}
        }
        if let Some((d, rest)) = diseqs.split_first() {
            // p != 0  ->  p <= -1 or p >= 1
            let lt = Row {
                coeffs: d.terms.iter().map(|(m, c)| (m[0], c.clone())).collect(),
                k: &d.constant + 1,
                eq: false,
            };
            let neg = d.negate();
            let gt = Row {
                coeffs: neg.terms.iter().map(|(m, c)| (m[0], c.clone())).collect(),
                k: &neg.constant + 1,
                eq: false,
            };
            let mut unknown = false;
            for extra in [lt, gt] {
                let mut sub = rows.to_vec();
                sub.push(extra);
                match self.sat_rec(&sub, rest, nonlinear) {
                    Some(Some(w)) => return Some(Some(w)),
                    Some(None) => {}
                    None => unknown = true,
                }
            }
            return if unknown { None } else { Some(None) };
        }
        if nonlinear.is_empty() {
            let Feasibility::Sat { exact, trail } = feas else {
                unreachable!()
            };
            if let Some(w) = witness_from_trail(&trail) {
                if rows_hold(rows, &w) {
                    return Some(Some(w));
                }
            }
            let _ = exact;
            self.enumerate_branch(rows, nonlinear)
        } else {
            self.enumerate_branch(rows, nonlinear)
        }
    }

    /// Bounded exhaustive search over the constrained variables.
    fn enumerate_branch(
        &self,
        rows: &[Row],
        nonlinear: &[(bool, PredicateAtom)],
    ) -> Option<Option<BTreeMap<VarId, BigInt>>> {
        let mut vars: Vec<VarId> = Vec::new();
        for row in rows {
            vars.extend(row.coeffs.keys().copied());
        }
        for (_, atom) in nonlinear {
            vars.extend(atom.vars());
        }
        vars.sort();
        vars.dedup();
        if vars.is_empty() {
            return Some(Some(BTreeMap::new()));
        }
        let radius = BigInt::from(self.enum_radius);
        let width = 2 * self.enum_radius as u64 + 1;
        let mut volume: u64 = 1;
        for _ in &vars {
            volume = volume.saturating_mul(width);
            if volume > self.max_points {
                return None;
            }
        }
        let mut assign: BTreeMap<VarId, BigInt> =
            vars.iter().map(|v| (*v, -radius.clone())).collect();
        loop {
            if rows_hold(rows, &assign) && nonlinear_hold(nonlinear, &assign) {
                return Some(Some(assign));
            }
            let mut pos = vars.len();
            loop {
                if pos == 0 {
                    return Some(None);
                }
                pos -= 1;
                let v = vars[pos];
                let cur = assign.get_mut(&v).unwrap();
                if *cur < radius {
                    *cur += 1;
                    for later in &vars[pos + 1..] {
                        assign.insert(*later, -radius.clone());
                    }
                    break;
                }
            }
        }
    }
}

fn rows_hold(rows: &[Row], assign: &BTreeMap<VarId, BigInt>) -> bool {
    let zero = BigInt::zero();
    rows.iter().all(|row| {
        let mut acc = row.k.clone();
        for (v, c) in &row.coeffs {
            acc += c * assign.get(v).unwrap_or(&zero);
        }
        if row.eq {
            acc.is_zero()
        } else {
            !acc.is_positive()
        }
    })
}

fn nonlinear_hold(lits: &[(bool, PredicateAtom)], assign: &BTreeMap<VarId, BigInt>) -> bool {
    lits.iter().all(|(positive, atom)| {
        let mut acc = atom.poly.constant.clone();
        for (m, c) in &atom.poly.terms {
            let mut prod = c.clone();
            for v in m {
                let Some(val) = assign.get(v) else {
                    return false;
                };
                prod *= val;
            }
            acc += prod;
        }
        let truth = match atom.rel {
            AtomRel::Le => !acc.is_positive(),
            AtomRel::Eq => acc.is_zero(),
        };
        truth == *positive
    })
}

impl Backend for BuiltinBackend {
    fn name(&self) -> &str {
        "builtin"
    }

    fn check_valid(
        &mut self,
        _vars: &[String],
        formula: &Formula,
    ) -> Result<Verdict, BackendError> {
        // Valid iff the negation is unsatisfiable.
        let mut branches = vec![Branch::default()];
        if self.dnf(formula, true, &mut branches).is_none() {
            return Ok(Verdict::NotProven(NotProvenReason::Unknown));
        }
        let mut unknown = false;
        for b in &branches {
            match self.branch_sat(b) {
                Some(Some(_)) => return Ok(Verdict::NotProven(NotProvenReason::Counterexample)),
                Some(None) => {}
                None => unknown = true,
            }
        }
        if unknown {
            Ok(Verdict::NotProven(NotProvenReason::Unknown))
        } else {
            Ok(Verdict::Valid)
        }
    }

    fn check_sat(
        &mut self,
        _vars: &[String],
        formula: &Formula,
    ) -> Result<SatOutcome, BackendError> {
        let mut branches = vec![Branch::default()];
        if self.dnf(formula, false, &mut branches).is_none() {
            return Ok(SatOutcome::Unknown);
        }
        let mut unknown = false;
        for b in &branches {
            match self.branch_sat(b) {
                Some(Some(w)) => return Ok(SatOutcome::Sat(w)),
                Some(None) => {}
                None => unknown = true,
            }
        }
        Ok(if unknown {
            SatOutcome::Unknown
        } else {
            SatOutcome::Unsat
        })
    }
}

// ---------------------------------------------------------------------------
// External SMT-LIB process backend.
// ---------------------------------------------------------------------------

/// Drives an external SMT-LIB 2 solver process over stdin/stdout. Each query
/// runs on a fresh assertion frame:
///
/// ```text
/// (push 1) (declare-const v Int) ... (assert (not (=> A B))) (check-sat) (pop 1)
/// ```
///
/// Timeouts surface as [`BackendError::Timeout`] and process failures as
/// [`BackendError::Unavailable`]; the [`Solver`] converts both to not-proven
/// answers (distinguished in its counters).
pub struct SmtProcessBackend {
    child: Child,
    reader: mpsc::Receiver<std::io::Result<String>>,
    timeout: Duration,
    name: String,
    dead: bool,
}

impl SmtProcessBackend {
    /// Spawns `program args...`. For z3 use `z3 -in`, for cvc5 `cvc5
    /// --incremental --lang=smt2`.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self, BackendError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| BackendError::Unavailable(format!("spawn {program}: {e}")))?;
        let stdout = child.stdout.take().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut backend = SmtProcessBackend {
            child,
            reader: rx,
            timeout,
            name: format!("smt:{program}"),
            dead: false,
        };
        backend.send("(set-option :print-success false)")?;
        backend.send("(set-logic QF_LIA)")?;
        Ok(backend)
    }

    fn send(&mut self, line: &str) -> Result<(), BackendError> {
        let stdin = self
            .child
            .stdin
            .as_mut()
            .ok_or_else(|| BackendError::Unavailable("stdin closed".into()))?;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| BackendError::Unavailable(format!("write: {e}")))
    }

    fn recv_line(&mut self) -> Result<String, BackendError> {
        match self.reader.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line.trim().to_string()),
            Ok(Err(e)) => {
                self.dead = true;
                Err(BackendError::Unavailable(format!("read: {e}")))
            }
            Err(_) => {
                self.dead = true;
                let _ = self.child.kill();
                Err(BackendError::Timeout)
            }
        }
    }

    fn declares(vars: &[String], formula: &Formula, out: &mut String) {
        let mut used = Vec::new();
        formula.vars(&mut used);
        used.sort();
        used.dedup();
        for v in used {
            out.push_str(&format!("(declare-const {} Int)", vars[v.index()]));
        }
    }

    fn smt_expr(vars: &[String], e: &crate::model::Expr, out: &mut String) {
        use crate::model::Expr;
        match e {
            Expr::Const(v) => {
                if v.is_negative() {
                    out.push_str(&format!("(- {})", -v));
                } else {
                    out.push_str(&v.to_string());
                }
            }
            Expr::Var(v) => out.push_str(&vars[v.index()]),
            Expr::Neg(a) => {
                out.push_str("(- ");
                Self::smt_expr(vars, a, out);
                out.push(')');
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                let op = match e {
                    Expr::Add(..) => "+",
                    Expr::Sub(..) => "-",
                    _ => "*",
                };
                out.push_str(&format!("({op} "));
                Self::smt_expr(vars, a, out);
                out.push(' ');
                Self::smt_expr(vars, b, out);
                out.push(')');
            }
        }
    }

    fn smt_formula(vars: &[String], f: &Formula, out: &mut String) {
        use crate::model::RelOp;
        match f {
            Formula::True => out.push_str("true"),
            Formula::False => out.push_str("false"),
            Formula::Atom(op, a, b) => {
                if *op == RelOp::Ne {
                    out.push_str("(not (= ");
                    Self::smt_expr(vars, a, out);
                    out.push(' ');
                    Self::smt_expr(vars, b, out);
                    out.push_str("))");
                    return;
                }
                let sym = match op {
                    RelOp::Eq => "=",
                    RelOp::Lt => "<",
                    RelOp::Le => "<=",
                    RelOp::Gt => ">",
                    RelOp::Ge => ">=",
                    RelOp::Ne => unreachable!(),
                };
                out.push_str(&format!("({sym} "));
                Self::smt_expr(vars, a, out);
                out.push(' ');
                Self::smt_expr(vars, b, out);
                out.push(')');
            }
            Formula::Not(g) => {
                out.push_str("(not ");
                Self::smt_formula(vars, g, out);
                out.push(')');
            }
            Formula::And(fs) | Formula::Or(fs) => {
                if fs.is_empty() {
                    out.push_str(if matches!(f, Formula::And(_)) {
                        "true"
                    } else {
                        "false"
                    });
                    return;
                }
                out.push_str(if matches!(f, Formula::And(_)) {
                    "(and"
                } else {
                    "(or"
                });
                for g in fs {
                    out.push(' ');
                    Self::smt_formula(vars, g, out);
                }
                out.push(')');
            }
            Formula::Implies(a, b) => {
                out.push_str("(=> ");
                Self::smt_formula(vars, a, out);
                out.push(' ');
                Self::smt_formula(vars, b, out);
                out.push(')');
            }
        }
    }

    fn run_query(
        &mut self,
        vars: &[String],
        assert_formula: &Formula,
        want_model: bool,
    ) -> Result<(String, Option<BTreeMap<VarId, BigInt>>), BackendError> {
        if self.dead {
            return Err(BackendError::Unavailable("backend process is dead".into()));
        }
        let mut script = String::from("(push 1)");
        Self::declares(vars, assert_formula, &mut script);
        script.push_str("(assert ");
        Self::smt_formula(vars, assert_formula, &mut script);
        script.push_str(")(check-sat)");
        self.send(&script)?;
        let answer = self.recv_line()?;
        let model = if want_model && answer == "sat" {
            self.send("(get-model)")?;
            let mut text = String::new();
            let mut depth: i64 = 0;
            loop {
                let line = self.recv_line()?;
                depth += line.matches('(').count() as i64;
                depth -= line.matches(')').count() as i64;
                text.push_str(&line);
                text.push(' ');
                if depth <= 0 {
                    break;
                }
            }
            Some(parse_model_text(vars, &text))
        } else {
            None
        };
        self.send("(pop 1)")?;
        Ok((answer, model))
    }
}

/// Extracts `(define-fun name () Int value)` bindings from a model printout.
fn parse_model_text(vars: &[String], text: &str) -> BTreeMap<VarId, BigInt> {
    let mut out = BTreeMap::new();
    let spaced = text.replace('(', " ( ").replace(')', " ) ");
    let toks: Vec<&str> = spaced.split_whitespace().collect();
    let mut i = 0;
    while i < toks.len() {
        if toks[i] == "define-fun" && i + 1 < toks.len() {
            let name = toks[i + 1];
            if let Some(idx) = vars.iter().position(|v| v == name) {
                // skip "( ) Int" then value, possibly "( - k )"
                let mut j = i + 2;
                while j < toks.len() && toks[j] != "Int" {
                    j += 1;
                }
                j += 1;
                if j < toks.len() {
                    let value = if toks[j] == "(" && j + 2 < toks.len() && toks[j + 1] == "-" {
                        toks[j + 2].parse::<BigInt>().map(|v| -v).ok()
                    } else {
                        toks[j].parse::<BigInt>().ok()
                    };
                    if let Some(v) = value {
                        out.insert(VarId(idx as u32), v);
                    }
                }
            }
        }
        i += 1;
    }
    out
}

impl Backend for SmtProcessBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn check_valid(&mut self, vars: &[String], formula: &Formula) -> Result<Verdict, BackendError> {
        let negated = Formula::not(formula.clone());
        let (answer, _) = self.run_query(vars, &negated, false)?;
        Ok(match answer.as_str() {
            "unsat" => Verdict::Valid,
            "sat" => Verdict::NotProven(NotProvenReason::Counterexample),
            _ => Verdict::NotProven(NotProvenReason::Unknown),
        })
    }

    fn check_sat(
        &mut self,
        vars: &[String],
        formula: &Formula,
    ) -> Result<SatOutcome, BackendError> {
        let (answer, model) = self.run_query(vars, formula, true)?;
        Ok(match answer.as_str() {
            "unsat" => SatOutcome::Unsat,
            "sat" => SatOutcome::Sat(model.unwrap_or_default()),
            _ => SatOutcome::Unknown,
        })
    }
}

impl Drop for SmtProcessBackend {
    fn drop(&mut self) {
        let _ = self.send("(exit)");
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

// ---------------------------------------------------------------------------
// Fault injection.
// ---------------------------------------------------------------------------

/// Wraps a backend and randomly downgrades `Valid` answers to `NotProven`.
/// Downgrades must never flip a refinement verdict, only slow it down; the
/// robustness suites rely on that.
pub struct FaultInjection<B> {
    inner: B,
    state: u64,
    /// Downgrade roughly one in `one_in` valid answers.
    pub one_in: u64,
    pub downgrades: u64,
}

impl<B> FaultInjection<B> {
    pub fn new(inner: B, seed: u64, one_in: u64) -> Self {
        FaultInjection {
            inner,
            state: seed.max(1),
            one_in: one_in.max(1),
            downgrades: 0,
        }
    }

    fn next(&mut self) -> u64 {
        // xorshift64
        let mut x = self.state;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.state = x;
        x
    }
}

impl<B: Backend> Backend for FaultInjection<B> {
    fn name(&self) -> &str {
        "fault-injection"
    }

    fn check_valid(&mut self, vars: &[String], formula: &Formula) -> Result<Verdict, BackendError> {
        let verdict = self.inner.check_valid(vars, formula)?;
        if verdict.is_valid() && self.next().is_multiple_of(self.one_in) {
            self.downgrades += 1;
            return Ok(Verdict::NotProven(NotProvenReason::Unknown));
        }
        Ok(verdict)
    }

    fn check_sat(
        &mut self,
        vars: &[String],
        formula: &Formula,
    ) -> Result<SatOutcome, BackendError> {
        self.inner.check_sat(vars, formula)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn formula(vars: &str, f: &str) -> (Vec<String>, Formula) {
        let m = parse_model(&format!("vars {vars}; prop q: {f};")).unwrap();
        let names = m.vars.iter().map(|v| v.name.clone()).collect();
        (names, m.property.clone())
    }

    fn solver_for(vars: &str) -> Solver {
        let m = parse_model(&format!("vars {vars}; prop q: true;")).unwrap();
        Solver::builtin(m.vars.iter().map(|v| v.name.clone()).collect())
    }

    #[test]
    fn strengthening_is_valid() {
        let mut s = solver_for("x");
        let (_, a) = formula("x", "x < 1");
        let (_, b) = formula("x", "x < 2");
        assert_eq!(s.check_valid(&a, &b), Verdict::Valid);
        assert!(matches!(s.check_valid(&b, &a), Verdict::NotProven(_)));
    }

    #[test]
    fn cube_does_not_imply_unrelated_bound() {
        // pc=0 and y>=0 does not imply y+x>=0.
        let mut s = solver_for("pc x y");
        let (_, a) = formula("pc x y", "pc = 0 && y >= 0");
        let (_, b) = formula("pc x y", "y + x >= 0");
        assert!(matches!(s.check_valid(&a, &b), Verdict::NotProven(_)));
    }

    #[test]
    fn integer_tightening_between_strict_bounds() {
        // x > 0 && x < 2 forces x = 1 over the integers.
        let mut s = solver_for("x");
        let (_, a) = formula("x", "x > 0 && x < 2");
        let (_, b) = formula("x", "x = 1");
        assert_eq!(s.check_valid(&a, &b), Verdict::Valid);
    }

    #[test]
    fn repeat_query_hits_cache() {
        let mut s = solver_for("x");
        let (_, a) = formula("x", "x < 1");
        let (_, b) = formula("x", "x < 2");
        let v1 = s.check_valid(&a, &b);
        let calls = s.stats().backend_calls;
        let v2 = s.check_valid(&a, &b);
        assert_eq!(v1, v2);
        assert_eq!(s.stats().backend_calls, calls);
        assert_eq!(s.stats().cache_hits, 1);
        assert_eq!(s.stats().queries, 2);
    }

    #[test]
    fn tautology_consequent_skips_backend() {
        let mut s = solver_for("x y");
        let (_, a) = formula("x y", "x < 1");
        let (_, b) = formula("x y", "y + 1 > y");
        assert_eq!(s.check_valid(&a, &b), Verdict::Valid);
        assert_eq!(s.stats().backend_calls, 0);
    }

    #[test]
    fn fresh_solver_has_zero_stats() {
        let s = solver_for("x");
        assert_eq!(s.stats(), SolverStats::default());
    }

    #[test]
    fn sat_with_witness() {
        let mut s = solver_for("x");
        let (_, f) = formula("x", "x < 2 && x >= 1");
        match s.check_sat(&f) {
            SatOutcome::Sat(w) => {
                assert_eq!(w.values().next().unwrap(), &BigInt::from(1));
            }
            other => panic!("expected sat, got {other:?}"),
        }
    }

    #[test]
    fn unsat_interval() {
        let mut s = solver_for("x");
        let (_, f) = formula("x", "x < 1 && x > 1");
        assert_eq!(s.check_sat(&f), SatOutcome::Unsat);
    }

    #[test]
    fn sat_of_true() {
        let mut s = solver_for("x");
        assert!(matches!(s.check_sat(&Formula::True), SatOutcome::Sat(_)));
    }

    #[test]
    fn equality_chains() {
        let mut s = solver_for("a b c");
        let (_, f) = formula("a b c", "a = b + 1 && b = c + 1 && a = c");
        assert_eq!(s.check_sat(&f), SatOutcome::Unsat);
        let (_, g) = formula("a b c", "a = b + 1 && b = c + 1 && a = c + 2");
        assert!(matches!(s.check_sat(&g), SatOutcome::Sat(_)));
    }

    #[test]
    fn disequality_split() {
        let mut s = solver_for("x");
        let (_, a) = formula("x", "x != 0 && x >= 0");
        let (_, b) = formula("x", "x >= 1");
        assert_eq!(s.check_valid(&a, &b), Verdict::Valid);
    }

    #[test]
    fn disjunctive_antecedent() {
        let mut s = solver_for("x y");
        let (_, a) = formula("x y", "(x = 0 || x = 1) && y = x");
        let (_, b) = formula("x y", "y <= 1");
        assert_eq!(s.check_valid(&a, &b), Verdict::Valid);
    }

    #[test]
    fn nonlinear_falls_back_to_enumeration() {
        let mut s = solver_for("x y");
        let (_, f) = formula("x y", "x * y = 6 && x > y && x >= 0 && y >= 0");
        match s.check_sat(&f) {
            SatOutcome::Sat(w) => {
                let vals: Vec<i64> = w.values().map(|v| v.try_into().unwrap()).collect();
                assert_eq!(vals[0] * vals[1], 6);
            }
            other => panic!("expected sat, got {other:?}"),
        }
    }

    #[test]
    fn soundness_of_valid_against_brute_force() {
        // Whenever the solver says Valid, exhaustive evaluation over |v| <= 6
        // finds no counterexample.
        let m = parse_model("vars x y; prop q: true;").unwrap();
        let names: Vec<String> = m.vars.iter().map(|v| v.name.clone()).collect();
        let mut s = Solver::builtin(names);
        let samples = [
            ("x < 1", "x < 2"),
            ("x < 1 && y < x", "y < 1"),
            ("x = y + 1", "x > y"),
            ("x <= y && y <= x", "x = y"),
            ("x < y", "x != y"),
            ("x + y <= 4 && x >= 2", "y <= 2"),
            ("x < 2", "x < 1"),
            ("x != y", "x < y"),
            ("x * x >= 0", "x * x + 1 > 0"),
        ];
        for (ant, cons) in samples {
            let (_, a) = formula("x y", ant);
            let (_, b) = formula("x y", cons);
            let verdict = s.check_valid(&a, &b);
            if verdict.is_valid() {
                for x in -6..=6 {
                    for y in -6..=6 {
                        let st = ConcreteState::new(vec![BigInt::from(x), BigInt::from(y)]);
                        let holds =
                            !logic::evaluate(&a, &st).unwrap() || logic::evaluate(&b, &st).unwrap();
                        assert!(
                            holds,
                            "claimed valid but fails at x={x} y={y}: {ant} => {cons}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn cache_transparency() {
        let samples = [
            ("x < 1", "x < 2"),
            ("x < 2", "x < 1"),
            ("x < 1", "x < 2"),
            ("x = 0", "x < 2"),
            ("x < 1", "x < 2"),
        ];
        let mut cached = solver_for("x");
        let mut uncached = solver_for("x");
        uncached.set_cache_enabled(false);
        for (ant, cons) in samples {
            let (_, a) = formula("x", ant);
            let (_, b) = formula("x", cons);
            assert_eq!(cached.check_valid(&a, &b), uncached.check_valid(&a, &b));
        }
        assert!(cached.stats().backend_calls < uncached.stats().backend_calls);
    }

    #[test]
    fn fault_injection_only_downgrades() {
        let (names, a) = formula("x", "x < 1");
        let (_, b) = formula("x", "x < 2");
        let mut flaky = Solver::new(
            Box::new(FaultInjection::new(BuiltinBackend::default(), 7, 2)),
            names,
        );
        flaky.set_cache_enabled(false);
        let mut seen_downgrade = false;
        for _ in 0..32 {
            match flaky.check_valid(&a, &b) {
                Verdict::Valid => {}
                Verdict::NotProven(NotProvenReason::Unknown) => seen_downgrade = true,
                other => panic!("unexpected verdict {other:?}"),
            }
        }
        assert!(seen_downgrade);
    }
}
