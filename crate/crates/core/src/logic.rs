//! Symbolic formula manipulation: substitution, weakest preconditions,
//! canonicalization into linear atoms, conjunct extraction, and ground
//! evaluation.
//!
//! Canonical atoms are linear constraints `sum(c_i * v_i) + k <= 0` or
//! `sum(c_i * v_i) + k = 0` with the leading coefficient positive; strict and
//! reversed comparisons are rewritten using integer tightening (`a < b` is
//! `a - b + 1 <= 0`), and negative polarity is pushed into the enclosing
//! literal. Two predicates are the same predicate exactly when their canonical
//! atoms are equal, which is what keeps the predicate set duplicate-free
//! during refinement.

use crate::model::{Expr, Formula, Model, RelOp, Transition, Update, VarId};
use crate::semantics::ConcreteState;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("weakest precondition undefined for transitions with input assignments")]
    InputInWp,
    #[error("formula is not a conjunction of literals")]
    NotConjunctive,
    #[error("unbound variable #{0}")]
    UnboundVariable(u32),
}

/// A product of variables (sorted, with multiplicity). Empty means the
/// constant monomial.
pub type Monomial = Vec<VarId>;

/// A polynomial `sum(coeff * monomial) + constant` in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Poly {
    pub terms: BTreeMap<Monomial, BigInt>,
    pub constant: BigInt,
}

impl Poly {
    fn constant(v: BigInt) -> Poly {
        Poly {
            terms: BTreeMap::new(),
            constant: v,
        }
    }

    fn var(v: VarId) -> Poly {
        let mut terms = BTreeMap::new();
        terms.insert(vec![v], BigInt::one());
        Poly {
            terms,
            constant: BigInt::zero(),
        }
    }

    fn add_term(&mut self, mono: Monomial, coeff: BigInt) {
        if coeff.is_zero() {
            return;
        }
        if mono.is_empty() {
            self.constant += coeff;
            return;
        }
        let slot = self.terms.entry(mono).or_insert_with(BigInt::zero);
        *slot += coeff;
        if slot.is_zero() {
            let key = self
                .terms
                .iter()
                .find(|(_, c)| c.is_zero())
                .map(|(k, _)| k.clone())
                .unwrap();
            self.terms.remove(&key);
        }
    }

    fn add(mut self, other: &Poly) -> Poly {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c.clone());
        }
        self.constant += &other.constant;
        self
    }

    pub fn negate(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
            constant: -&self.constant,
        }
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::constant(&self.constant * &other.constant);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * &other.constant);
        }
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c * &self.constant);
        }
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let mut m = m1.clone();
                m.extend(m2.iter().copied());
                m.sort();
                out.add_term(m, c1 * c2);
            }
        }
        out
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_linear(&self) -> bool {
        self.terms.keys().all(|m| m.len() == 1)
    }

    /// Sign of the coefficient of the smallest monomial, used to pick the
    /// canonical polarity.
    fn leading_is_negative(&self) -> bool {
        self.terms
            .values()
            .next()
            .map(|c| c.is_negative())
            .unwrap_or(false)
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.keys().flat_map(|m| m.iter().copied())
    }

    pub fn eval(&self, s: &ConcreteState) -> Result<BigInt, LogicError> {
        let mut acc = self.constant.clone();
        for (m, c) in &self.terms {
            let mut prod = c.clone();
            for v in m {
                prod *= s.get(*v).ok_or(LogicError::UnboundVariable(v.0))?;
            }
            acc += prod;
        }
        Ok(acc)
    }
}

/// Turns an expression into a polynomial over its variables.
pub fn polynomial(e: &Expr) -> Poly {
    match e {
        Expr::Const(v) => Poly::constant(v.clone()),
        Expr::Var(v) => Poly::var(*v),
        Expr::Neg(inner) => polynomial(inner).negate(),
        Expr::Add(a, b) => polynomial(a).add(&polynomial(b)),
        Expr::Sub(a, b) => polynomial(a).add(&polynomial(b).negate()),
        Expr::Mul(a, b) => polynomial(a).mul(&polynomial(b)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AtomRel {
    /// `poly <= 0`
    Le,
    /// `poly = 0`
    Eq,
}

/// A canonical, polarity-free predicate atom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredicateAtom {
    pub rel: AtomRel,
    pub poly: Poly,
}

impl PredicateAtom {
    pub fn holds(&self, s: &ConcreteState) -> Result<bool, LogicError> {
        let v = self.poly.eval(s)?;
        Ok(match self.rel {
            AtomRel::Le => !v.is_positive(),
            AtomRel::Eq => v.is_zero(),
        })
    }

    pub fn vars(&self) -> Vec<VarId> {
        let mut out: Vec<VarId> = self.poly.vars().collect();
        out.sort();
        out.dedup();
        out
    }

    /// Renders the atom with positive terms on the left, e.g. `a1 <= s + 1`.
    pub fn display<'a>(&'a self, m: &'a Model) -> AtomDisplay<'a> {
        AtomDisplay {
            atom: self,
            model: m,
        }
    }

    pub fn to_formula(&self) -> Formula {
        let op = match self.rel {
            AtomRel::Le => RelOp::Le,
            AtomRel::Eq => RelOp::Eq,
        };
        Formula::Atom(op, poly_expr(&self.poly), Expr::int(0))
    }
}

fn poly_expr(p: &Poly) -> Expr {
    let mut acc: Option<Expr> = None;
    for (m, c) in &p.terms {
        let mut term: Option<Expr> = None;
        for v in m {
            term = Some(match term {
                None => Expr::Var(*v),
                Some(t) => Expr::Mul(Box::new(t), Box::new(Expr::Var(*v))),
            });
        }
        let mut term = term.unwrap();
        if c != &BigInt::one() {
            term = Expr::Mul(Box::new(Expr::Const(c.clone())), Box::new(term));
        }
        acc = Some(match acc {
            None => term,
            Some(a) => Expr::Add(Box::new(a), Box::new(term)),
        });
    }
    match acc {
        None => Expr::Const(p.constant.clone()),
        Some(a) if p.constant.is_zero() => a,
        Some(a) => Expr::Add(Box::new(a), Box::new(Expr::Const(p.constant.clone()))),
    }
}

pub struct AtomDisplay<'a> {
    atom: &'a PredicateAtom,
    model: &'a Model,
}

impl fmt::Display for AtomDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.atom.poly;
        let side = |f: &mut fmt::Formatter<'_>, terms: &[(&Monomial, BigInt)], konst: &BigInt| {
            let mut first = true;
            for (m, c) in terms {
                if !first {
                    write!(f, " + ")?;
                }
                first = false;
                if !c.is_one() {
                    write!(f, "{c}*")?;
                }
                let names: Vec<_> = m
                    .iter()
                    .map(|v| self.model.var_name(*v).to_string())
                    .collect();
                write!(f, "{}", names.join("*"))?;
            }
            if !konst.is_zero() || first {
                if !first {
                    write!(f, " + ")?;
                }
                write!(f, "{konst}")?;
            }
            Ok(())
        };
        let pos: Vec<_> = p
            .terms
            .iter()
            .filter(|(_, c)| c.is_positive())
            .map(|(m, c)| (m, c.clone()))
            .collect();
        let neg: Vec<_> = p
            .terms
            .iter()
            .filter(|(_, c)| c.is_negative())
            .map(|(m, c)| (m, -c))
            .collect();
        let (lk, rk) = if p.constant.is_positive() {
            (p.constant.clone(), BigInt::zero())
        } else {
            (BigInt::zero(), -p.constant.clone())
        };
        side(f, &pos, &lk)?;
        match self.atom.rel {
            AtomRel::Le => write!(f, " <= ")?,
            AtomRel::Eq => write!(f, " = ")?,
        }
        side(f, &neg, &rk)
    }
}

/// A canonical literal: an atom with a polarity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub positive: bool,
    pub atom: PredicateAtom,
}

impl Literal {
    pub fn to_formula(&self) -> Formula {
        let f = self.atom.to_formula();
        if self.positive {
            f
        } else {
            Formula::not(f)
        }
    }
}

/// Canonicalizes `lhs op rhs`. Returns a literal, or a boolean when the atom
/// is variable-free.
pub fn canon_atom(op: RelOp, lhs: &Expr, rhs: &Expr) -> Result<Literal, bool> {
    let diff = polynomial(lhs).add(&polynomial(rhs).negate());
    let one = BigInt::one();
    // Reduce to `p <= 0` / `p = 0` with polarity.
    let (rel, mut poly, mut positive) = match op {
        RelOp::Le => (AtomRel::Le, diff, true),
        RelOp::Lt => {
            let mut p = diff;
            p.constant += &one;
            (AtomRel::Le, p, true)
        }
        RelOp::Ge => (AtomRel::Le, diff.negate(), true),
        RelOp::Gt => {
            let mut p = diff.negate();
            p.constant += &one;
            (AtomRel::Le, p, true)
        }
        RelOp::Eq => (AtomRel::Eq, diff, true),
        RelOp::Ne => (AtomRel::Eq, diff, false),
    };
    if poly.is_constant() {
        let truth = match rel {
            AtomRel::Le => !poly.constant.is_positive(),
            AtomRel::Eq => poly.constant.is_zero(),
        };
        return Err(truth == positive);
    }
    if poly.leading_is_negative() {
        match rel {
            AtomRel::Eq => poly = poly.negate(),
            AtomRel::Le => {
                // not(p <= 0)  ==  -p + 1 <= 0
                poly = poly.negate();
                poly.constant += &one;
                positive = !positive;
            }
        }
    }
    Ok(Literal {
        positive,
        atom: PredicateAtom { rel, poly },
    })
}

/// Canonical form: atoms rewritten to canonical literals, double negation
/// collapsed, conjunctions/disjunctions flattened, sorted, deduplicated, and
/// constants folded. Implication structure is preserved. Idempotent.
pub fn normalize(f: &Formula) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Atom(op, a, b) => match canon_atom(*op, a, b) {
            Ok(lit) => lit.to_formula(),
            Err(true) => Formula::True,
            Err(false) => Formula::False,
        },
        Formula::Not(inner) => match normalize(inner) {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(g) => *g,
            g => Formula::not(g),
        },
        Formula::And(parts) => {
            let mut out = Vec::new();
            for p in parts {
                match normalize(p) {
                    Formula::True => {}
                    Formula::False => return Formula::False,
                    Formula::And(inner) => out.extend(inner),
                    g => out.push(g),
                }
            }
            out.sort();
            out.dedup();
            Formula::and(out)
        }
        Formula::Or(parts) => {
            let mut out = Vec::new();
            for p in parts {
                match normalize(p) {
                    Formula::False => {}
                    Formula::True => return Formula::True,
                    Formula::Or(inner) => out.extend(inner),
                    g => out.push(g),
                }
            }
            out.sort();
            out.dedup();
            match out.len() {
                0 => Formula::False,
                1 => out.into_iter().next().unwrap(),
                _ => Formula::Or(out),
            }
        }
        Formula::Implies(a, b) => {
            let (na, nb) = (normalize(a), normalize(b));
            match (&na, &nb) {
                (Formula::False, _) | (_, Formula::True) => Formula::True,
                (Formula::True, _) => nb,
                (_, Formula::False) => normalize(&Formula::not(na)),
                _ => Formula::implies(na, nb),
            }
        }
    }
}

/// Collects the canonical atoms appearing anywhere in a formula, in order of
/// first appearance, polarity stripped, constant atoms dropped.
pub fn atoms(f: &Formula) -> Vec<PredicateAtom> {
    fn walk(f: &Formula, out: &mut Vec<PredicateAtom>) {
        match f {
            Formula::True | Formula::False => {}
            Formula::Atom(op, a, b) => {
                if let Ok(lit) = canon_atom(*op, a, b) {
                    if !out.contains(&lit.atom) {
                        out.push(lit.atom);
                    }
                }
            }
            Formula::Not(g) => walk(g, out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| walk(g, out)),
            Formula::Implies(a, b) => {
                walk(a, out);
                walk(b, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(f, &mut out);
    out
}

/// The atoms of a conjunction of literals, negations stripped.
///
/// Fails with `NotConjunctive` if the (normalized) formula has a disjunction
/// or implication at the top level.
pub fn conjuncts(f: &Formula) -> Result<Vec<PredicateAtom>, LogicError> {
    fn literal_atom(f: &Formula) -> Option<PredicateAtom> {
        match f {
            Formula::Atom(op, a, b) => canon_atom(*op, a, b).ok().map(|l| l.atom),
            Formula::Not(inner) => literal_atom(inner),
            _ => None,
        }
    }
    match normalize(f) {
        Formula::True => Ok(Vec::new()),
        Formula::False => Ok(Vec::new()),
        Formula::And(parts) => {
            let mut out = Vec::new();
            for p in &parts {
                let a = literal_atom(p).ok_or(LogicError::NotConjunctive)?;
                if !out.contains(&a) {
                    out.push(a);
                }
            }
            Ok(out)
        }
        Formula::Or(_) | Formula::Implies(_, _) => Err(LogicError::NotConjunctive),
        single => Ok(literal_atom(&single)
            .map(|a| vec![a])
            .into_iter()
            .flatten()
            .collect()),
    }
}

/// Simultaneous substitution of expressions for variables.
pub fn substitute(f: &Formula, sigma: &BTreeMap<VarId, Expr>) -> Formula {
    fn subst_expr(e: &Expr, sigma: &BTreeMap<VarId, Expr>) -> Expr {
        match e {
            Expr::Const(_) => e.clone(),
            Expr::Var(v) => sigma.get(v).cloned().unwrap_or_else(|| e.clone()),
            Expr::Neg(a) => Expr::Neg(Box::new(subst_expr(a, sigma))),
            Expr::Add(a, b) => Expr::Add(
                Box::new(subst_expr(a, sigma)),
                Box::new(subst_expr(b, sigma)),
            ),
            Expr::Sub(a, b) => Expr::Sub(
                Box::new(subst_expr(a, sigma)),
                Box::new(subst_expr(b, sigma)),
            ),
            Expr::Mul(a, b) => Expr::Mul(
                Box::new(subst_expr(a, sigma)),
                Box::new(subst_expr(b, sigma)),
            ),
        }
    }
    match f {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Atom(op, a, b) => Formula::Atom(*op, subst_expr(a, sigma), subst_expr(b, sigma)),
        Formula::Not(g) => Formula::not(substitute(g, sigma)),
        Formula::And(fs) => Formula::And(fs.iter().map(|g| substitute(g, sigma)).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(|g| substitute(g, sigma)).collect()),
        Formula::Implies(a, b) => Formula::implies(substitute(a, sigma), substitute(b, sigma)),
    }
}

/// The substitution map of a transition's simultaneous assignment.
///
/// Input assignments have no expression; `input_values`, when given, supplies
/// concrete values for them (used when checking exactness of an executed
/// input transition). With `input_values = None` an input assignment is an
/// error.
pub fn update_map(
    t: &Transition,
    input_values: Option<&BTreeMap<VarId, BigInt>>,
) -> Result<BTreeMap<VarId, Expr>, LogicError> {
    let mut sigma = BTreeMap::new();
    for (v, u) in &t.updates {
        let e = match u {
            Update::Expr(e) => e.clone(),
            Update::Input => match input_values.and_then(|m| m.get(v)) {
                Some(val) => Expr::Const(val.clone()),
                None => return Err(LogicError::InputInWp),
            },
        };
        sigma.insert(*v, e);
    }
    Ok(sigma)
}

/// Weakest precondition of `phi` under a closed transition:
/// `guard => phi[updates]`, normalized.
pub fn wp(phi: &Formula, t: &Transition) -> Result<Formula, LogicError> {
    let sigma = update_map(t, None)?;
    Ok(normalize(&Formula::implies(
        t.guard.clone(),
        substitute(phi, &sigma),
    )))
}

/// Ground truth-value of a formula in a total state.
pub fn evaluate(f: &Formula, s: &ConcreteState) -> Result<bool, LogicError> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(op, a, b) => {
            let l = eval_expr(a, s)?;
            let r = eval_expr(b, s)?;
            match op {
                RelOp::Eq => l == r,
                RelOp::Ne => l != r,
                RelOp::Lt => l < r,
                RelOp::Le => l <= r,
                RelOp::Gt => l > r,
                RelOp::Ge => l >= r,
            }
        }
        Formula::Not(g) => !evaluate(g, s)?,
        Formula::And(fs) => {
            for g in fs {
                if !evaluate(g, s)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Or(fs) => {
            for g in fs {
                if evaluate(g, s)? {
                    return Ok(true);
                }
            }
            false
        }
        Formula::Implies(a, b) => !evaluate(a, s)? || evaluate(b, s)?,
    })
}

/// Parses a formula in the variable scope of an existing model (used for
/// predicate lists given on the command line and in tests).
pub fn parse_formula_in(m: &Model, text: &str) -> Result<Formula, crate::model::ParseError> {
    let src = format!("{}prop __q: {};", crate::model::declaration_source(m), text);
    Ok(crate::model::parse_model(&src)?.property)
}

/// Parses a single predicate and returns its canonical atom.
pub fn parse_atom_in(m: &Model, text: &str) -> Result<PredicateAtom, crate::model::ParseError> {
    let f = parse_formula_in(m, text)?;
    atoms(&f)
        .into_iter()
        .next()
        .ok_or_else(|| crate::model::ParseError {
            line: 1,
            col: 1,
            msg: format!("`{text}` contains no predicate atom"),
        })
}

/// Ground value of an expression in a total state.
pub fn eval_expr(e: &Expr, s: &ConcreteState) -> Result<BigInt, LogicError> {
    Ok(match e {
        Expr::Const(v) => v.clone(),
        Expr::Var(v) => s.get(*v).ok_or(LogicError::UnboundVariable(v.0))?.clone(),
        Expr::Neg(a) => -eval_expr(a, s)?,
        Expr::Add(a, b) => eval_expr(a, s)? + eval_expr(b, s)?,
        Expr::Sub(a, b) => eval_expr(a, s)? - eval_expr(b, s)?,
        Expr::Mul(a, b) => eval_expr(a, s)? * eval_expr(b, s)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::semantics::ConcreteState;
    use num_bigint::BigInt;

    fn parse_formula(model_src: &str, f: &str) -> (crate::model::Model, Formula) {
        let src = format!("{model_src} prop __q: {f};");
        let m = parse_model(&src).unwrap();
        let prop = m.property.clone();
        (m, prop)
    }

    fn canon(model_src: &str, f: &str) -> Formula {
        let (_, prop) = parse_formula(model_src, f);
        normalize(&prop)
    }

    #[test]
    fn substitution_is_simultaneous_and_partial() {
        let m = parse_model("vars x y; trans t: true -> x := x + 1; prop p: x < 2;").unwrap();
        let x = m.var("x").unwrap();
        let y = m.var("y").unwrap();
        let mut sigma = BTreeMap::new();
        sigma.insert(x, Expr::Var(y));
        sigma.insert(y, Expr::Var(x));
        let f = Formula::Atom(RelOp::Lt, Expr::Var(x), Expr::Var(y));
        let g = substitute(&f, &sigma);
        assert_eq!(g, Formula::Atom(RelOp::Lt, Expr::Var(y), Expr::Var(x)));
    }

    #[test]
    fn substitute_example_from_ticket() {
        // a1 <= s with s := s + 1 becomes a1 <= s + 1.
        let vars = "vars a1 s;";
        let got = canon(vars, "a1 <= s + 1");
        let m = parse_model(&format!("{vars} prop p: true;")).unwrap();
        let s = m.var("s").unwrap();
        let mut sigma = BTreeMap::new();
        sigma.insert(s, Expr::Add(Box::new(Expr::Var(s)), Box::new(Expr::int(1))));
        let (_, f) = parse_formula(vars, "a1 <= s");
        assert_eq!(normalize(&substitute(&f, &sigma)), got);
    }

    #[test]
    fn wp_of_decrement() {
        let m = parse_model("vars x; trans t1: x >= 0 -> x := x - 1; prop p: x < 0;").unwrap();
        let got = wp(&m.property, &m.transitions[0]).unwrap();
        let (_, expect) = parse_formula("vars x;", "x >= 0 => x - 1 < 0");
        assert_eq!(got, normalize(&expect));
    }

    #[test]
    fn wp_of_true_is_true() {
        let m = parse_model("vars x; trans t1: x >= 0 -> x := x - 1; prop p: x < 0;").unwrap();
        assert_eq!(
            wp(&Formula::True, &m.transitions[0]).unwrap(),
            Formula::True
        );
    }

    #[test]
    fn wp_rejects_input_transitions() {
        let m = parse_model("vars x; trans t1: x >= 0 -> x := input; prop p: x < 0;").unwrap();
        assert_eq!(
            wp(&m.property, &m.transitions[0]),
            Err(LogicError::InputInWp)
        );
    }

    #[test]
    fn normalize_collapses_double_negation() {
        let a = canon("vars x;", "!(!(x < 2))");
        let b = canon("vars x;", "x < 2");
        assert_eq!(a, b);
    }

    #[test]
    fn normalize_identifies_reversed_atoms() {
        let a = canon("vars a1 s;", "s + 1 >= a1");
        let b = canon("vars a1 s;", "a1 <= s + 1");
        assert_eq!(a, b);
    }

    #[test]
    fn normalize_flattens_nested_conjunction() {
        let got = canon("vars x y;", "x < 2 && (y < 1 && true)");
        match got {
            Formula::And(parts) => assert_eq!(parts.len(), 2),
            other => panic!("expected flat conjunction, got {other:?}"),
        }
    }

    #[test]
    fn normalize_is_idempotent_on_samples() {
        for s in [
            "x < 2 && (y < 1 && true)",
            "!(x >= 3) || x = y + 1",
            "x + 1 < y => (y > 0 && !(x != 0))",
            "2 > x",
            "x * y + 2 * x <= y * x + 5",
        ] {
            let n1 = canon("vars x y;", s);
            assert_eq!(normalize(&n1), n1, "not idempotent on {s}");
        }
    }

    #[test]
    fn constant_atoms_fold() {
        assert_eq!(canon("vars x;", "1 < 2"), Formula::True);
        assert_eq!(canon("vars x;", "2 = 3"), Formula::False);
        assert_eq!(canon("vars x;", "x <= x + 1"), Formula::True);
    }

    #[test]
    fn conjuncts_strips_negation() {
        let (_, f) = parse_formula("vars x;", "x < 2 && !(x < 1)");
        let atoms = conjuncts(&f).unwrap();
        assert_eq!(atoms.len(), 2);
        let (_, p) = parse_formula("vars x;", "x < 1");
        let Formula::Atom(op, a, b) = &p else {
            unreachable!()
        };
        let lit = canon_atom(*op, a, b).unwrap();
        assert!(atoms.contains(&lit.atom));
    }

    #[test]
    fn conjuncts_of_true_is_empty() {
        assert_eq!(conjuncts(&Formula::True).unwrap(), Vec::new());
    }

    #[test]
    fn conjuncts_rejects_disjunction() {
        let (_, f) = parse_formula("vars x y;", "x < 2 || y < 1");
        assert_eq!(conjuncts(&f), Err(LogicError::NotConjunctive));
    }

    #[test]
    fn conjunction_of_conjuncts_matches_positive_cubes() {
        // For cubes whose literals canonicalize positively, rebuilding the
        // conjunction from the extracted atoms is semantically equivalent on
        // a bounded box. (Negative literals lose their polarity by design:
        // the atoms are stored polarity-free.)
        for cube in ["x < 2 && y <= 1", "x = 1 && x - y <= 0 && x + y < 4"] {
            let (_, f) = parse_formula("vars x y;", cube);
            let atoms = conjuncts(&f).unwrap();
            let rebuilt = Formula::And(atoms.iter().map(|a| a.to_formula()).collect());
            for x in -4..=4 {
                for y in -4..=4 {
                    let s = ConcreteState::new(vec![BigInt::from(x), BigInt::from(y)]);
                    assert_eq!(
                        evaluate(&f, &s).unwrap(),
                        evaluate(&rebuilt, &s).unwrap(),
                        "cube {cube} differs at ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn evaluate_boundary() {
        let (m, f) = parse_formula("vars x;", "x < 2");
        let mk = |v: i64| ConcreteState::new(vec![BigInt::from(v)]);
        let _ = &m;
        assert!(evaluate(&f, &mk(0)).unwrap());
        assert!(!evaluate(&f, &mk(2)).unwrap());
    }

    #[test]
    fn atom_display_moves_terms() {
        let m = parse_model("vars a1 s; prop p: a1 <= s + 1;").unwrap();
        let Formula::Atom(op, a, b) = &m.property else {
            unreachable!()
        };
        let lit = canon_atom(*op, a, b).unwrap();
        assert_eq!(lit.atom.display(&m).to_string(), "a1 <= s + 1");
        assert!(lit.positive);
    }

    #[test]
    fn negative_constant_atom_display() {
        let m = parse_model("vars e1; prop p: e1 = -1;").unwrap();
        let Formula::Atom(op, a, b) = &m.property else {
            unreachable!()
        };
        let lit = canon_atom(*op, a, b).unwrap();
        assert_eq!(lit.atom.display(&m).to_string(), "e1 + 1 = 0");
    }
}
