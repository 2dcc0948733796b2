//! Randomized invariants: parser round-trips, canonicalization idempotence,
//! substitution soundness, and simultaneity of updates.

use gcmc::logic;
use gcmc::model::{
    models_equal, parse_model, pretty_print, Expr, Formula, Model, RelOp, Transition, Update, VarId,
};
use gcmc::semantics::{apply, successors, ConcreteState, InputMode};
use num_bigint::BigInt;
use proptest::prelude::*;
use std::collections::BTreeMap;

const VARS: [&str; 3] = ["x", "y", "z"];

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-4i64..5).prop_map(Expr::int),
        (0u32..3).prop_map(|v| Expr::Var(VarId(v))),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            inner.prop_map(|a| Expr::Neg(Box::new(a))),
        ]
    })
}

fn arb_relop() -> impl Strategy<Value = RelOp> {
    prop_oneof![
        Just(RelOp::Eq),
        Just(RelOp::Ne),
        Just(RelOp::Lt),
        Just(RelOp::Le),
        Just(RelOp::Gt),
        Just(RelOp::Ge),
    ]
}

fn arb_formula() -> impl Strategy<Value = Formula> {
    let atom = (arb_relop(), arb_expr(), arb_expr()).prop_map(|(op, a, b)| Formula::Atom(op, a, b));
    let leaf = prop_oneof![atom, Just(Formula::True), Just(Formula::False)];
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::implies(a, b)),
        ]
    })
}

fn arb_model() -> impl Strategy<Value = Model> {
    let transition = (
        arb_formula(),
        prop::collection::btree_map(0u32..3, arb_expr(), 1..3),
    );
    prop::collection::vec(transition, 0..4).prop_flat_map(|transitions| {
        arb_formula().prop_map(move |prop_formula| {
            // Assemble a source text so the result went through the parser
            // at least once (variable ids line up with VARS).
            let scaffold = parse_model("vars x y z; prop p: x < 0;").unwrap();
            let mut m = scaffold;
            m.transitions = transitions
                .iter()
                .enumerate()
                .map(|(i, (guard, updates))| Transition {
                    name: format!("t{}", i + 1),
                    index: i + 1,
                    guard: guard.clone(),
                    updates: updates
                        .iter()
                        .map(|(v, e)| (VarId(*v), Update::Expr(e.clone())))
                        .collect(),
                })
                .collect();
            m.property = prop_formula.clone();
            m
        })
    })
}

fn bounded_states() -> Vec<ConcreteState> {
    let mut out = Vec::new();
    for x in -4..=4 {
        for y in -4..=4 {
            for z in -2..=2 {
                out.push(ConcreteState::new(vec![
                    BigInt::from(x),
                    BigInt::from(y),
                    BigInt::from(z),
                ]));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pretty_print_round_trips(m in arb_model()) {
        let printed = pretty_print(&m);
        let parsed = parse_model(&printed)
            .unwrap_or_else(|e| panic!("re-parse failed: {e}\n{printed}"));
        prop_assert!(models_equal(&m, &parsed), "round trip changed the model:\n{printed}");
    }

    #[test]
    fn normalize_is_idempotent(f in arb_formula()) {
        let once = logic::normalize(&f);
        prop_assert_eq!(logic::normalize(&once), once);
    }

    #[test]
    fn normalize_preserves_truth(f in arb_formula()) {
        let normalized = logic::normalize(&f);
        for s in bounded_states().into_iter().step_by(7) {
            prop_assert_eq!(
                logic::evaluate(&f, &s).unwrap(),
                logic::evaluate(&normalized, &s).unwrap(),
                "normalization changed the meaning at {:?}", s
            );
        }
    }

    #[test]
    fn substitution_commutes_with_evaluation(
        f in arb_formula(),
        e0 in arb_expr(),
        e1 in arb_expr(),
    ) {
        // evaluate(f[sigma], s) equals evaluate(f, s updated by sigma at s).
        let mut sigma = BTreeMap::new();
        sigma.insert(VarId(0), e0);
        sigma.insert(VarId(1), e1);
        let substituted = logic::substitute(&f, &sigma);
        for s in bounded_states().into_iter().step_by(11) {
            let direct = logic::evaluate(&substituted, &s).unwrap();
            let mut updated = s.clone();
            for (v, e) in &sigma {
                updated.set(*v, logic::eval_expr(e, &s).unwrap());
            }
            let staged = logic::evaluate(&f, &updated).unwrap();
            prop_assert_eq!(direct, staged);
        }
    }

    #[test]
    fn updates_are_simultaneous_for_all_pairs(a in 0u32..3, b in 0u32..3) {
        prop_assume!(a != b);
        let names = [VARS[a as usize], VARS[b as usize]];
        let src = format!(
            "vars x y z; init {} = 1, {} = 2; trans swap: true -> {} := {}, {} := {}; prop p: x < 0;",
            names[0], names[1], names[0], names[1], names[1], names[0],
        );
        let m = parse_model(&src).unwrap();
        let s = gcmc::semantics::initial_state(&m);
        let next = apply(&s, &m.transitions[0], &BTreeMap::new()).unwrap();
        prop_assert_eq!(next.get(VarId(a)).unwrap(), &BigInt::from(2));
        prop_assert_eq!(next.get(VarId(b)).unwrap(), &BigInt::from(1));
    }

    #[test]
    fn successor_enumeration_is_deterministic(m in arb_model()) {
        let s = gcmc::semantics::initial_state(&m);
        let first = successors(&s, &m, &InputMode::BruteForce(-2, 2));
        let second = successors(&s, &m, &InputMode::BruteForce(-2, 2));
        prop_assert_eq!(first, second);
    }
}

#[test]
fn corpus_models_round_trip() {
    for (name, src) in [
        ("ticket2", gcmc::corpus::TICKET2),
        ("ticket2_err", gcmc::corpus::TICKET2_ERR),
        ("ticket3", gcmc::corpus::TICKET3),
        ("ticket3_err", gcmc::corpus::TICKET3_ERR),
        ("rax", gcmc::corpus::RAX),
        ("rax_err", gcmc::corpus::RAX_ERR),
        ("bakery", gcmc::corpus::BAKERY),
        ("bakery_err", gcmc::corpus::BAKERY_ERR),
        ("driver", gcmc::corpus::DRIVER),
        ("driver_err", gcmc::corpus::DRIVER_ERR),
        ("rejoin", gcmc::corpus::REJOIN),
        ("pump", gcmc::corpus::PUMP),
        ("addloop", gcmc::corpus::ADDLOOP),
        ("countdown", gcmc::corpus::COUNTDOWN),
        ("threshold", gcmc::corpus::THRESHOLD),
    ] {
        let m = parse_model(src).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(
            gcmc::model::validate_model(&m).is_empty(),
            "{name} has diagnostics"
        );
        let printed = pretty_print(&m);
        let again = parse_model(&printed).unwrap_or_else(|e| panic!("{name} reprint: {e}"));
        assert!(
            models_equal(&m, &again),
            "{name} round trip changed the model"
        );
    }
}

#[test]
fn labeling_eventually_covers_concrete_labelings() {
    // Some refinement round reaches every concrete labeling, on every model
    // whose concrete system the reference engine can finish.
    use gcmc::abstraction::property_atoms;
    use gcmc::refine::{initial_predicates, RefineConfig};
    use gcmc::search::{alpha_search, PredicateMap, SearchConfig};
    use gcmc::solver::Solver;
    for (name, src) in [
        ("rejoin", gcmc::corpus::REJOIN),
        ("pump", gcmc::corpus::PUMP),
        ("addloop", gcmc::corpus::ADDLOOP),
        ("countdown", gcmc::corpus::COUNTDOWN),
        ("threshold", gcmc::corpus::THRESHOLD),
        ("driver", gcmc::corpus::DRIVER),
    ] {
        let m = parse_model(src).unwrap();
        let lts = gcmc::oracle::concrete_explore(&m, &gcmc::oracle::ExploreBounds::default());
        assert!(!lts.truncated);
        let want = gcmc::oracle::reachable_labelings(&lts);
        let mut phi = initial_predicates(&m, &RefineConfig::default());
        let mut solver = Solver::builtin(m.vars.iter().map(|v| v.name.clone()).collect());
        let mut covered = false;
        for _ in 0..8 {
            let out = alpha_search(
                &m,
                &PredicateMap::global(phi.clone()),
                &SearchConfig::default(),
                &mut solver,
            )
            .unwrap();
            if out.structure.reachable_labelings() == want {
                covered = true;
                break;
            }
            if out.phi_new.same_atoms(&phi) {
                break;
            }
            phi = out.phi_new;
        }
        assert!(
            covered,
            "{name}: no round reached the concrete labelings {want:?}"
        );
        let _ = property_atoms(&m);
    }
}
