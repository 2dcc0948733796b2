//! Explicit-state model checking for integer guarded-command programs with
//! predicate-abstracted state matching and iterative refinement.
//!
//! The checker executes concrete transitions but stores only abstract versions
//! of the visited states (a bitvector of predicate truth values plus the
//! concrete control variables). While exploring, it checks with a validity
//! solver whether the abstraction loses precision with respect to each
//! executed transition; the atoms of failed checks become new abstraction
//! predicates for the next iteration. The loop stops when an error state is
//! found (every reported counterexample is concretely replayable) or when the
//! predicate set reaches a fixed point, in which case the explored structure
//! is bisimilar to the concrete system.
//!
//! Module map:
//! - [`model`]: guarded-command AST, parser, validation, pretty-printing.
//! - [`logic`]: formulas, substitution, weakest preconditions, canonical atoms.
//! - [`solver`]: validity/satisfiability checking with caching over pluggable
//!   backends (built-in linear-arithmetic engine or an external SMT process).
//! - [`semantics`]: concrete states, successor generation, trace replay.
//! - [`abstraction`]: predicate sets, abstract states, labelings.
//! - [`search`]: one exploration round with exactness checking.
//! - [`refine`]: the outer refinement loop, heuristics, verdicts.
//! - [`oracle`]: brute-force ground-truth engines used for cross-checking.
//! - [`report`]: machine-readable run reports and DOT export.

pub mod abstraction;
pub mod corpus;
pub mod logic;
pub mod model;
pub mod oracle;
pub mod refine;
pub mod report;
pub mod search;
pub mod semantics;
pub mod solver;

pub use model::{Model, Transition};
pub use refine::{refinement_search, RefineConfig, Verdict, VerificationReport};
pub use search::{alpha_search, ExploredStructure, SearchConfig, SearchOutcome};
