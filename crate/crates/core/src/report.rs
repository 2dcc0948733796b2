//! Machine-readable run reports and DOT export of explored structures.
//!
//! Reports are schema-versioned and deterministic: two runs with the same
//! flags differ at most in the `timestamp` field.

use crate::abstraction::LabelSet;
use crate::model::Model;
use crate::refine::{UndecidedReason, Verdict, VerificationReport};
use crate::search::ExploredStructure;
use crate::semantics::Trace;
use crate::solver::SolverStats;
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub model: String,
    pub property: String,
    pub config: ConfigEcho,
    pub verdict: String,
    pub iterations_run: usize,
    pub stabilized_after: Option<usize>,
    pub iterations: Vec<IterationReport>,
    pub counterexample: Option<TraceReport>,
    pub final_states: Option<usize>,
    pub final_transitions: Option<usize>,
    pub solver: SolverStats,
    /// Trailing timing block; the only fields that vary between identical
    /// runs.
    pub timestamp: String,
    pub wall_millis: u128,
}

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub order: String,
    pub mode: String,
    pub init_preds: String,
    pub assumes: bool,
    pub heuristic: Option<u32>,
    pub transition_dependent: bool,
    pub max_iterations: usize,
    pub input: String,
    pub solver: String,
}

#[derive(Debug, Serialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub phi_size: usize,
    pub concrete_states: u64,
    pub abstract_states: u64,
    pub exactness_checks: u64,
    pub failed_checks: u64,
    pub new_predicates: Vec<String>,
    pub heuristic_predicates: Vec<String>,
    pub queries: u64,
    pub cache_hits: u64,
    pub backend_calls: u64,
}

#[derive(Debug, Serialize)]
pub struct TraceReport {
    pub steps: usize,
    pub transitions: Vec<String>,
    pub states: Vec<Vec<String>>,
}

/// Wall-clock timestamp in seconds since the epoch; the only
/// non-deterministic report field.
fn timestamp() -> String {
    match std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
        Ok(d) => format!("{}.{:03}", d.as_secs(), d.subsec_millis()),
        Err(_) => "0.000".to_string(),
    }
}

pub fn trace_report(m: &Model, trace: &Trace) -> TraceReport {
    let mut states = vec![state_strings(m, &trace.initial)];
    let mut transitions = Vec::new();
    for step in &trace.steps {
        let t = m
            .transition(step.transition)
            .expect("trace transitions exist");
        let inputs = if step.inputs.is_empty() {
            String::new()
        } else {
            let parts: Vec<String> = step
                .inputs
                .iter()
                .map(|(v, k)| format!("{}={}", m.var_name(*v), k))
                .collect();
            format!(" [{}]", parts.join(", "))
        };
        transitions.push(format!("{}{}", t.name, inputs));
        states.push(state_strings(m, &step.state));
    }
    TraceReport {
        steps: trace.len(),
        transitions,
        states,
    }
}

fn state_strings(m: &Model, s: &crate::semantics::ConcreteState) -> Vec<String> {
    m.vars
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{}={}", d.name, s.values()[i]))
        .collect()
}

pub struct ReportInputs<'a> {
    pub model: &'a Model,
    pub model_name: String,
    pub config: ConfigEcho,
    pub report: &'a VerificationReport,
    pub solver: SolverStats,
}

pub fn run_report(inputs: ReportInputs<'_>) -> RunReport {
    let ReportInputs {
        model,
        model_name,
        config,
        report,
        solver,
    } = inputs;
    let verdict = match &report.verdict {
        Verdict::ErrorFound(_) => "error-found".to_string(),
        Verdict::Unreachable(_) => "unreachable".to_string(),
        Verdict::Undecided(UndecidedReason::IterationLimit) => "undecided:iteration-limit".into(),
        Verdict::Undecided(UndecidedReason::ResourceLimit) => "undecided:resource-limit".into(),
    };
    let iterations = report
        .iterations
        .iter()
        .enumerate()
        .map(|(i, it)| IterationReport {
            iteration: i + 1,
            phi_size: it.phi_size,
            concrete_states: it.concrete_states,
            abstract_states: it.abstract_states,
            exactness_checks: it.exactness_checks,
            failed_checks: it.failed_checks,
            new_predicates: it
                .new_atoms
                .iter()
                .map(|a| a.display(model).to_string())
                .collect(),
            heuristic_predicates: it
                .heuristic_atoms
                .iter()
                .map(|a| a.display(model).to_string())
                .collect(),
            queries: it.solver.queries,
            cache_hits: it.solver.cache_hits,
            backend_calls: it.solver.backend_calls,
        })
        .collect();
    let (counterexample, final_states, final_transitions) = match &report.verdict {
        Verdict::ErrorFound(trace) => (Some(trace_report(model, trace)), None, None),
        Verdict::Unreachable(s) => (None, Some(s.states.len()), Some(s.transitions.len())),
        Verdict::Undecided(_) => (None, None, None),
    };
    RunReport {
        schema_version: SCHEMA_VERSION,
        tool: "gcmc",
        model: model_name,
        property: model.property_name.clone(),
        config,
        verdict,
        iterations_run: report.iterations_run(),
        stabilized_after: report.stabilized_after,
        iterations,
        counterexample,
        final_states,
        final_transitions,
        solver,
        timestamp: timestamp(),
        wall_millis: report.wall.as_millis(),
    }
}

fn label_string(m: &Model, l: &LabelSet) -> String {
    let parts: Vec<String> = l.iter().map(|a| a.display(m).to_string()).collect();
    parts.join(", ")
}

/// Renders an explored structure as a DOT digraph. Node count equals the
/// stored abstract states, edge count the recorded abstract transitions.
pub fn dot(m: &Model, s: &ExploredStructure) -> String {
    use std::fmt::Write;
    let mut out = String::from("digraph explored {\n  rankdir=TB;\n  node [shape=box];\n");
    for (i, a) in s.states.iter().enumerate() {
        let label = a.display(m);
        let props = label_string(m, &s.labels[i]);
        let text = if props.is_empty() {
            label
        } else {
            format!("{label}\\n{{{props}}}")
        };
        let shape = if i == s.initial { ", penwidth=2" } else { "" };
        writeln!(out, "  s{i} [label=\"{text}\"{shape}];").unwrap();
    }
    for (src, t, dst) in &s.transitions {
        let name = m.transition(*t).map(|t| t.name.as_str()).unwrap_or("?");
        writeln!(out, "  s{src} -> s{dst} [label=\"{name}\"];").unwrap();
    }
    out.push_str("}\n");
    out
}
