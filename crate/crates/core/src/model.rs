//! Guarded-command models: AST, concrete syntax, validation.
//!
//! A model is a list of integer variable declarations (`vars` for data
//! variables, `control` for program counters that are never abstracted),
//! optional initial-value overrides (absent variables start at 0), optional
//! `assume` formulas that seed the abstraction predicates, an ordered list of
//! guarded transitions, and exactly one error property.
//!
//! Grammar (comments run from `#` to end of line):
//!
//! ```text
//! model  := decl*
//! decl   := "vars" id+ ";"
//!         | "control" id+ ";"
//!         | "init" id "=" int ("," id "=" int)* ";"
//!         | "assume" formula ";"
//!         | "trans" id ":" formula "->" assign ("," assign)* ";"
//!         | "prop" id ":" formula ";"
//! assign := id ":=" (expr | "input")
//! ```

use num_bigint::BigInt;
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Index into a model's variable table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Data,
    Control,
}

#[derive(Debug, Clone)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
}

/// Integer expression over declared variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const(BigInt),
    Var(VarId),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn int(v: i64) -> Expr {
        Expr::Const(BigInt::from(v))
    }

    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Expr::Neg(e) => e.vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "=",
            RelOp::Ne => "!=",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }
}

/// Boolean formula over integer atoms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(RelOp, Expr, Expr),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn and(parts: Vec<Formula>) -> Formula {
        match parts.len() {
            0 => Formula::True,
            1 => parts.into_iter().next().unwrap(),
            _ => Formula::And(parts),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Formula::Not(f) => f.vars(out),
            Formula::And(fs) | Formula::Or(fs) => {
                for f in fs {
                    f.vars(out);
                }
            }
            Formula::Implies(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

/// Right-hand side of an assignment: an expression or a fresh input value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Update {
    Expr(Expr),
    Input,
}

/// One guarded transition. Updates are simultaneous: all right-hand sides are
/// evaluated in the pre-state before any variable is written.
#[derive(Debug, Clone)]
pub struct Transition {
    pub name: String,
    /// 1-based position in model-file order.
    pub index: usize,
    pub guard: Formula,
    pub updates: Vec<(VarId, Update)>,
}

impl Transition {
    pub fn input_vars(&self) -> Vec<VarId> {
        self.updates
            .iter()
            .filter_map(|(v, u)| matches!(u, Update::Input).then_some(*v))
            .collect()
    }

    pub fn has_input(&self) -> bool {
        self.updates.iter().any(|(_, u)| matches!(u, Update::Input))
    }
}

/// A parsed guarded-command model.
#[derive(Debug, Clone)]
pub struct Model {
    pub vars: Vec<VarDecl>,
    pub init: Vec<(VarId, BigInt)>,
    pub assumes: Vec<Formula>,
    pub transitions: Vec<Transition>,
    pub property_name: String,
    pub property: Formula,
    by_name: HashMap<String, VarId>,
}

impl Model {
    pub fn var(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn var_name(&self, id: VarId) -> &str {
        &self.vars[id.index()].name
    }

    pub fn is_control(&self, id: VarId) -> bool {
        self.vars[id.index()].kind == VarKind::Control
    }

    pub fn data_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, d)| d.kind == VarKind::Data)
            .map(|(i, _)| VarId(i as u32))
    }

    pub fn control_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, d)| d.kind == VarKind::Control)
            .map(|(i, _)| VarId(i as u32))
    }

    pub fn transition(&self, index: usize) -> Option<&Transition> {
        self.transitions.get(index.checked_sub(1)?)
    }
}

/// Validation diagnostic. An empty diagnostic list means the model satisfies
/// all structural invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    UndeclaredVariable { context: String, name: String },
    DuplicateTransitionId { name: String },
    DuplicateAssignment { transition: String, var: String },
    BadTransitionIndex { transition: String, index: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UndeclaredVariable { context, name } => {
                write!(f, "undeclared variable `{name}` in {context}")
            }
            Diagnostic::DuplicateTransitionId { name } => {
                write!(f, "duplicate transition id `{name}`")
            }
            Diagnostic::DuplicateAssignment { transition, var } => {
                write!(
                    f,
                    "variable `{var}` assigned twice in transition `{transition}`"
                )
            }
            Diagnostic::BadTransitionIndex { transition, index } => {
                write!(
                    f,
                    "transition `{transition}` has index {index} out of file order"
                )
            }
        }
    }
}

/// Checks the structural invariants of a parsed model.
///
/// The parser already rejects most of these, so this mainly guards models
/// built or rewritten programmatically.
pub fn validate_model(m: &Model) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let nvars = m.vars.len() as u32;
    let check_formula = |f: &Formula, context: &str, out: &mut Vec<Diagnostic>| {
        let mut vs = Vec::new();
        f.vars(&mut vs);
        for v in vs {
            if v.0 >= nvars {
                out.push(Diagnostic::UndeclaredVariable {
                    context: context.to_string(),
                    name: format!("#{}", v.0),
                });
            }
        }
    };
    check_formula(&m.property, "property", &mut out);
    for a in &m.assumes {
        check_formula(a, "assume", &mut out);
    }
    let mut seen = HashMap::new();
    for (pos, t) in m.transitions.iter().enumerate() {
        if seen.insert(t.name.clone(), ()).is_some() {
            out.push(Diagnostic::DuplicateTransitionId {
                name: t.name.clone(),
            });
        }
        if t.index != pos + 1 {
            out.push(Diagnostic::BadTransitionIndex {
                transition: t.name.clone(),
                index: t.index,
            });
        }
        check_formula(&t.guard, &format!("guard of `{}`", t.name), &mut out);
        let mut lhs = HashMap::new();
        for (v, u) in &t.updates {
            if v.0 >= nvars {
                out.push(Diagnostic::UndeclaredVariable {
                    context: format!("assignment in `{}`", t.name),
                    name: format!("#{}", v.0),
                });
                continue;
            }
            if lhs.insert(*v, ()).is_some() {
                out.push(Diagnostic::DuplicateAssignment {
                    transition: t.name.clone(),
                    var: m.var_name(*v).to_string(),
                });
            }
            if let Update::Expr(e) = u {
                let mut vs = Vec::new();
                e.vars(&mut vs);
                for used in vs {
                    if used.0 >= nvars {
                        out.push(Diagnostic::UndeclaredVariable {
                            context: format!("assignment in `{}`", t.name),
                            name: format!("#{}", used.0),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Parse error with source position.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'#') => {
                    while let Some(c) = self.bump() {
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn next_tok(&mut self) -> Result<(Tok, usize, usize), ParseError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else {
            return Ok((Tok::Eof, line, col));
        };
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                self.bump();
            }
            let s = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .to_string();
            return Ok((Tok::Ident(s), line, col));
        }
        if c.is_ascii_digit() {
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
            let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return Ok((Tok::Int(s.parse().unwrap()), line, col));
        }
        let two = |lexer: &Lexer| -> Option<&'static str> {
            let rest = &lexer.src[lexer.pos..];
            ["&&", "||", "=>", ":=", "->", "<=", ">=", "!="].into_iter().find(|&p| rest.starts_with(p.as_bytes())).map(|v| v as _)
        };
        if let Some(p) = two(self) {
            self.bump();
            self.bump();
            return Ok((Tok::Punct(p), line, col));
        }
        let one = match c {
            b';' => ";",
            b':' => ":",
            b',' => ",",
            b'(' => "(",
            b')' => ")",
            b'+' => "+",
            b'-' => "-",
            b'*' => "*",
            b'=' => "=",
            b'<' => "<",
            b'>' => ">",
            b'!' => "!",
            _ => {
                return Err(ParseError {
                    line,
                    col,
                    msg: format!("unexpected character `{}`", c as char),
                })
            }
        };
        self.bump();
        Ok((Tok::Punct(one), line, col))
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    vars: Vec<VarDecl>,
    by_name: HashMap<String, VarId>,
    src_marker: std::marker::PhantomData<&'a ()>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let mut toks = Vec::new();
        loop {
            let t = lexer.next_tok()?;
            let eof = t.0 == Tok::Eof;
            toks.push(t);
            if eof {
                break;
            }
        }
        Ok(Parser {
            toks,
            pos: 0,
            vars: Vec::new(),
            by_name: HashMap::new(),
            src_marker: std::marker::PhantomData,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn here(&self) -> (usize, usize) {
        let (_, l, c) = &self.toks[self.pos];
        (*l, *c)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_punct(&mut self, p: &'static str) -> Result<(), ParseError> {
        if self.peek() == &Tok::Punct(p) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{p}`, found {}", self.peek()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {other}")),
        }
    }

    fn declare(&mut self, name: String, kind: VarKind) -> Result<(), ParseError> {
        if self.by_name.contains_key(&name) {
            return self.err(format!("variable `{name}` declared twice"));
        }
        let id = VarId(self.vars.len() as u32);
        self.by_name.insert(name.clone(), id);
        self.vars.push(VarDecl { name, kind });
        Ok(())
    }

    fn lookup(&self, name: &str) -> Result<VarId, ParseError> {
        self.by_name.get(name).copied().ok_or_else(|| {
            let (line, col) = self.here();
            ParseError {
                line,
                col,
                msg: format!("undeclared variable `{name}`"),
            }
        })
    }

    fn int_literal(&mut self) -> Result<BigInt, ParseError> {
        let neg = if self.peek() == &Tok::Punct("-") {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            other => self.err(format!("expected integer, found {other}")),
        }
    }

    // expr := term (('+'|'-') term)* ; term := factor ('*' factor)*
    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.term()?;
        loop {
            match self.peek() {
                Tok::Punct("+") => {
                    self.bump();
                    e = Expr::Add(Box::new(e), Box::new(self.term()?));
                }
                Tok::Punct("-") => {
                    self.bump();
                    e = Expr::Sub(Box::new(e), Box::new(self.term()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.factor()?;
        while self.peek() == &Tok::Punct("*") {
            self.bump();
            e = Expr::Mul(Box::new(e), Box::new(self.factor()?));
        }
        Ok(e)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Punct("-") => {
                self.bump();
                // A minus directly on an integer literal is a negative
                // constant; anything else stays a negation node.
                if let Tok::Int(v) = self.peek().clone() {
                    self.bump();
                    return Ok(Expr::Const(-v));
                }
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.eat_punct(")")?;
                Ok(e)
            }
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr::Var(self.lookup(&name)?))
            }
            other => self.err(format!("expected expression, found {other}")),
        }
    }

    // formula := or_f ("=>" formula)? , right-associative implication
    fn formula(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or_formula()?;
        if self.peek() == &Tok::Punct("=>") {
            self.bump();
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or_formula(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.and_formula()?];
        while self.peek() == &Tok::Punct("||") {
            self.bump();
            parts.push(self.and_formula()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::Or(parts)
        })
    }

    fn and_formula(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.not_formula()?];
        while self.peek() == &Tok::Punct("&&") {
            self.bump();
            parts.push(self.not_formula()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::And(parts)
        })
    }

    fn not_formula(&mut self) -> Result<Formula, ParseError> {
        if self.peek() == &Tok::Punct("!") {
            self.bump();
            return Ok(Formula::not(self.not_formula()?));
        }
        self.atom_formula()
    }

    fn atom_formula(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::Ident(kw) if kw == "true" => {
                self.bump();
                return Ok(Formula::True);
            }
            Tok::Ident(kw) if kw == "false" => {
                self.bump();
                return Ok(Formula::False);
            }
            Tok::Punct("(") => {
                // Either a parenthesized formula or a parenthesized arithmetic
                // expression followed by a relation. Backtrack on mismatch.
                let save = self.pos;
                self.bump();
                if let Ok(f) = self.formula() {
                    if self.peek() == &Tok::Punct(")") {
                        self.bump();
                        // A parenthesized expression atom like `(x + 1) < y`
                        // parses as a formula only if a relop does not follow.
                        if !self.peek_is_relop() {
                            return Ok(f);
                        }
                    }
                }
                self.pos = save;
            }
            _ => {}
        }
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Punct("=") => RelOp::Eq,
            Tok::Punct("!=") => RelOp::Ne,
            Tok::Punct("<") => RelOp::Lt,
            Tok::Punct("<=") => RelOp::Le,
            Tok::Punct(">") => RelOp::Gt,
            Tok::Punct(">=") => RelOp::Ge,
            other => return self.err(format!("expected relational operator, found {other}")),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Formula::Atom(op, lhs, rhs))
    }

    fn peek_is_relop(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Punct("=")
                | Tok::Punct("!=")
                | Tok::Punct("<")
                | Tok::Punct("<=")
                | Tok::Punct(">")
                | Tok::Punct(">=")
        )
    }

    fn model(&mut self) -> Result<Model, ParseError> {
        let mut init = Vec::new();
        let mut assumes = Vec::new();
        let mut transitions: Vec<Transition> = Vec::new();
        let mut property: Option<(String, Formula)> = None;
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "vars" || kw == "control" => {
                    self.bump();
                    let kind = if kw == "vars" {
                        VarKind::Data
                    } else {
                        VarKind::Control
                    };
                    loop {
                        let name = self.ident()?;
                        self.declare(name, kind)?;
                        if self.peek() == &Tok::Punct(";") {
                            break;
                        }
                    }
                    self.eat_punct(";")?;
                }
                Tok::Ident(kw) if kw == "init" => {
                    self.bump();
                    loop {
                        let name = self.ident()?;
                        let id = self.lookup(&name)?;
                        self.eat_punct("=")?;
                        let v = self.int_literal()?;
                        init.push((id, v));
                        if self.peek() == &Tok::Punct(",") {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.eat_punct(";")?;
                }
                Tok::Ident(kw) if kw == "assume" => {
                    self.bump();
                    assumes.push(self.formula()?);
                    self.eat_punct(";")?;
                }
                Tok::Ident(kw) if kw == "trans" => {
                    self.bump();
                    let name = self.ident()?;
                    if transitions.iter().any(|t| t.name == name) {
                        return self.err(format!("duplicate transition id `{name}`"));
                    }
                    self.eat_punct(":")?;
                    let guard = self.formula()?;
                    self.eat_punct("->")?;
                    let mut updates: Vec<(VarId, Update)> = Vec::new();
                    loop {
                        let v = self.ident()?;
                        let id = self.lookup(&v)?;
                        self.eat_punct(":=")?;
                        let u = if self.peek() == &Tok::Ident("input".to_string()) {
                            self.bump();
                            Update::Input
                        } else {
                            Update::Expr(self.expr()?)
                        };
                        if updates.iter().any(|(w, _)| *w == id) {
                            return self.err(format!(
                                "variable `{v}` assigned twice in transition `{name}`"
                            ));
                        }
                        updates.push((id, u));
                        if self.peek() == &Tok::Punct(",") {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.eat_punct(";")?;
                    transitions.push(Transition {
                        name,
                        index: transitions.len() + 1,
                        guard,
                        updates,
                    });
                }
                Tok::Ident(kw) if kw == "prop" => {
                    self.bump();
                    let name = self.ident()?;
                    self.eat_punct(":")?;
                    let f = self.formula()?;
                    self.eat_punct(";")?;
                    if property.is_some() {
                        return self.err("only one `prop` per model");
                    }
                    property = Some((name, f));
                }
                other => return self.err(format!("expected declaration, found {other}")),
            }
        }
        let Some((property_name, property)) = property else {
            return self.err("model has no `prop` declaration");
        };
        Ok(Model {
            vars: std::mem::take(&mut self.vars),
            init,
            assumes,
            transitions,
            property_name,
            property,
            by_name: std::mem::take(&mut self.by_name),
        })
    }
}

/// Parses a model from its textual form. Transitions keep source order and
/// receive contiguous 1-based indices.
pub fn parse_model(text: &str) -> Result<Model, ParseError> {
    Parser::new(text)?.model()
}

fn prec_expr(e: &Expr, f: &mut fmt::Formatter<'_>, m: &Model, parent: u8) -> fmt::Result {
    let prec = match e {
        Expr::Const(_) | Expr::Var(_) => 3,
        Expr::Neg(_) => 2,
        Expr::Mul(_, _) => 1,
        Expr::Add(_, _) | Expr::Sub(_, _) => 0,
    };
    let paren = prec < parent;
    if paren {
        write!(f, "(")?;
    }
    match e {
        Expr::Const(v) => write!(f, "{v}")?,
        Expr::Var(v) => write!(f, "{}", m.var_name(*v))?,
        Expr::Neg(inner) => {
            // `-(2)` keeps an explicit negation of a literal distinct from
            // the negative constant `-2` across a parse round trip.
            write!(f, "-")?;
            if matches!(**inner, Expr::Const(_)) {
                write!(f, "(")?;
                prec_expr(inner, f, m, 0)?;
                write!(f, ")")?;
            } else {
                prec_expr(inner, f, m, 2)?;
            }
        }
        Expr::Add(a, b) => {
            prec_expr(a, f, m, 0)?;
            write!(f, " + ")?;
            prec_expr(b, f, m, 1)?;
        }
        Expr::Sub(a, b) => {
            prec_expr(a, f, m, 0)?;
            write!(f, " - ")?;
            prec_expr(b, f, m, 1)?;
        }
        Expr::Mul(a, b) => {
            prec_expr(a, f, m, 1)?;
            write!(f, " * ")?;
            prec_expr(b, f, m, 2)?;
        }
    }
    if paren {
        write!(f, ")")?;
    }
    Ok(())
}

fn prec_formula(g: &Formula, f: &mut fmt::Formatter<'_>, m: &Model, parent: u8) -> fmt::Result {
    let prec = match g {
        Formula::True | Formula::False | Formula::Atom(..) => 4,
        Formula::Not(_) => 3,
        Formula::And(_) => 2,
        Formula::Or(_) => 1,
        Formula::Implies(_, _) => 0,
    };
    let paren = prec < parent;
    if paren {
        write!(f, "(")?;
    }
    match g {
        Formula::True => write!(f, "true")?,
        Formula::False => write!(f, "false")?,
        Formula::Atom(op, a, b) => {
            prec_expr(a, f, m, 0)?;
            write!(f, " {} ", op.symbol())?;
            prec_expr(b, f, m, 0)?;
        }
        Formula::Not(inner) => {
            write!(f, "!")?;
            prec_formula(inner, f, m, 4)?;
        }
        Formula::And(parts) => {
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    write!(f, " && ")?;
                }
                prec_formula(p, f, m, 3)?;
            }
        }
        Formula::Or(parts) => {
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    write!(f, " || ")?;
                }
                prec_formula(p, f, m, 2)?;
            }
        }
        Formula::Implies(a, b) => {
            prec_formula(a, f, m, 1)?;
            write!(f, " => ")?;
            prec_formula(b, f, m, 0)?;
        }
    }
    if paren {
        write!(f, ")")?;
    }
    Ok(())
}

/// Displays an expression with the model's variable names.
pub struct ExprDisplay<'a>(pub &'a Expr, pub &'a Model);

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        prec_expr(self.0, f, self.1, 0)
    }
}

/// Displays a formula with the model's variable names.
pub struct FormulaDisplay<'a>(pub &'a Formula, pub &'a Model);

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        prec_formula(self.0, f, self.1, 0)
    }
}

/// Renders a model back to source form. `parse_model(pretty_print(m))` is
/// structurally equal to `m`.
pub fn pretty_print(m: &Model) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    // Declarations are grouped into runs of the same kind, in variable order,
    // so that re-parsing assigns identical variable ids.
    out.push_str(&declaration_source(m));
    if !m.init.is_empty() {
        let parts: Vec<_> = m
            .init
            .iter()
            .map(|(v, k)| format!("{} = {}", m.var_name(*v), k))
            .collect();
        writeln!(out, "init {};", parts.join(", ")).unwrap();
    }
    for a in &m.assumes {
        writeln!(out, "assume {};", FormulaDisplay(a, m)).unwrap();
    }
    for t in &m.transitions {
        let updates: Vec<_> = t
            .updates
            .iter()
            .map(|(v, u)| match u {
                Update::Expr(e) => format!("{} := {}", m.var_name(*v), ExprDisplay(e, m)),
                Update::Input => format!("{} := input", m.var_name(*v)),
            })
            .collect();
        writeln!(
            out,
            "trans {}: {} -> {};",
            t.name,
            FormulaDisplay(&t.guard, m),
            updates.join(", ")
        )
        .unwrap();
    }
    writeln!(
        out,
        "prop {}: {};",
        m.property_name,
        FormulaDisplay(&m.property, m)
    )
    .unwrap();
    out
}

/// The `vars`/`control` declaration lines of a model, in variable-table
/// order, so that parsing them reproduces the same [`VarId`] assignment.
pub fn declaration_source(m: &Model) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let mut i = 0;
    while i < m.vars.len() {
        let kind = m.vars[i].kind;
        let mut names = Vec::new();
        while i < m.vars.len() && m.vars[i].kind == kind {
            names.push(m.vars[i].name.clone());
            i += 1;
        }
        let kw = if kind == VarKind::Data {
            "vars"
        } else {
            "control"
        };
        writeln!(out, "{kw} {};", names.join(" ")).unwrap();
    }
    out
}

/// Structural equality of models modulo variable-table representation.
pub fn models_equal(a: &Model, b: &Model) -> bool {
    let vars_a: Vec<_> = a.vars.iter().map(|v| (v.name.clone(), v.kind)).collect();
    let vars_b: Vec<_> = b.vars.iter().map(|v| (v.name.clone(), v.kind)).collect();
    if vars_a != vars_b || a.init != b.init || a.property_name != b.property_name {
        return false;
    }
    if a.assumes != b.assumes || a.property != b.property {
        return false;
    }
    if a.transitions.len() != b.transitions.len() {
        return false;
    }
    a.transitions.iter().zip(&b.transitions).all(|(x, y)| {
        x.name == y.name && x.index == y.index && x.guard == y.guard && x.updates == y.updates
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_transition_model() {
        let m = parse_model("vars x; trans t1: x >= 0 -> x := x - 1; prop err: x < 0;").unwrap();
        assert_eq!(m.vars.len(), 1);
        assert_eq!(m.transitions.len(), 1);
        assert_eq!(m.transitions[0].index, 1);
        assert_eq!(
            m.property,
            Formula::Atom(RelOp::Lt, Expr::Var(VarId(0)), Expr::int(0))
        );
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn parses_empty_transition_list() {
        let m = parse_model("vars x; prop err: x < 0;").unwrap();
        assert!(m.transitions.is_empty());
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn rejects_undeclared_variable() {
        let e = parse_model("vars x; trans t: x >= 0 -> z := 1; prop p: x < 0;").unwrap_err();
        assert!(e.msg.contains("undeclared variable `z`"), "{e}");
    }

    #[test]
    fn validate_flags_programmatic_violations() {
        // The parser cannot produce these, but models can also be built or
        // rewritten in memory.
        let mut m = parse_model("vars x; trans t: x >= 0 -> x := 1; prop p: x < 0;").unwrap();
        m.transitions[0]
            .updates
            .push((VarId(7), Update::Expr(Expr::int(1))));
        let mut t2 = m.transitions[0].clone();
        t2.index = 5;
        m.transitions.push(t2);
        let diagnostics = validate_model(&m);
        assert!(diagnostics
            .iter()
            .any(|d| matches!(d, Diagnostic::UndeclaredVariable { .. })));
        assert!(diagnostics
            .iter()
            .any(|d| matches!(d, Diagnostic::DuplicateTransitionId { .. })));
        assert!(diagnostics
            .iter()
            .any(|d| matches!(d, Diagnostic::BadTransitionIndex { .. })));
    }

    #[test]
    fn rejects_duplicate_transition_id() {
        let e = parse_model(
            "vars x; trans t: x >= 0 -> x := 1; trans t: x >= 0 -> x := 2; prop p: x < 0;",
        )
        .unwrap_err();
        assert!(e.msg.contains("duplicate transition id"), "{e}");
    }

    #[test]
    fn rejects_duplicate_lhs() {
        let e =
            parse_model("vars x; trans t: x >= 0 -> x := 1, x := 2; prop p: x < 0;").unwrap_err();
        assert!(e.msg.contains("assigned twice"), "{e}");
    }

    #[test]
    fn reports_position() {
        let e = parse_model("vars x;\ntrans t1: x >> 0 -> x := 1; prop p: x < 0;").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn parses_input_and_init() {
        let m = parse_model(
            "vars x y; control pc; init x = 5, pc = 1; trans t: pc = 1 -> x := input, y := x; prop p: x < 0;",
        )
        .unwrap();
        assert_eq!(m.init.len(), 2);
        let t = &m.transitions[0];
        assert!(t.has_input());
        assert_eq!(t.input_vars(), vec![m.var("x").unwrap()]);
    }

    #[test]
    fn control_var_in_property_is_legal() {
        let m =
            parse_model("vars x; control pc; trans t: pc = 0 -> pc := 1; prop p: pc = 1;").unwrap();
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn parenthesized_formula_vs_expression() {
        let m = parse_model(
            "vars x y; trans t: (x = 0 || y = 0) && x <= y -> x := (x + 1) * 2; prop p: (x + 1) < y;",
        )
        .unwrap();
        assert_eq!(m.transitions.len(), 1);
    }

    #[test]
    fn round_trips_ticket_model() {
        let src = crate::corpus::TICKET3;
        let m = parse_model(src).unwrap();
        let printed = pretty_print(&m);
        let again = parse_model(&printed).unwrap();
        assert!(
            models_equal(&m, &again),
            "round-trip changed the model:\n{printed}"
        );
        assert_eq!(m.transitions.len(), 9);
        let names: Vec<_> = m.vars.iter().map(|v| v.name.as_str()).collect();
        for v in ["pc1", "pc2", "pc3", "a1", "a2", "a3", "t", "s"] {
            assert!(names.contains(&v), "missing {v}");
        }
    }
}
