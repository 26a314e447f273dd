//! Parser for `.cqn` query files and the validated query representation.
//!
//! Grammar, one statement per query:
//!
//! ```text
//! @semiring counting            # optional, defaults to boolean
//! @default R = 7                # default constant per negated atom
//! Q(x1, x2) :- A(x1, x2), U(x2, x3), !R(x3).
//! ```
//!
//! `#` starts a line comment. Identifiers are `[A-Za-z_][A-Za-z0-9_]*`.

use crate::algebra::{Semiring, Value};
use crate::hypergraph::{EdgeId, SignedHypergraph, Vertex};
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("unsafe query: variable {0} occurs in no positive atom")]
    UnsafeQuery(String),
    #[error("atom {0} appears twice; load the relation under a fresh name to express a self-join")]
    DuplicateAtom(String),
    #[error("head variable {0} does not occur in the body")]
    UnknownVariableInHead(String),
    #[error("query error: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub name: String,
    pub vars: Vec<String>,
    pub negated: bool,
}

/// A parsed and validated query with its derived signed hypergraph. Vertex
/// ids number the free variables first, in head order, so the free set is
/// always a prefix of the id range.
#[derive(Debug, Clone)]
pub struct Query {
    pub name: String,
    pub head_vars: Vec<String>,
    pub atoms: Vec<Atom>,
    pub semiring: Semiring,
    pub defaults: HashMap<String, Value>,
    raw_defaults: HashMap<String, String>,
    pub var_names: Vec<String>,
    pub var_ids: HashMap<String, Vertex>,
    pub hypergraph: SignedHypergraph,
    /// Edge id in `hypergraph` for each atom, in body order.
    pub atom_edges: Vec<EdgeId>,
    pub free: BTreeSet<Vertex>,
}

impl Query {
    pub fn atom_for_edge(&self, edge: EdgeId) -> &Atom {
        let idx = self
            .atom_edges
            .iter()
            .position(|&e| e == edge)
            .expect("edge does not belong to this query");
        &self.atoms[idx]
    }

    pub fn is_full(&self) -> bool {
        self.free.len() == self.var_names.len()
    }

    /// The same query under another semiring; default constants are
    /// re-parsed against the new carrier.
    pub fn with_semiring(&self, semiring: Semiring) -> Result<Query, FrontendError> {
        build_query(
            self.name.clone(),
            self.head_vars.clone(),
            self.atoms.clone(),
            semiring,
            &self.raw_defaults,
        )
    }

    pub fn var_name(&self, v: Vertex) -> &str {
        &self.var_names[v as usize]
    }

    /// Canonical text form; parsing it back yields the same query.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "@semiring {}", self.semiring.kind.name());
        let mut atoms: Vec<&Atom> = self.atoms.iter().filter(|a| a.negated).collect();
        atoms.sort_by(|a, b| a.name.cmp(&b.name));
        for a in atoms {
            if let Some(v) = self.defaults.get(&a.name) {
                let _ = writeln!(out, "@default {} = {}", a.name, v);
            }
        }
        let _ = write!(out, "{}({}) :- ", self.name, self.head_vars.join(", "));
        let body: Vec<String> = self
            .atoms
            .iter()
            .map(|a| {
                format!(
                    "{}{}({})",
                    if a.negated { "!" } else { "" },
                    a.name,
                    a.vars.join(", ")
                )
            })
            .collect();
        let _ = writeln!(out, "{}.", body.join(", "));
        out
    }
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
    Punct(char),
    Implied, // ":-"
    Directive(String),
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
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

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FrontendError> {
        Err(FrontendError::Syntax {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        })
    }

    /// Reads the raw remainder of the current line (used after `=` in a
    /// directive, where values like `{1;2}` or `-inf` live).
    fn rest_of_line(&mut self) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c == b'\n' || c == b'#' {
                break;
            }
            out.push(c as char);
            self.bump();
        }
        out.trim().to_string()
    }

    fn next_token(&mut self) -> Result<Spanned, FrontendError> {
        loop {
            match self.peek() {
                Some(c) if (c as char).is_whitespace() => {
                    self.bump();
                }
                Some(b'#') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let spanned = |tok| Spanned { tok, line, col };
        match self.peek() {
            None => Ok(spanned(Tok::Eof)),
            Some(b'@') => {
                self.bump();
                let name = self.ident()?;
                Ok(spanned(Tok::Directive(name)))
            }
            Some(b':') => {
                self.bump();
                if self.peek() == Some(b'-') {
                    self.bump();
                    Ok(spanned(Tok::Implied))
                } else {
                    self.err("expected `:-`")
                }
            }
            Some(c)
                if c == b'(' || c == b')' || c == b',' || c == b'.' || c == b'!' || c == b'=' =>
            {
                self.bump();
                Ok(spanned(Tok::Punct(c as char)))
            }
            Some(c) if (c as char).is_ascii_alphabetic() || c == b'_' => {
                let name = self.ident()?;
                Ok(spanned(Tok::Ident(name)))
            }
            Some(c) => self.err(format!("unexpected character `{}`", c as char)),
        }
    }

    fn ident(&mut self) -> Result<String, FrontendError> {
        let mut out = String::new();
        match self.peek() {
            Some(c) if (c as char).is_ascii_alphabetic() || c == b'_' => {}
            _ => return self.err("expected identifier"),
        }
        while let Some(c) = self.peek() {
            if (c as char).is_ascii_alphanumeric() || c == b'_' {
                out.push(c as char);
                self.bump();
            } else {
                break;
            }
        }
        Ok(out)
    }
}

/// Parses a whole file: directives apply to every query that follows them.
pub fn parse_program(text: &str) -> Result<Vec<Query>, FrontendError> {
    let mut lx = Lexer::new(text);
    let mut semiring = Semiring::instance("boolean").unwrap();
    let mut raw_defaults: HashMap<String, String> = HashMap::new();
    let mut queries = Vec::new();
    loop {
        let t = lx.next_token()?;
        match t.tok {
            Tok::Eof => break,
            Tok::Directive(d) if d == "semiring" => {
                let name = expect_ident(&mut lx)?;
                semiring = Semiring::instance(&name).map_err(|e| FrontendError::Syntax {
                    line: t.line,
                    col: t.col,
                    msg: e.to_string(),
                })?;
            }
            Tok::Directive(d) if d == "default" => {
                let atom = expect_ident(&mut lx)?;
                let eq = lx.next_token()?;
                if eq.tok != Tok::Punct('=') {
                    return Err(FrontendError::Syntax {
                        line: eq.line,
                        col: eq.col,
                        msg: "expected `=` in @default".into(),
                    });
                }
                raw_defaults.insert(atom, lx.rest_of_line());
            }
            Tok::Directive(d) => {
                return Err(FrontendError::Syntax {
                    line: t.line,
                    col: t.col,
                    msg: format!("unknown directive @{d}"),
                })
            }
            Tok::Ident(head) => {
                let q = parse_query_body(&mut lx, head, semiring, &raw_defaults)?;
                queries.push(q);
            }
            _ => {
                return Err(FrontendError::Syntax {
                    line: t.line,
                    col: t.col,
                    msg: "expected a directive or a query head".into(),
                })
            }
        }
    }
    Ok(queries)
}

/// Parses a file expected to contain exactly one query.
pub fn parse_query(text: &str) -> Result<Query, FrontendError> {
    let mut qs = parse_program(text)?;
    match qs.len() {
        1 => Ok(qs.pop().unwrap()),
        n => Err(FrontendError::Invalid(format!(
            "expected 1 query, found {n}"
        ))),
    }
}

fn expect_punct(lx: &mut Lexer, want: char) -> Result<(), FrontendError> {
    let t = lx.next_token()?;
    if t.tok == Tok::Punct(want) {
        Ok(())
    } else {
        Err(FrontendError::Syntax {
            line: t.line,
            col: t.col,
            msg: format!("expected `{want}`"),
        })
    }
}

fn expect_ident(lx: &mut Lexer) -> Result<String, FrontendError> {
    let t = lx.next_token()?;
    match t.tok {
        Tok::Ident(name) => Ok(name),
        _ => Err(FrontendError::Syntax {
            line: t.line,
            col: t.col,
            msg: "expected identifier".into(),
        }),
    }
}

fn parse_var_list(lx: &mut Lexer) -> Result<Vec<String>, FrontendError> {
    let mut vars = Vec::new();
    let t = lx.next_token()?;
    match t.tok {
        Tok::Punct(')') => return Ok(vars),
        Tok::Ident(v) => vars.push(v),
        _ => {
            return Err(FrontendError::Syntax {
                line: t.line,
                col: t.col,
                msg: "expected variable or `)`".into(),
            })
        }
    }
    loop {
        let t = lx.next_token()?;
        match t.tok {
            Tok::Punct(')') => return Ok(vars),
            Tok::Punct(',') => {
                let t = lx.next_token()?;
                match t.tok {
                    Tok::Ident(v) => vars.push(v),
                    _ => {
                        return Err(FrontendError::Syntax {
                            line: t.line,
                            col: t.col,
                            msg: "expected variable".into(),
                        })
                    }
                }
            }
            _ => {
                return Err(FrontendError::Syntax {
                    line: t.line,
                    col: t.col,
                    msg: "expected `,` or `)`".into(),
                })
            }
        }
    }
}

fn parse_query_body(
    lx: &mut Lexer,
    name: String,
    semiring: Semiring,
    raw_defaults: &HashMap<String, String>,
) -> Result<Query, FrontendError> {
    expect_punct(lx, '(')?;
    let head_vars = parse_var_list(lx)?;
    let t = lx.next_token()?;
    if t.tok != Tok::Implied {
        return Err(FrontendError::Syntax {
            line: t.line,
            col: t.col,
            msg: "expected `:-`".into(),
        });
    }
    let mut atoms = Vec::new();
    loop {
        let t = lx.next_token()?;
        let (negated, atom_name) = match t.tok {
            Tok::Punct('!') => (true, expect_ident(lx)?),
            Tok::Ident(n) => (false, n),
            _ => {
                return Err(FrontendError::Syntax {
                    line: t.line,
                    col: t.col,
                    msg: "expected an atom".into(),
                })
            }
        };
        expect_punct(lx, '(')?;
        let vars = parse_var_list(lx)?;
        if vars.is_empty() {
            return Err(FrontendError::Syntax {
                line: t.line,
                col: t.col,
                msg: format!("atom {atom_name} needs at least one variable"),
            });
        }
        let mut seen = BTreeSet::new();
        for v in &vars {
            if !seen.insert(v.clone()) {
                return Err(FrontendError::Syntax {
                    line: t.line,
                    col: t.col,
                    msg: format!("variable {v} repeated inside atom {atom_name}"),
                });
            }
        }
        atoms.push(Atom {
            name: atom_name,
            vars,
            negated,
        });
        let t = lx.next_token()?;
        match t.tok {
            Tok::Punct(',') => continue,
            Tok::Punct('.') => break,
            _ => {
                return Err(FrontendError::Syntax {
                    line: t.line,
                    col: t.col,
                    msg: "expected `,` or `.`".into(),
                })
            }
        }
    }
    build_query(name, head_vars, atoms, semiring, raw_defaults)
}

pub(crate) fn build_query(
    name: String,
    head_vars: Vec<String>,
    atoms: Vec<Atom>,
    semiring: Semiring,
    raw_defaults: &HashMap<String, String>,
) -> Result<Query, FrontendError> {
    let mut names_seen = BTreeSet::new();
    for a in &atoms {
        if !names_seen.insert(a.name.clone()) {
            return Err(FrontendError::DuplicateAtom(a.name.clone()));
        }
    }
    {
        let mut seen = BTreeSet::new();
        for v in &head_vars {
            if !seen.insert(v.clone()) {
                return Err(FrontendError::Invalid(format!(
                    "head variable {v} repeated"
                )));
            }
        }
    }

    // Free variables get the lowest vertex ids, in head order; the rest
    // follow in first-occurrence order.
    let mut var_names: Vec<String> = Vec::new();
    let mut var_ids: HashMap<String, Vertex> = HashMap::new();
    let add = |v: &String, var_names: &mut Vec<String>, var_ids: &mut HashMap<String, Vertex>| {
        if !var_ids.contains_key(v) {
            var_ids.insert(v.clone(), var_names.len() as Vertex);
            var_names.push(v.clone());
        }
    };
    let body_vars: BTreeSet<&String> = atoms.iter().flat_map(|a| a.vars.iter()).collect();
    for v in &head_vars {
        if !body_vars.contains(v) {
            return Err(FrontendError::UnknownVariableInHead(v.clone()));
        }
        add(v, &mut var_names, &mut var_ids);
    }
    for a in &atoms {
        for v in &a.vars {
            add(v, &mut var_names, &mut var_ids);
        }
    }

    for v in &var_names {
        let safe = atoms.iter().any(|a| !a.negated && a.vars.contains(v));
        if !safe {
            return Err(FrontendError::UnsafeQuery(v.clone()));
        }
    }

    let edge_set = |a: &Atom| -> BTreeSet<Vertex> { a.vars.iter().map(|v| var_ids[v]).collect() };
    let pos: Vec<BTreeSet<Vertex>> = atoms.iter().filter(|a| !a.negated).map(edge_set).collect();
    let neg: Vec<BTreeSet<Vertex>> = atoms.iter().filter(|a| a.negated).map(edge_set).collect();
    let hypergraph = SignedHypergraph::new(0..var_names.len() as Vertex, pos, neg)
        .map_err(|e| FrontendError::Invalid(e.to_string()))?;

    // Positive atoms take edge ids 0..p in body order, negatives follow.
    let mut atom_edges = vec![0usize; atoms.len()];
    let mut next = 0;
    for (i, a) in atoms.iter().enumerate() {
        if !a.negated {
            atom_edges[i] = next;
            next += 1;
        }
    }
    for (i, a) in atoms.iter().enumerate() {
        if a.negated {
            atom_edges[i] = next;
            next += 1;
        }
    }

    let mut defaults = HashMap::new();
    let mut kept_raw = HashMap::new();
    for (atom, raw) in raw_defaults {
        if let Some(a) = atoms.iter().find(|a| &a.name == atom) {
            if !a.negated {
                return Err(FrontendError::Invalid(format!(
                    "@default given for positive atom {atom}"
                )));
            }
            let v = semiring
                .parse_weight(raw)
                .map_err(|e| FrontendError::Invalid(e.to_string()))?;
            if semiring.is_zero(&v) {
                return Err(FrontendError::Invalid(format!(
                    "default for {atom} must be nonzero in the {} semiring",
                    semiring.kind.name()
                )));
            }
            defaults.insert(atom.clone(), v);
            kept_raw.insert(atom.clone(), raw.clone());
        }
    }

    let free: BTreeSet<Vertex> = head_vars.iter().map(|v| var_ids[v]).collect();
    Ok(Query {
        name,
        head_vars,
        atoms,
        semiring,
        defaults,
        raw_defaults: kept_raw,
        var_names,
        var_ids,
        hypergraph,
        atom_edges,
        free,
    })
}
