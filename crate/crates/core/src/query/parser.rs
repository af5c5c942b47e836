//! Recursive-descent parser for the traversal language.
//!
//! ```text
//! query     := statement ((NEWLINE | ";") statement)*
//! statement := ("$" IDENT ":=")? expr
//! expr      := source step*
//! source    := "g:key(" ref "," STR "," STR ")" | ref
//! ref       := "$" IDENT
//! step      := "/inE" | "/outE" | "/inV" | "/outV" | "[@" IDENT ("=" STR)? "]"
//! ```
//!
//! Parsing also type-checks step chains: edge steps (`inE`, `outE`) consume
//! node sets, vertex steps (`inV`, `outV`) consume edge sets, and nothing
//! follows a projection. A chain that no source could make legal is a syntax
//! error; one that only fails for its actual source is a type mismatch at
//! the offending step, found once scoping has been resolved.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ast::{Expr, Query, SetKind, Source, Statement, Step, GRAPH_VAR};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at {line}:{column}: expected {expected}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
    },
    #[error("unbound variable ${name} at {line}:{column}")]
    UnboundVariable { name: String, line: usize, column: usize },
    /// The chain is well-formed but its actual source holds the wrong kind.
    #[error("type mismatch at {line}:{column}: {step} cannot apply to a set of {operand}")]
    TypeMismatch {
        step: &'static str,
        operand: SetKind,
        line: usize,
        column: usize,
    },
}

impl QueryError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            QueryError::Syntax { line, column, .. }
            | QueryError::UnboundVariable { line, column, .. }
            | QueryError::TypeMismatch { line, column, .. } => (*line, *column),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

struct StatementPositions {
    within: Option<Pos>,
    source: Pos,
    steps: Vec<Pos>,
}

pub fn parse(text: &str) -> Result<Query, QueryError> {
    let mut p = Parser::new(text);
    let mut statements = Vec::new();
    let mut positions = Vec::new();
    loop {
        p.skip_blank_lines();
        if p.at_end() {
            break;
        }
        let (stmt, pos) = p.statement()?;
        statements.push(stmt);
        positions.push(pos);
        p.skip_inline_ws();
        match p.peek() {
            None => break,
            Some('\n' | ';') => {
                p.bump();
            }
            Some(_) => return Err(p.error("a step, a newline or ';'")),
        }
    }
    if statements.is_empty() {
        return Err(p.error("a statement"));
    }
    check_scopes(&statements, &positions)?;
    Ok(Query { statements })
}

/// Resolves every variable and types every chain against its actual source.
fn check_scopes(statements: &[Statement], positions: &[StatementPositions]) -> Result<(), QueryError> {
    let mut env: BTreeMap<&str, SetKind> = BTreeMap::new();
    env.insert(GRAPH_VAR, SetKind::Nodes);
    for (stmt, pos) in statements.iter().zip(positions) {
        let start = match &stmt.expr.source {
            Source::Var(name) => *env.get(name.as_str()).ok_or_else(|| unbound(name, pos.source))?,
            Source::Key { within, .. } => {
                let at = pos.within.unwrap_or(pos.source);
                match env.get(within.as_str()) {
                    None => return Err(unbound(within, at)),
                    Some(SetKind::Nodes) => SetKind::Nodes,
                    Some(other) => return Err(mismatch("g:key", *other, at)),
                }
            }
        };
        let mut kind = start;
        for (step, at) in stmt.expr.steps.iter().zip(&pos.steps) {
            kind = step.apply_kind(kind).ok_or_else(|| mismatch(step.name(), kind, *at))?;
        }
        if let Some(name) = &stmt.binding {
            env.insert(name.as_str(), kind);
        }
    }
    Ok(())
}

fn unbound(name: &str, at: Pos) -> QueryError {
    QueryError::UnboundVariable {
        name: name.into(),
        line: at.line,
        column: at.column,
    }
}

fn mismatch(step: &'static str, operand: SetKind, at: Pos) -> QueryError {
    QueryError::TypeMismatch {
        step,
        operand,
        line: at.line,
        column: at.column,
    }
}

fn syntax(at: Pos, expected: &str) -> QueryError {
    QueryError::Syntax {
        line: at.line,
        column: at.column,
        expected: expected.into(),
    }
}

fn step_expectation(kind: SetKind) -> String {
    match kind {
        SetKind::Nodes => "a step applicable to a node set (/inE, /outE, [@...])".into(),
        SetKind::Edges => "a step applicable to an edge set (/inV, /outV, [@...])".into(),
        SetKind::Values => "end of expression after a projection".into(),
    }
}

/// Whether some choice of source kind makes `steps` legal; on failure,
/// returns the index of the step where the longest-surviving attempt broke.
fn chain_is_typeable(steps: &[Step], known_start: Option<SetKind>) -> Result<(), (usize, SetKind)> {
    let starts: &[SetKind] = match known_start {
        Some(SetKind::Nodes) => &[SetKind::Nodes],
        Some(SetKind::Edges) => &[SetKind::Edges],
        Some(SetKind::Values) => &[SetKind::Values],
        None => &[SetKind::Nodes, SetKind::Edges, SetKind::Values],
    };
    let mut best: Option<(usize, SetKind)> = None;
    for start in starts {
        let mut kind = *start;
        let mut failed = None;
        for (i, step) in steps.iter().enumerate() {
            match step.apply_kind(kind) {
                Some(next) => kind = next,
                None => {
                    failed = Some((i, kind));
                    break;
                }
            }
        }
        match failed {
            None => return Ok(()),
            Some(f) => {
                if best.is_none_or(|b| f.0 > b.0) {
                    best = Some(f);
                }
            }
        }
    }
    Err(best.unwrap_or((0, SetKind::Nodes)))
}

struct Parser {
    chars: Vec<char>,
    idx: usize,
    line: usize,
    column: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser {
            chars: text.chars().collect(),
            idx: 0,
            line: 1,
            column: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }

    fn error(&self, expected: &str) -> QueryError {
        syntax(self.pos(), expected)
    }

    fn at_end(&self) -> bool {
        self.idx >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.idx).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.idx += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_inline_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r')) {
            self.bump();
        }
    }

    fn skip_blank_lines(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r' | '\n' | ';')) {
            self.bump();
        }
    }

    fn eat(&mut self, literal: &str) -> bool {
        let n = literal.chars().count();
        if self.chars.len() < self.idx + n {
            return false;
        }
        if self.chars[self.idx..self.idx + n].iter().copied().eq(literal.chars()) {
            for _ in 0..n {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn expect(&mut self, literal: &str) -> Result<(), QueryError> {
        if self.eat(literal) {
            Ok(())
        } else {
            Err(self.error(&format!("`{literal}`")))
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return Err(self.error("an identifier")),
        }
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                out.push(c);
                self.bump();
            } else {
                break;
            }
        }
        Ok(out)
    }

    fn var(&mut self) -> Result<String, QueryError> {
        if self.peek() != Some('$') {
            return Err(self.error("a variable reference `$name`"));
        }
        self.bump();
        self.ident()
    }

    fn string(&mut self) -> Result<String, QueryError> {
        if self.peek() != Some('\'') {
            return Err(self.error("a single-quoted string"));
        }
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("closing `'`")),
                Some('\'') => return Ok(out),
                Some('\\') => {
                    let c = match self.bump() {
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        _ => return Err(self.error("an escape sequence (\\', \\\\, \\n, \\t, \\r)")),
                    };
                    out.push(c);
                }
                Some(c) => out.push(c),
            }
        }
    }

    fn statement(&mut self) -> Result<(Statement, StatementPositions), QueryError> {
        let mut binding = None;
        let mut leading_ref = None;
        if self.peek() == Some('$') {
            let at = self.pos();
            let name = self.var()?;
            self.skip_inline_ws();
            if self.eat(":=") {
                self.skip_inline_ws();
                binding = Some(name);
            } else {
                leading_ref = Some((name, at));
            }
        }

        let source_pos;
        let mut within_pos = None;
        let source = if let Some((name, at)) = leading_ref {
            source_pos = at;
            Source::Var(name)
        } else if self.peek() == Some('$') {
            source_pos = self.pos();
            Source::Var(self.var()?)
        } else if self.peek() == Some('g') {
            source_pos = self.pos();
            self.expect("g:key")?;
            self.skip_inline_ws();
            self.expect("(")?;
            self.skip_inline_ws();
            within_pos = Some(self.pos());
            let within = self.var()?;
            self.skip_inline_ws();
            self.expect(",")?;
            self.skip_inline_ws();
            let property = self.string()?;
            self.skip_inline_ws();
            self.expect(",")?;
            self.skip_inline_ws();
            let value = self.string()?;
            self.skip_inline_ws();
            self.expect(")")?;
            Source::Key {
                within,
                property,
                value,
            }
        } else {
            return Err(self.error(if binding.is_some() {
                "an expression (`g:key(...)` or `$name`)"
            } else {
                "a statement (`$name := expr`)"
            }));
        };

        let mut steps = Vec::new();
        let mut step_pos = Vec::new();
        loop {
            self.skip_inline_ws();
            let at = self.pos();
            let step = match self.peek() {
                Some('/') => {
                    self.bump();
                    let name_at = self.pos();
                    let name = self.ident()?;
                    match name.as_str() {
                        "inE" => Step::InE,
                        "outE" => Step::OutE,
                        "inV" => Step::InV,
                        "outV" => Step::OutV,
                        _ => return Err(syntax(name_at, "one of inE, outE, inV, outV")),
                    }
                }
                Some('[') => {
                    self.bump();
                    self.expect("@")?;
                    let property = self.ident()?;
                    self.skip_inline_ws();
                    let step = if self.eat("=") {
                        self.skip_inline_ws();
                        let value = self.string()?;
                        self.skip_inline_ws();
                        Step::Filter { property, value }
                    } else {
                        Step::Project(property)
                    };
                    self.expect("]")?;
                    step
                }
                _ => break,
            };
            steps.push(step);
            step_pos.push(at);
        }

        let known = match source {
            Source::Key { .. } => Some(SetKind::Nodes),
            Source::Var(_) => None,
        };
        if let Err((i, kind)) = chain_is_typeable(&steps, known) {
            return Err(syntax(step_pos[i], &step_expectation(kind)));
        }

        Ok((
            Statement {
                binding,
                expr: Expr { source, steps },
            },
            StatementPositions {
                within: within_pos,
                source: source_pos,
                steps: step_pos,
            },
        ))
    }
}

impl core::str::FromStr for Query {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}
