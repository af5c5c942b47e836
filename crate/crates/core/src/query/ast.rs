use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// The variable implicitly bound to every node of the graph.
pub const GRAPH_VAR: &str = "_g";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub statements: Vec<Statement>,
}

/// `$name := expr`, or a bare `expr` whose value is only reported as the
/// query result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub binding: Option<String>,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub source: Source,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    /// `g:key($var, 'property', 'value')`
    Key {
        within: String,
        property: String,
        value: String,
    },
    /// `$var`
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    InE,
    OutE,
    InV,
    OutV,
    /// `[@property='value']`
    Filter { property: String, value: String },
    /// `[@property]`
    Project(String),
}

/// What a set-valued expression holds at some point of a step chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    Nodes,
    Edges,
    Values,
}

impl SetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SetKind::Nodes => "nodes",
            SetKind::Edges => "edges",
            SetKind::Values => "values",
        }
    }
}

impl fmt::Display for SetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Step {
    /// Output kind when applied to `input`, or `None` when the step does not
    /// apply to that kind of set.
    pub fn apply_kind(&self, input: SetKind) -> Option<SetKind> {
        match (self, input) {
            (Step::InE | Step::OutE, SetKind::Nodes) => Some(SetKind::Edges),
            (Step::InV | Step::OutV, SetKind::Edges) => Some(SetKind::Nodes),
            (Step::Filter { .. }, k @ (SetKind::Nodes | SetKind::Edges)) => Some(k),
            (Step::Project(_), SetKind::Nodes | SetKind::Edges) => Some(SetKind::Values),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Step::InE => "inE",
            Step::OutE => "outE",
            Step::InV => "inV",
            Step::OutV => "outV",
            Step::Filter { .. } => "filter",
            Step::Project(_) => "projection",
        }
    }
}

fn write_str_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("'")?;
    for c in s.chars() {
        match c {
            '\'' => f.write_str("\\'")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("'")
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, stmt) in self.statements.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{stmt}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(name) = &self.binding {
            write!(f, "${name} := ")?;
        }
        write!(f, "{}", self.expr)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            Source::Key {
                within,
                property,
                value,
            } => {
                write!(f, "g:key(${within}, ")?;
                write_str_literal(f, property)?;
                f.write_str(", ")?;
                write_str_literal(f, value)?;
                f.write_str(")")?;
            }
            Source::Var(name) => write!(f, "${name}")?,
        }
        for step in &self.steps {
            write!(f, "{step}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::InE => f.write_str("/inE"),
            Step::OutE => f.write_str("/outE"),
            Step::InV => f.write_str("/inV"),
            Step::OutV => f.write_str("/outV"),
            Step::Filter { property, value } => {
                write!(f, "[@{property}=")?;
                write_str_literal(f, value)?;
                f.write_str("]")
            }
            Step::Project(p) => write!(f, "[@{p}]"),
        }
    }
}
