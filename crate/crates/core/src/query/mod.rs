//! XPath-style traversal language over the provenance graph, transitive
//! lineage, and the canned provenance questions.

mod ast;
mod eval;
mod lineage;
mod parser;
mod questions;

pub use ast::{Expr, Query, SetKind, Source, Statement, Step, GRAPH_VAR};
pub use eval::{evaluate, EvalError, Evaluation, ResultSet};
pub use lineage::{lineage, LineageDirection};
pub use parser::{parse, QueryError};
pub use questions::{
    answer, AgentPresence, Answer, AnswerContext, AnswerError, MetadataCompleteness, Progress, QualityReport,
    QualityRule, QualityViolation, Question, Ruleset, SubjectSigned, PROJECT_KEY, STAGE_KEY,
};
