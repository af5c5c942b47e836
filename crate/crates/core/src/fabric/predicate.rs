use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::item::{has_path_prefix, validate_path, ItemKind, ItemRecord};
use crate::metadata::MetaValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    /// Substring of a string value, or element of a list value.
    Contains,
}

/// Server-side item filter, serialized as `{"op": ..}` objects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    True,
    Kind { kind: ItemKind },
    PathPrefix { prefix: String },
    HasKey { key: String },
    /// `Ne` is the negation of `Eq`, so it also holds when `key` is absent.
    /// All other comparisons require the key to be present.
    Meta { key: String, cmp: Comparison, value: MetaValue },
    And { all: Vec<Predicate> },
    Or { any: Vec<Predicate> },
    Not { not: Box<Predicate> },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad predicate: {0}")]
pub struct BadPredicate(pub String);

impl Predicate {
    pub fn and(all: impl IntoIterator<Item = Predicate>) -> Self {
        Predicate::And {
            all: all.into_iter().collect(),
        }
    }

    pub fn or(any: impl IntoIterator<Item = Predicate>) -> Self {
        Predicate::Or {
            any: any.into_iter().collect(),
        }
    }

    pub fn negate(p: Predicate) -> Self {
        Predicate::Not { not: Box::new(p) }
    }

    pub fn meta(key: &str, cmp: Comparison, value: impl Into<MetaValue>) -> Self {
        Predicate::Meta {
            key: key.into(),
            cmp,
            value: value.into(),
        }
    }

    pub fn validate(&self) -> Result<(), BadPredicate> {
        match self {
            Predicate::True | Predicate::Kind { .. } => Ok(()),
            Predicate::PathPrefix { prefix } => {
                if prefix == "/" || validate_path(prefix.strip_suffix('/').unwrap_or(prefix)).is_ok() {
                    Ok(())
                } else {
                    Err(BadPredicate(alloc::format!("path prefix `{prefix}` is not a logical path")))
                }
            }
            Predicate::HasKey { key } if key.is_empty() => Err(BadPredicate("empty metadata key".into())),
            Predicate::HasKey { .. } => Ok(()),
            Predicate::Meta { key, cmp, value } => {
                if key.is_empty() {
                    return Err(BadPredicate("empty metadata key".into()));
                }
                let ordered = matches!(value, MetaValue::Number(_) | MetaValue::String(_));
                match cmp {
                    Comparison::Eq | Comparison::Ne => Ok(()),
                    Comparison::Contains if matches!(value, MetaValue::String(_)) => Ok(()),
                    Comparison::Contains => Err(BadPredicate("contains needs a string operand".into())),
                    _ if ordered => Ok(()),
                    _ => Err(BadPredicate(alloc::format!(
                        "ordering comparison on a {} operand",
                        value.type_name()
                    ))),
                }
            }
            Predicate::And { all: ps } | Predicate::Or { any: ps } => ps.iter().try_for_each(Predicate::validate),
            Predicate::Not { not } => not.validate(),
        }
    }

    /// Evaluates against a record whose path is already resolved. Assumes
    /// [`Predicate::validate`] passed.
    pub fn matches(&self, record: &ItemRecord) -> bool {
        match self {
            Predicate::True => true,
            Predicate::Kind { kind } => record.kind == *kind,
            Predicate::PathPrefix { prefix } => has_path_prefix(&record.path, prefix),
            Predicate::HasKey { key } => record.metadata.contains_key(key),
            Predicate::Meta { key, cmp, value } => {
                let actual = record.metadata.get(key);
                match cmp {
                    Comparison::Eq => actual.is_some_and(|a| meta_eq(a, value)),
                    Comparison::Ne => !actual.is_some_and(|a| meta_eq(a, value)),
                    Comparison::Contains => actual.is_some_and(|a| contains(a, value)),
                    ordering => actual.and_then(|a| compare(a, value)).is_some_and(|o| match ordering {
                        Comparison::Lt => o == Ordering::Less,
                        Comparison::Le => o != Ordering::Greater,
                        Comparison::Gt => o == Ordering::Greater,
                        _ => o != Ordering::Less,
                    }),
                }
            }
            Predicate::And { all } => all.iter().all(|p| p.matches(record)),
            Predicate::Or { any } => any.iter().any(|p| p.matches(record)),
            Predicate::Not { not } => !not.matches(record),
        }
    }
}

fn meta_eq(a: &MetaValue, b: &MetaValue) -> bool {
    a == b
}

fn compare(a: &MetaValue, b: &MetaValue) -> Option<Ordering> {
    match (a, b) {
        (MetaValue::Number(x), MetaValue::Number(y)) => x.partial_cmp(y),
        (MetaValue::String(x), MetaValue::String(y)) => Some(x.as_str().cmp(y.as_str())),
        _ => None,
    }
}

fn contains(a: &MetaValue, needle: &MetaValue) -> bool {
    let Some(needle) = needle.as_str() else { return false };
    match a {
        MetaValue::String(s) => s.contains(needle),
        MetaValue::List(items) => items.iter().any(|i| i == needle),
        _ => false,
    }
}
