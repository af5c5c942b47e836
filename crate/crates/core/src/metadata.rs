use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// A free-form metadata value attached to a repository item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Bool(bool),
    Number(f64),
    String(String),
    List(Vec<String>),
}

impl MetaValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            MetaValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            MetaValue::Bool(_) => "bool",
            MetaValue::Number(_) => "number",
            MetaValue::String(_) => "string",
            MetaValue::List(_) => "list",
        }
    }

    /// Every string carried by the value (a string, or each list element).
    pub fn strings(&self) -> impl Iterator<Item = &str> {
        let (single, list): (Option<&str>, &[String]) = match self {
            MetaValue::String(s) => (Some(s.as_str()), &[]),
            MetaValue::List(items) => (None, items.as_slice()),
            _ => (None, &[]),
        };
        single.into_iter().chain(list.iter().map(String::as_str))
    }
}

impl From<&str> for MetaValue {
    fn from(s: &str) -> Self {
        MetaValue::String(s.into())
    }
}

impl From<String> for MetaValue {
    fn from(s: String) -> Self {
        MetaValue::String(s)
    }
}

impl From<f64> for MetaValue {
    fn from(n: f64) -> Self {
        MetaValue::Number(n)
    }
}

impl From<bool> for MetaValue {
    fn from(b: bool) -> Self {
        MetaValue::Bool(b)
    }
}

pub type Metadata = BTreeMap<String, MetaValue>;

/// Builds a [`Metadata`] map from string pairs.
pub fn string_metadata<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Metadata {
    pairs.into_iter().map(|(k, v)| (String::from(k), MetaValue::from(v))).collect()
}
