//! Declarative data model for a Good-Laboratory-Practice notebook.
//!
//! A [`DataModelSpec`] lists collection types, which child collections and
//! item types each may hold, and the metadata every item placed in it must
//! carry. The shipped default models studies and experiments, each divided
//! into the five stage collections.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::metadata::{MetaValue, Metadata};

pub const SCHEMA_VERSION: &str = "glp-spec/1";

/// Metadata key that names the type of an item or collection.
pub const TYPE_KEY: &str = "type";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Preparation,
    Execution,
    Evaluation,
    Interpretation,
    Archiving,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Preparation,
        Stage::Execution,
        Stage::Evaluation,
        Stage::Interpretation,
        Stage::Archiving,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Preparation => "preparation",
            Stage::Execution => "execution",
            Stage::Evaluation => "evaluation",
            Stage::Interpretation => "interpretation",
            Stage::Archiving => "archiving",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Stage {
    type Err = crate::opm::UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| crate::opm::UnknownName(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    String,
    Number,
    /// ISO-8601 calendar date, `YYYY-MM-DD`.
    Date,
    Enum(Vec<String>),
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::String => f.write_str("string"),
            ValueType::Number => f.write_str("number"),
            ValueType::Date => f.write_str("date (YYYY-MM-DD)"),
            ValueType::Enum(options) => write!(f, "one of {}", options.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRule {
    pub key: String,
    pub value_type: ValueType,
    pub mandatory: bool,
}

impl MetadataRule {
    pub fn mandatory(key: &str, value_type: ValueType) -> Self {
        MetadataRule {
            key: key.into(),
            value_type,
            mandatory: true,
        }
    }

    pub fn optional(key: &str, value_type: ValueType) -> Self {
        MetadataRule {
            key: key.into(),
            value_type,
            mandatory: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionType {
    #[serde(default)]
    pub allowed_child_collections: BTreeSet<String>,
    #[serde(default)]
    pub allowed_item_types: BTreeSet<String>,
    /// Rules for items placed directly in a collection of this type.
    #[serde(default)]
    pub metadata_rules: Vec<MetadataRule>,
    /// GLP stage recorded on processes that import into this collection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataModelSpec {
    pub schema: String,
    pub roots: BTreeSet<String>,
    pub collection_types: BTreeMap<String, CollectionType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Child<'a> {
    Collection(&'a str),
    Item(&'a str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    #[error("`{collection_type}` collections cannot be created at the repository root")]
    NotARoot { collection_type: String },
    #[error("`{parent}` collections cannot contain `{child}` collections")]
    ChildCollectionNotAllowed { parent: String, child: String },
    #[error("`{parent}` collections cannot contain `{item_type}` items")]
    ItemTypeNotAllowed { parent: String, item_type: String },
    #[error("mandatory metadata `{key}` is missing")]
    MissingMandatory { key: String },
    #[error("metadata `{key}` must be {expected}, found {found}")]
    WrongValueType { key: String, expected: String, found: String },
    #[error("metadata type `{found}` contradicts item type `{item_type}`")]
    ItemTypeMismatch { item_type: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GlpError {
    #[error("unknown collection type `{0}`")]
    UnknownCollectionType(String),
    #[error(transparent)]
    Violation(#[from] Violation),
    #[error("unsupported data model schema `{0}`")]
    UnsupportedSchema(String),
    #[error("inconsistent data model: {0}")]
    InvalidSpec(String),
}

/// Item types accepted by each stage collection of the default model.
pub const DEFAULT_STAGE_ITEMS: [(Stage, &[&str]); 5] = [
    (Stage::Preparation, &["study-plan", "manual"]),
    (Stage::Execution, &["raw-data", "instrument-reading", "physical-sample"]),
    (Stage::Evaluation, &["processed-data"]),
    (Stage::Interpretation, &["report", "publication-draft"]),
    (Stage::Archiving, &["archive-package"]),
];

pub const DEFAULT_ROOTS: [&str; 2] = ["study", "experiment"];

/// The shipped laboratory-notebook model.
pub fn default_glp_spec() -> DataModelSpec {
    let item_rules = || {
        alloc::vec![
            MetadataRule::mandatory("creator", ValueType::String),
            MetadataRule::mandatory("created", ValueType::Date),
            MetadataRule::mandatory(TYPE_KEY, ValueType::String),
        ]
    };
    let stages: BTreeSet<String> = Stage::ALL.iter().map(|s| String::from(s.as_str())).collect();
    let mut collection_types = BTreeMap::new();
    for root in DEFAULT_ROOTS {
        collection_types.insert(
            String::from(root),
            CollectionType {
                allowed_child_collections: stages.clone(),
                ..CollectionType::default()
            },
        );
    }
    for (stage, items) in DEFAULT_STAGE_ITEMS {
        collection_types.insert(
            String::from(stage.as_str()),
            CollectionType {
                allowed_child_collections: BTreeSet::new(),
                allowed_item_types: items.iter().map(|s| String::from(*s)).collect(),
                metadata_rules: item_rules(),
                stage: Some(stage),
            },
        );
    }
    DataModelSpec {
        schema: SCHEMA_VERSION.into(),
        roots: DEFAULT_ROOTS.iter().map(|s| String::from(*s)).collect(),
        collection_types,
    }
}

impl DataModelSpec {
    /// Checks the structural invariants: known schema, non-empty declared
    /// roots, declared child types, unique rule keys.
    pub fn check(&self) -> Result<(), GlpError> {
        if self.schema != SCHEMA_VERSION {
            return Err(GlpError::UnsupportedSchema(self.schema.clone()));
        }
        if self.roots.is_empty() {
            return Err(GlpError::InvalidSpec("no root collection types".into()));
        }
        for root in &self.roots {
            if !self.collection_types.contains_key(root) {
                return Err(GlpError::InvalidSpec(format!("root `{root}` is not declared")));
            }
        }
        for (name, ct) in &self.collection_types {
            for child in &ct.allowed_child_collections {
                if !self.collection_types.contains_key(child) {
                    return Err(GlpError::InvalidSpec(format!("`{name}` allows undeclared child `{child}`")));
                }
            }
            let mut keys = BTreeSet::new();
            for rule in &ct.metadata_rules {
                if !keys.insert(rule.key.as_str()) {
                    return Err(GlpError::InvalidSpec(format!("`{name}` repeats rule key `{}`", rule.key)));
                }
            }
        }
        Ok(())
    }

    pub fn collection_type(&self, name: &str) -> Result<&CollectionType, GlpError> {
        self.collection_types
            .get(name)
            .ok_or_else(|| GlpError::UnknownCollectionType(name.into()))
    }

    pub fn stage_of(&self, collection_type: &str) -> Option<Stage> {
        self.collection_types.get(collection_type).and_then(|c| c.stage)
    }

    pub fn validate_root(&self, collection_type: &str) -> Result<(), GlpError> {
        self.collection_type(collection_type)?;
        if self.roots.contains(collection_type) {
            Ok(())
        } else {
            Err(Violation::NotARoot {
                collection_type: collection_type.into(),
            }
            .into())
        }
    }

    pub fn validate_placement(&self, parent_type: &str, child: Child<'_>) -> Result<(), GlpError> {
        let parent = self.collection_type(parent_type)?;
        match child {
            Child::Collection(name) if !parent.allowed_child_collections.contains(name) => {
                Err(Violation::ChildCollectionNotAllowed {
                    parent: parent_type.into(),
                    child: name.into(),
                }
                .into())
            }
            Child::Item(item_type) if !parent.allowed_item_types.contains(item_type) => {
                Err(Violation::ItemTypeNotAllowed {
                    parent: parent_type.into(),
                    item_type: item_type.into(),
                }
                .into())
            }
            _ => Ok(()),
        }
    }

    /// One violation per missing mandatory key or mistyped value, plus one if
    /// a `type` entry disagrees with `item_type`. Empty means valid.
    pub fn validate_metadata(
        &self,
        collection_type: &str,
        item_type: &str,
        metadata: &Metadata,
    ) -> Result<Vec<Violation>, GlpError> {
        let ct = self.collection_type(collection_type)?;
        let mut out = Vec::new();
        for rule in &ct.metadata_rules {
            match metadata.get(&rule.key) {
                None if rule.mandatory => out.push(Violation::MissingMandatory { key: rule.key.clone() }),
                None => {}
                Some(value) => {
                    if !value_matches(&rule.value_type, value) {
                        out.push(Violation::WrongValueType {
                            key: rule.key.clone(),
                            expected: format!("{}", rule.value_type),
                            found: describe_value(value),
                        });
                    }
                }
            }
        }
        if let Some(found) = metadata.get(TYPE_KEY).and_then(MetaValue::as_str) {
            if found != item_type {
                out.push(Violation::ItemTypeMismatch {
                    item_type: item_type.into(),
                    found: found.into(),
                });
            }
        }
        Ok(out)
    }
}

fn describe_value(value: &MetaValue) -> String {
    match value {
        MetaValue::String(s) => format!("\"{s}\""),
        other => String::from(other.type_name()),
    }
}

fn value_matches(expected: &ValueType, value: &MetaValue) -> bool {
    match (expected, value) {
        (ValueType::String, MetaValue::String(_)) => true,
        (ValueType::Number, MetaValue::Number(n)) => n.is_finite(),
        (ValueType::Date, MetaValue::String(s)) => is_calendar_date(s),
        (ValueType::Enum(options), MetaValue::String(s)) => options.iter().any(|o| o == s),
        _ => false,
    }
}

/// `YYYY-MM-DD` with a real day of a real month (proleptic Gregorian).
pub fn is_calendar_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: core::ops::Range<usize>| -> Option<u32> {
        let mut n = 0u32;
        for &c in &b[r] {
            if !c.is_ascii_digit() {
                return None;
            }
            n = n * 10 + u32::from(c - b'0');
        }
        Some(n)
    };
    let (Some(year), Some(month), Some(day)) = (digits(0..4), digits(5..7), digits(8..10)) else {
        return false;
    };
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let days = match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if leap => 29,
        2 => 28,
        _ => return false,
    };
    (1..=days).contains(&day)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::string_metadata;
    use proptest::prelude::*;

    fn valid_meta() -> Metadata {
        string_metadata([("creator", "CN=Alice"), ("created", "2011-07-01"), ("type", "raw-data")])
    }

    #[test]
    fn study_has_five_stage_children() {
        let spec = default_glp_spec();
        let study = spec.collection_type("study").unwrap();
        assert_eq!(study.allowed_child_collections.len(), 5);
        for stage in Stage::ALL {
            assert!(study.allowed_child_collections.contains(stage.as_str()));
            assert_eq!(spec.stage_of(stage.as_str()), Some(stage));
        }
        assert_eq!(spec.roots, ["experiment".into(), "study".into()].into());
    }

    #[test]
    fn preparation_rejects_raw_data() {
        let spec = default_glp_spec();
        assert!(matches!(
            spec.validate_placement("preparation", Child::Item("raw-data")),
            Err(GlpError::Violation(Violation::ItemTypeNotAllowed { .. }))
        ));
        assert!(spec.validate_placement("preparation", Child::Item("manual")).is_ok());
    }

    #[test]
    fn default_spec_is_self_consistent() {
        default_glp_spec().check().unwrap();
    }

    #[test]
    fn placement_cases() {
        let spec = default_glp_spec();
        assert!(spec.validate_placement("study", Child::Collection("preparation")).is_ok());
        assert!(spec.validate_placement("experiment", Child::Collection("archiving")).is_ok());
        assert!(matches!(
            spec.validate_placement("study", Child::Collection("study")),
            Err(GlpError::Violation(Violation::ChildCollectionNotAllowed { .. }))
        ));
        assert_eq!(
            spec.validate_placement("Unknown", Child::Item("anything")),
            Err(GlpError::UnknownCollectionType("Unknown".into()))
        );
        assert!(spec.validate_root("study").is_ok());
        assert!(matches!(
            spec.validate_root("execution"),
            Err(GlpError::Violation(Violation::NotARoot { .. }))
        ));
    }

    #[test]
    fn missing_creator_is_one_violation() {
        let spec = default_glp_spec();
        let mut meta = valid_meta();
        meta.remove("creator");
        assert_eq!(
            spec.validate_metadata("execution", "raw-data", &meta).unwrap(),
            [Violation::MissingMandatory { key: "creator".into() }]
        );
    }

    #[test]
    fn bad_date_is_a_type_violation() {
        let spec = default_glp_spec();
        let mut meta = valid_meta();
        meta.insert("created".into(), "not-a-date".into());
        let v = spec.validate_metadata("execution", "raw-data", &meta).unwrap();
        assert!(matches!(v.as_slice(), [Violation::WrongValueType { key, .. }] if key == "created"));
        meta.insert("created".into(), MetaValue::Number(2011.0));
        assert_eq!(spec.validate_metadata("execution", "raw-data", &meta).unwrap().len(), 1);
    }

    #[test]
    fn complete_metadata_is_valid() {
        let spec = default_glp_spec();
        assert!(spec.validate_metadata("execution", "raw-data", &valid_meta()).unwrap().is_empty());
    }

    #[test]
    fn declared_type_must_match() {
        let spec = default_glp_spec();
        let v = spec.validate_metadata("execution", "instrument-reading", &valid_meta()).unwrap();
        assert_eq!(
            v,
            [Violation::ItemTypeMismatch {
                item_type: "instrument-reading".into(),
                found: "raw-data".into()
            }]
        );
    }

    #[test]
    fn enum_and_number_rules() {
        let mut spec = default_glp_spec();
        let rules = &mut spec.collection_types.get_mut("execution").unwrap().metadata_rules;
        rules.push(MetadataRule::optional("unit", ValueType::Enum(alloc::vec!["mg".into(), "ml".into()])));
        rules.push(MetadataRule::optional("volume", ValueType::Number));
        let mut meta = valid_meta();
        meta.insert("unit".into(), "ml".into());
        meta.insert("volume".into(), MetaValue::Number(2.5));
        assert!(spec.validate_metadata("execution", "raw-data", &meta).unwrap().is_empty());
        meta.insert("unit".into(), "kg".into());
        meta.insert("volume".into(), "lots".into());
        assert_eq!(spec.validate_metadata("execution", "raw-data", &meta).unwrap().len(), 2);
    }

    #[test]
    fn calendar_dates() {
        for ok in ["2011-07-01", "2000-02-29", "1999-12-31"] {
            assert!(is_calendar_date(ok), "{ok}");
        }
        for bad in ["1900-02-29", "2011-13-01", "2011-04-31", "2011-7-01", "20110701", "2011-07-01T00:00", ""] {
            assert!(!is_calendar_date(bad), "{bad}");
        }
    }

    #[test]
    fn check_catches_broken_specs() {
        let mut spec = default_glp_spec();
        spec.roots.insert("nowhere".into());
        assert!(matches!(spec.check(), Err(GlpError::InvalidSpec(_))));

        let mut spec = default_glp_spec();
        spec.roots.clear();
        assert!(spec.check().is_err());

        let mut spec = default_glp_spec();
        spec.collection_types
            .get_mut("execution")
            .unwrap()
            .metadata_rules
            .push(MetadataRule::optional("creator", ValueType::String));
        assert!(spec.check().is_err());

        let mut spec = default_glp_spec();
        spec.schema = "glp-spec/9".into();
        assert_eq!(spec.check(), Err(GlpError::UnsupportedSchema("glp-spec/9".into())));
    }

    #[test]
    fn serialized_form_is_stable() {
        let a = crate::canonical::to_canonical_json(&default_glp_spec()).unwrap();
        let b = crate::canonical::to_canonical_json(&default_glp_spec()).unwrap();
        assert_eq!(a, b);
        let back: DataModelSpec = serde_json::from_slice(&a).unwrap();
        assert_eq!(back, default_glp_spec());
    }

    proptest! {
        #[test]
        fn extra_keys_never_add_violations(
            drop_creator in any::<bool>(),
            extra in proptest::collection::btree_map("x_[a-z]{1,6}", "[a-z0-9]{0,6}", 0..6),
        ) {
            let spec = default_glp_spec();
            let mut meta = valid_meta();
            if drop_creator {
                meta.remove("creator");
            }
            let before = spec.validate_metadata("execution", "raw-data", &meta).unwrap();
            for (k, v) in extra {
                meta.insert(k, MetaValue::String(v));
            }
            let after = spec.validate_metadata("execution", "raw-data", &meta).unwrap();
            prop_assert_eq!(before, after);
        }
    }
}
