use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::digest::Digest;
use crate::metadata::Metadata;
use crate::signing::SignatureRecord;

/// Metadata key every physical item must carry.
pub const ARCHIVAL_LOCATION_KEY: &str = "archival_location";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub Uuid);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl core::str::FromStr for ItemId {
    type Err = uuid::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse_str(s).map(ItemId)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    File,
    Collection,
    PhysicalItem,
}

impl ItemKind {
    pub const ALL: [ItemKind; 3] = [ItemKind::File, ItemKind::Collection, ItemKind::PhysicalItem];

    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::File => "file",
            ItemKind::Collection => "collection",
            ItemKind::PhysicalItem => "physical_item",
        }
    }
}

impl core::str::FromStr for ItemKind {
    type Err = crate::opm::UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| crate::opm::UnknownName(s.into()))
    }
}

/// Ordered by counter, then wall time, then site id.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RevisionStamp {
    pub counter: u64,
    pub wall_time_ms: u64,
    pub site_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: ItemId,
    pub path: String,
    pub kind: ItemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_digest: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bytes: Option<u64>,
    #[serde(default)]
    pub metadata: Metadata,
    pub revision: RevisionStamp,
    #[serde(default)]
    pub tombstone: bool,
    #[serde(default)]
    pub signatures: Vec<SignatureRecord>,
}

impl ItemRecord {
    pub fn is_live(&self) -> bool {
        !self.tombstone
    }

    pub fn name(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid logical path `{0}`")]
pub struct InvalidPath(pub String);

/// Checks the `/a/b/c` form: leading slash, non-empty segments, no `.` or
/// `..`, no trailing slash.
pub fn validate_path(path: &str) -> Result<(), InvalidPath> {
    let bad = || InvalidPath(path.into());
    let rest = path.strip_prefix('/').ok_or_else(bad)?;
    if rest.is_empty() {
        return Err(bad());
    }
    for seg in rest.split('/') {
        if seg.is_empty() || seg == "." || seg == ".." || seg.chars().any(char::is_control) {
            return Err(bad());
        }
    }
    Ok(())
}

/// Parent of a valid path; `None` for top-level entries.
pub fn parent_path(path: &str) -> Option<&str> {
    match path.rfind('/') {
        Some(0) | None => None,
        Some(i) => Some(&path[..i]),
    }
}

/// Segment-wise prefix test; `/` is a prefix of every path.
pub fn has_path_prefix(path: &str, prefix: &str) -> bool {
    if prefix == "/" {
        return true;
    }
    let prefix = prefix.strip_suffix('/').unwrap_or(prefix);
    path == prefix || path.strip_prefix(prefix).is_some_and(|rest| rest.starts_with('/'))
}
