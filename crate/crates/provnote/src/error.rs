use std::io;

use provnote_core::fabric::{FabricError, ItemId};
use provnote_core::glp::{GlpError, Violation};
use provnote_core::identity::IdentityError;
use provnote_core::query::{AnswerError, EvalError, QueryError};
use provnote_core::signing::Verdict;
use provnote_core::snapshot::SnapshotError;
use provnote_core::{BatchError, Digest, NodeKind};

use crate::content::ContentError;
use crate::notebook::CrashPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Content(#[from] ContentError),
    #[error("placement rejected: {0}")]
    Placement(#[from] GlpError),
    #[error("metadata rejected: {}", join(.0))]
    MetadataViolation(Vec<Violation>),
    #[error("influence {0} is not a live item")]
    UnknownInfluence(ItemId),
    #[error("provenance store unavailable: {0}")]
    ProvenanceUnavailable(String),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error("no {kind} node `{identifier}`")]
    UnknownNode { kind: NodeKind, identifier: String },
    #[error("artifact `{0}` does not name a repository item")]
    UnresolvedArtifact(String),
    #[error("no registered key for `{0}` matches")]
    UnknownSignerKey(String),
    #[error("signature rejected: {0:?}")]
    InvalidSignature(Verdict),
    #[error("payload {0} is missing from the chunk store")]
    MissingPayload(Digest),
    #[error("content {0} has not been transferred")]
    MissingContent(Digest),
    #[error("digest mismatch: expected {expected}, got {actual}")]
    DigestMismatch { expected: Digest, actual: Digest },
    #[error("peer unreachable: {0}")]
    PeerUnreachable(String),
    #[error("peer answered {status}: {body}")]
    Remote { status: u16, body: String },
    #[error(transparent)]
    BadIdentity(#[from] IdentityError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("corrupt {0}")]
    Corrupt(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("simulated crash at {0:?}")]
    SimulatedCrash(CrashPoint),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Process exit codes of the CLI.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const IO: i32 = 2;
    pub const INTEGRITY: i32 = 3;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Content(ContentError::Io(_))
            | Error::ProvenanceUnavailable(_)
            | Error::PeerUnreachable(_)
            | Error::Remote { status: 500.., .. }
            | Error::SimulatedCrash(_)
            | Error::Io(_) => exit::IO,
            Error::Content(ContentError::UnknownDigest(_)) => exit::VALIDATION,
            Error::Content(_)
            | Error::InvalidSignature(_)
            | Error::MissingPayload(_)
            | Error::MissingContent(_)
            | Error::DigestMismatch { .. }
            | Error::Snapshot(_)
            | Error::Corrupt(_)
            | Error::Json(_) => exit::INTEGRITY,
            Error::Fabric(FabricError::SequenceGap { .. } | FabricError::InvalidRecord(..)) => {
                exit::INTEGRITY
            }
            _ => exit::VALIDATION,
        }
    }
}
