//! Pull and push of change sets between sites.

use provnote_core::fabric::{ApplyReport, ChangeSet, SinceVector};
use provnote_core::Digest;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::FabricRepo;

/// The remote side of a sync.
pub trait Peer {
    fn since_vector(&self) -> Result<SinceVector>;
    fn changes_since(&self, since: &SinceVector) -> Result<ChangeSet>;
    fn apply_changes(&self, changes: &ChangeSet) -> Result<ApplyReport>;
    fn has_content(&self, digest: &Digest) -> Result<bool>;
    fn get_content(&self, digest: &Digest) -> Result<Vec<u8>>;
    fn put_content(&self, bytes: &[u8]) -> Result<Digest>;
}

impl Peer for FabricRepo {
    fn since_vector(&self) -> Result<SinceVector> {
        Ok(FabricRepo::since_vector(self))
    }

    fn changes_since(&self, since: &SinceVector) -> Result<ChangeSet> {
        Ok(FabricRepo::changes_since(self, since))
    }

    fn apply_changes(&self, changes: &ChangeSet) -> Result<ApplyReport> {
        FabricRepo::apply_changes(self, changes)
    }

    fn has_content(&self, digest: &Digest) -> Result<bool> {
        Ok(self.content().has(digest)?)
    }

    fn get_content(&self, digest: &Digest) -> Result<Vec<u8>> {
        Ok(self.content().get(digest)?)
    }

    fn put_content(&self, bytes: &[u8]) -> Result<Digest> {
        Ok(self.put_content(bytes)?.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    pub pulled: ApplyReport,
    pub pushed: ApplyReport,
    pub content_fetched: usize,
    pub content_sent: usize,
}

impl SyncReport {
    /// True when neither side had anything new for the other.
    pub fn is_quiet(&self) -> bool {
        self.pulled.applied == 0 && self.pushed.applied == 0
    }
}

/// Fetches the peer's unseen changes, their payloads first.
pub fn pull(local: &FabricRepo, peer: &dyn Peer) -> Result<(ApplyReport, usize)> {
    let changes = peer.changes_since(&local.since_vector())?;
    let mut fetched = 0;
    for digest in &changes.content_digests {
        if local.content().has(digest)? {
            continue;
        }
        let bytes = peer.get_content(digest)?;
        let (actual, _) = local.put_content(&bytes)?;
        if actual != *digest {
            return Err(Error::DigestMismatch {
                expected: *digest,
                actual,
            });
        }
        fetched += 1;
    }
    Ok((local.apply_changes(&changes)?, fetched))
}

/// Sends the changes the peer has not seen, uploading missing payloads first.
pub fn push(local: &FabricRepo, peer: &dyn Peer) -> Result<(ApplyReport, usize)> {
    let changes = local.changes_since(&peer.since_vector()?);
    if changes.entries.is_empty() {
        return Ok((ApplyReport::default(), 0));
    }
    let mut sent = 0;
    for digest in &changes.content_digests {
        if peer.has_content(digest)? {
            continue;
        }
        let accepted = peer.put_content(&local.content().get(digest)?)?;
        if accepted != *digest {
            return Err(Error::DigestMismatch {
                expected: *digest,
                actual: accepted,
            });
        }
        sent += 1;
    }
    Ok((peer.apply_changes(&changes)?, sent))
}

pub fn sync(local: &FabricRepo, peer: &dyn Peer) -> Result<SyncReport> {
    let (pulled, content_fetched) = pull(local, peer)?;
    let (pushed, content_sent) = push(local, peer)?;
    Ok(SyncReport {
        pulled,
        pushed,
        content_fetched,
        content_sent,
    })
}
