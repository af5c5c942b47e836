//! Content-addressed payload storage in fixed-size chunks.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use provnote_core::digest::Hasher;
use provnote_core::fabric::{FileManifest, CHUNK_SIZE};
use provnote_core::Digest;

use crate::files::{read_json, write_atomic, write_json_atomic};

#[derive(Debug, thiserror::Error)]
pub enum ContentError {
    #[error("unknown content digest {0}")]
    UnknownDigest(Digest),
    #[error("chunk {index} of {digest} is missing")]
    ChunkMissing { digest: Digest, index: usize },
    #[error("chunk {index} of {digest} does not match its digest")]
    ChunkCorrupt { digest: Digest, index: usize },
    #[error("content of {digest} hashes to {actual}")]
    Mismatch { digest: Digest, actual: Digest },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Raw storage for chunks and file manifests, both keyed by digest.
pub trait ChunkStore: Send + Sync {
    /// Stores a chunk unless present; reports whether it was new.
    fn put_chunk(&self, digest: &Digest, bytes: &[u8]) -> io::Result<bool>;
    fn get_chunk(&self, digest: &Digest) -> io::Result<Option<Vec<u8>>>;
    fn put_manifest(&self, manifest: &FileManifest) -> io::Result<()>;
    fn get_manifest(&self, digest: &Digest) -> io::Result<Option<FileManifest>>;
    fn chunk_count(&self) -> io::Result<usize>;
}

/// Chunks under `<root>/chunks/<2 hex>/<hex>`, manifests under
/// `<root>/files/<hex>.json`.
pub struct FsChunkStore {
    root: PathBuf,
}

impl FsChunkStore {
    pub fn open(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root.join("chunks"))?;
        fs::create_dir_all(root.join("files"))?;
        Ok(FsChunkStore { root: root.into() })
    }

    pub fn chunk_path(&self, digest: &Digest) -> PathBuf {
        let hex = digest.to_hex();
        self.root.join("chunks").join(&hex[..2]).join(hex)
    }

    fn manifest_path(&self, digest: &Digest) -> PathBuf {
        self.root
            .join("files")
            .join(format!("{}.json", digest.to_hex()))
    }
}

impl ChunkStore for FsChunkStore {
    fn put_chunk(&self, digest: &Digest, bytes: &[u8]) -> io::Result<bool> {
        let path = self.chunk_path(digest);
        if path.exists() {
            return Ok(false);
        }
        write_atomic(&path, bytes)?;
        Ok(true)
    }

    fn get_chunk(&self, digest: &Digest) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.chunk_path(digest)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn put_manifest(&self, manifest: &FileManifest) -> io::Result<()> {
        let path = self.manifest_path(&manifest.digest);
        if path.exists() {
            return Ok(());
        }
        write_json_atomic(&path, manifest)
    }

    fn get_manifest(&self, digest: &Digest) -> io::Result<Option<FileManifest>> {
        let path = self.manifest_path(digest);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    fn chunk_count(&self) -> io::Result<usize> {
        let mut n = 0;
        for shard in fs::read_dir(self.root.join("chunks"))? {
            let shard = shard?;
            if shard.file_type()?.is_dir() {
                n += fs::read_dir(shard.path())?
                    .filter_map(|e| e.ok())
                    .filter(|e| !e.file_name().to_string_lossy().contains(".tmp-"))
                    .count();
            }
        }
        Ok(n)
    }
}

#[derive(Default)]
pub struct MemChunkStore {
    chunks: Mutex<HashMap<Digest, Vec<u8>>>,
    manifests: Mutex<HashMap<Digest, FileManifest>>,
}

impl MemChunkStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn remove_chunk(&self, digest: &Digest) -> bool {
        self.chunks.lock().unwrap().remove(digest).is_some()
    }

    /// Applies `f` to a stored chunk in place; for fault-injection tests.
    pub fn tamper(&self, digest: &Digest, f: impl FnOnce(&mut Vec<u8>)) -> bool {
        self.chunks.lock().unwrap().get_mut(digest).map(f).is_some()
    }
}

impl ChunkStore for MemChunkStore {
    fn put_chunk(&self, digest: &Digest, bytes: &[u8]) -> io::Result<bool> {
        let mut chunks = self.chunks.lock().unwrap();
        if chunks.contains_key(digest) {
            return Ok(false);
        }
        chunks.insert(*digest, bytes.to_vec());
        Ok(true)
    }

    fn get_chunk(&self, digest: &Digest) -> io::Result<Option<Vec<u8>>> {
        Ok(self.chunks.lock().unwrap().get(digest).cloned())
    }

    fn put_manifest(&self, manifest: &FileManifest) -> io::Result<()> {
        self.manifests
            .lock()
            .unwrap()
            .entry(manifest.digest)
            .or_insert_with(|| manifest.clone());
        Ok(())
    }

    fn get_manifest(&self, digest: &Digest) -> io::Result<Option<FileManifest>> {
        Ok(self.manifests.lock().unwrap().get(digest).cloned())
    }

    fn chunk_count(&self) -> io::Result<usize> {
        Ok(self.chunks.lock().unwrap().len())
    }
}

/// Splits payloads into [`CHUNK_SIZE`] chunks and reassembles them.
#[derive(Clone)]
pub struct ContentStore {
    chunks: Arc<dyn ChunkStore>,
}

impl ContentStore {
    pub fn new(chunks: Arc<dyn ChunkStore>) -> Self {
        ContentStore { chunks }
    }

    pub fn in_memory() -> Self {
        Self::new(Arc::new(MemChunkStore::new()))
    }

    pub fn chunks(&self) -> &Arc<dyn ChunkStore> {
        &self.chunks
    }

    pub fn put_bytes(&self, bytes: &[u8]) -> Result<(Digest, u64), ContentError> {
        self.put_reader(bytes)
    }

    /// Streams `reader` into the store. Storing the same bytes twice adds
    /// nothing.
    pub fn put_reader(&self, mut reader: impl Read) -> Result<(Digest, u64), ContentError> {
        let mut whole = Hasher::new();
        let mut chunks = Vec::new();
        let mut size = 0u64;
        let mut buf = vec![0u8; CHUNK_SIZE];
        loop {
            let filled = fill(&mut reader, &mut buf)?;
            if filled == 0 {
                break;
            }
            let chunk = &buf[..filled];
            whole.update(chunk);
            let d = Digest::of(chunk);
            self.chunks.put_chunk(&d, chunk)?;
            chunks.push(d);
            size += filled as u64;
            if filled < CHUNK_SIZE {
                break;
            }
        }
        let digest = whole.finish();
        self.chunks.put_manifest(&FileManifest {
            digest,
            size,
            chunks,
        })?;
        Ok((digest, size))
    }

    pub fn has(&self, digest: &Digest) -> Result<bool, ContentError> {
        Ok(self.chunks.get_manifest(digest)?.is_some())
    }

    pub fn manifest(&self, digest: &Digest) -> Result<FileManifest, ContentError> {
        self.chunks
            .get_manifest(digest)?
            .ok_or(ContentError::UnknownDigest(*digest))
    }

    /// Writes the payload to `out`, checking every chunk and the whole-file
    /// digest on the way.
    pub fn copy_to(&self, digest: &Digest, mut out: impl Write) -> Result<u64, ContentError> {
        let manifest = self.manifest(digest)?;
        let mut whole = Hasher::new();
        for (index, chunk_digest) in manifest.chunks.iter().enumerate() {
            let chunk = self
                .chunks
                .get_chunk(chunk_digest)?
                .ok_or(ContentError::ChunkMissing {
                    digest: *digest,
                    index,
                })?;
            if Digest::of(&chunk) != *chunk_digest {
                return Err(ContentError::ChunkCorrupt {
                    digest: *digest,
                    index,
                });
            }
            whole.update(&chunk);
            out.write_all(&chunk)?;
        }
        let actual = whole.finish();
        if actual != *digest {
            return Err(ContentError::Mismatch {
                digest: *digest,
                actual,
            });
        }
        Ok(manifest.size)
    }

    pub fn get(&self, digest: &Digest) -> Result<Vec<u8>, ContentError> {
        let mut out = Vec::new();
        self.copy_to(digest, &mut out)?;
        Ok(out)
    }

    /// Hashes the stored bytes as they are, without trusting chunk names.
    pub fn recompute_digest(&self, digest: &Digest) -> Result<Digest, ContentError> {
        let manifest = self.manifest(digest)?;
        let mut whole = Hasher::new();
        for (index, chunk_digest) in manifest.chunks.iter().enumerate() {
            let chunk = self
                .chunks
                .get_chunk(chunk_digest)?
                .ok_or(ContentError::ChunkMissing {
                    digest: *digest,
                    index,
                })?;
            whole.update(&chunk);
        }
        Ok(whole.finish())
    }
}

fn fill(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}
