//! Detached signatures over item content and metadata.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::canonical::to_canonical_json;
use crate::digest::{Digest, Hasher};
use crate::metadata::Metadata;

pub const ED25519_SHA256: &str = "ed25519-sha256";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureRecord {
    pub signer_dn: String,
    pub algorithm: String,
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
    pub signed_digest: Digest,
    pub timestamp_ms: u64,
}

/// Digest of the content digest followed by the canonical metadata JSON.
/// Items without content contribute 32 zero bytes in its place.
pub fn signed_digest(content: Option<&Digest>, metadata: &Metadata) -> Digest {
    let mut h = Hasher::new();
    h.update(content.map_or(&[0u8; 32], |d| d.as_bytes()));
    h.update(&to_canonical_json(metadata).unwrap_or_default());
    h.finish()
}

pub fn sign(
    key: &SigningKey,
    signer_dn: &str,
    content: Option<&Digest>,
    metadata: &Metadata,
    timestamp_ms: u64,
) -> SignatureRecord {
    let digest = signed_digest(content, metadata);
    SignatureRecord {
        signer_dn: signer_dn.into(),
        algorithm: ED25519_SHA256.into(),
        signature: key.sign(digest.as_bytes()).to_bytes().to_vec(),
        signed_digest: digest,
        timestamp_ms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    /// Content or metadata changed since signing.
    DigestMismatch,
    BadSignature,
    UnknownSigner,
    UnsupportedAlgorithm,
}

impl Verdict {
    pub fn is_valid(self) -> bool {
        self == Verdict::Valid
    }
}

/// Checks `record` against the item as it is now. `content` must be the
/// digest recomputed from the stored payload, not the one on the record.
pub fn verify(record: &SignatureRecord, registry: &KeyRegistry, content: Option<&Digest>, metadata: &Metadata) -> Verdict {
    if record.algorithm != ED25519_SHA256 {
        return Verdict::UnsupportedAlgorithm;
    }
    let Some(key) = registry.get(&record.signer_dn) else {
        return Verdict::UnknownSigner;
    };
    let digest = signed_digest(content, metadata);
    if digest != record.signed_digest {
        return Verdict::DigestMismatch;
    }
    let Ok(sig) = Signature::from_slice(&record.signature) else {
        return Verdict::BadSignature;
    };
    match key.verify_strict(digest.as_bytes(), &sig) {
        Ok(()) => Verdict::Valid,
        Err(_) => Verdict::BadSignature,
    }
}

/// DN to hex-encoded Ed25519 public key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyRegistry(pub BTreeMap<String, String>);

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, dn: &str, key: &VerifyingKey) {
        self.0.insert(dn.into(), hex::encode(key.as_bytes()));
    }

    /// `None` if the DN is unknown or its entry is not a valid key.
    pub fn get(&self, dn: &str) -> Option<VerifyingKey> {
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(self.0.get(dn)?, &mut bytes).ok()?;
        VerifyingKey::from_bytes(&bytes).ok()
    }

    pub fn contains(&self, dn: &str) -> bool {
        self.get(dn).is_some()
    }
}

mod hex_bytes {
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
