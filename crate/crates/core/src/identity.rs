//! Request authentication by distinguished name and detached signature.
//!
//! A client signs `sha256(dn "\n" timestamp "\n" hex(request-digest))`, where
//! the request digest covers method, path with query, and body.

use alloc::format;
use alloc::string::String;

use ed25519_dalek::{Signature, Signer, SigningKey};

use crate::digest::{Digest, Hasher};
use crate::signing::KeyRegistry;

pub const DN_HEADER: &str = "x-identity-dn";
pub const TIMESTAMP_HEADER: &str = "x-identity-ts";
pub const SIGNATURE_HEADER: &str = "x-identity-sig";

/// Largest accepted distance between client and server clocks, in seconds.
pub const MAX_SKEW_SECS: i64 = 300;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityToken {
    pub dn: String,
    /// Unix seconds.
    pub timestamp: i64,
    pub signature: [u8; 64],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdentityError {
    #[error("malformed identity headers: {0}")]
    Malformed(&'static str),
    #[error("no key registered for `{0}`")]
    UnknownDn(String),
    #[error("timestamp is {0} s away from the server clock")]
    Stale(i64),
    #[error("identity signature does not verify")]
    BadSignature,
}

pub fn request_digest(method: &str, path_and_query: &str, body: &[u8]) -> Digest {
    let mut h = Hasher::new();
    h.update(method.as_bytes());
    h.update(b"\n");
    h.update(path_and_query.as_bytes());
    h.update(b"\n");
    h.update(body);
    h.finish()
}

fn message(dn: &str, timestamp: i64, request: &Digest) -> Digest {
    Digest::of(format!("{dn}\n{timestamp}\n{request}").as_bytes())
}

pub fn sign_request(key: &SigningKey, dn: &str, timestamp: i64, request: &Digest) -> IdentityToken {
    IdentityToken {
        dn: dn.into(),
        timestamp,
        signature: key.sign(message(dn, timestamp, request).as_bytes()).to_bytes(),
    }
}

impl IdentityToken {
    /// Header values in the order dn, timestamp, signature.
    pub fn header_values(&self) -> [String; 3] {
        [self.dn.clone(), format!("{}", self.timestamp), hex::encode(self.signature)]
    }

    pub fn from_headers(dn: &str, timestamp: &str, signature: &str) -> Result<Self, IdentityError> {
        if dn.is_empty() || dn.contains('\n') {
            return Err(IdentityError::Malformed("dn"));
        }
        let timestamp = timestamp.trim().parse().map_err(|_| IdentityError::Malformed("timestamp"))?;
        let mut sig = [0u8; 64];
        hex::decode_to_slice(signature.trim(), &mut sig).map_err(|_| IdentityError::Malformed("signature"))?;
        Ok(IdentityToken {
            dn: dn.into(),
            timestamp,
            signature: sig,
        })
    }

    pub fn verify(&self, registry: &KeyRegistry, now: i64, request: &Digest) -> Result<(), IdentityError> {
        let skew = self.timestamp.saturating_sub(now);
        if skew.abs() > MAX_SKEW_SECS {
            return Err(IdentityError::Stale(skew));
        }
        let key = registry.get(&self.dn).ok_or_else(|| IdentityError::UnknownDn(self.dn.clone()))?;
        key.verify_strict(
            message(&self.dn, self.timestamp, request).as_bytes(),
            &Signature::from_bytes(&self.signature),
        )
        .map_err(|_| IdentityError::BadSignature)
    }
}
