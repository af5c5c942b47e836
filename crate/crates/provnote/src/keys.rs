//! Identity files and the registry of public keys.

use std::path::Path;

use ed25519_dalek::SigningKey;
use provnote_core::signing::KeyRegistry;
use rand_core::OsRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::{read_json, write_json_atomic};

/// A principal's DN and secret key, as stored on disk.
#[derive(Clone, Serialize, Deserialize)]
pub struct Identity {
    pub dn: String,
    #[serde(with = "hex_key")]
    pub secret_key: SigningKey,
}

impl std::fmt::Debug for Identity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Identity")
            .field("dn", &self.dn)
            .finish_non_exhaustive()
    }
}

impl Identity {
    pub fn generate(dn: &str) -> Self {
        Identity {
            dn: dn.into(),
            secret_key: SigningKey::generate(&mut OsRng),
        }
    }

    /// Deterministic identity for tests and fixtures.
    pub fn from_seed(dn: &str, seed: [u8; 32]) -> Self {
        Identity {
            dn: dn.into(),
            secret_key: SigningKey::from_bytes(&seed),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path).map_err(Error::from)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_atomic(path, self)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))?;
        }
        Ok(())
    }
}

pub fn load_registry(path: &Path) -> Result<KeyRegistry> {
    if !path.exists() {
        return Ok(KeyRegistry::default());
    }
    read_json(path).map_err(Error::from)
}

pub fn save_registry(path: &Path, registry: &KeyRegistry) -> Result<()> {
    Ok(write_json_atomic(path, registry)?)
}

mod hex_key {
    use ed25519_dalek::SigningKey;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(key: &SigningKey, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(key.to_bytes()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SigningKey, D::Error> {
        let text = String::deserialize(d)?;
        let bytes: [u8; 32] = hex::decode(&text)
            .map_err(D::Error::custom)?
            .try_into()
            .map_err(|_| D::Error::custom("secret key must be 32 bytes"))?;
        Ok(SigningKey::from_bytes(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_registry_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let id = Identity::generate("CN=Alice,O=Lab");
        id.save(&dir.path().join("identity.json")).unwrap();
        let back = Identity::load(&dir.path().join("identity.json")).unwrap();
        assert_eq!(back.secret_key.to_bytes(), id.secret_key.to_bytes());

        let reg_path = dir.path().join("keys.json");
        assert!(load_registry(&reg_path)
            .unwrap()
            .get("CN=Alice,O=Lab")
            .is_none());
        let mut reg = KeyRegistry::default();
        reg.register(&id.dn, &id.secret_key.verifying_key());
        save_registry(&reg_path, &reg).unwrap();
        assert_eq!(
            load_registry(&reg_path).unwrap().get(&id.dn),
            Some(id.secret_key.verifying_key())
        );
    }
}
