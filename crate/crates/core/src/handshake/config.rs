//! JSON node configuration for `serve` and `connect`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use super::keyfile::{decode_private_key, decode_public_key, read_private_key, read_public_key};
use super::{HandshakeConfig, HandshakeError, Role};
use crate::dual_sig::{DualKeypair, DualVerifyingKey};
use crate::qkd::KmeLink;
use crate::suites::suite_by_label;

/// A key given either as a key-file path (relative paths resolve against
/// the config file's directory) or as the hex dump of a key file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeySource {
    File(PathBuf),
    Hex(String),
}

impl KeySource {
    fn resolve(&self, base: &Path) -> PathBuf {
        match self {
            KeySource::File(p) if p.is_relative() => base.join(p),
            KeySource::File(p) => p.clone(),
            KeySource::Hex(_) => PathBuf::new(),
        }
    }

    fn hex_bytes(hex_str: &str) -> Result<Zeroizing<Vec<u8>>, HandshakeError> {
        hex::decode(hex_str.trim())
            .map(Zeroizing::new)
            .map_err(|e| HandshakeError::Config(format!("key hex: {e}")))
    }

    pub fn load_private(&self, base: &Path) -> Result<DualKeypair, HandshakeError> {
        let kp = match self {
            KeySource::File(_) => read_private_key(&self.resolve(base)),
            KeySource::Hex(h) => decode_private_key(&Self::hex_bytes(h)?),
        };
        kp.map_err(|e| HandshakeError::Config(format!("own_key: {e}")))
    }

    pub fn load_public(&self, base: &Path) -> Result<DualVerifyingKey, HandshakeError> {
        let vk = match self {
            KeySource::File(_) => read_public_key(&self.resolve(base)),
            KeySource::Hex(h) => decode_public_key(&Self::hex_bytes(h)?),
        };
        vk.map_err(|e| HandshakeError::Config(format!("peer key: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QkdSettings {
    pub kme_endpoint: String,
    pub own_sae_id: String,
    pub peer_sae_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_size_bits: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub suite: String,
    pub role: Role,
    /// Listen address for a responder, peer address for an initiator.
    pub address: String,
    pub own_key: KeySource,
    pub peer_keys: Vec<KeySource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qkd: Option<QkdSettings>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl NodeConfig {
    pub fn load(path: &Path) -> Result<Self, HandshakeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HandshakeError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: NodeConfig = serde_json::from_str(&text)
            .map_err(|e| HandshakeError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn handshake_config(&self) -> Result<HandshakeConfig, HandshakeError> {
        let suite =
            suite_by_label(&self.suite).map_err(|e| HandshakeError::Config(e.to_string()))?;
        let keypair = self.own_key.load_private(&self.base_dir)?;
        let peer_keys = self
            .peer_keys
            .iter()
            .map(|k| k.load_public(&self.base_dir))
            .collect::<Result<Vec<_>, _>>()?;
        if peer_keys.is_empty() {
            return Err(HandshakeError::Config("peer_keys must not be empty".into()));
        }
        let qkd = self.qkd.as_ref().map(|q| {
            let mut link = KmeLink::new(&q.kme_endpoint, &q.own_sae_id, &q.peer_sae_id);
            link.key_size_bits = q.key_size_bits;
            Arc::new(link) as Arc<dyn crate::qkd::QkdKeySource>
        });
        Ok(HandshakeConfig {
            suite,
            role: self.role,
            keypair,
            peer_keys,
            qkd,
        })
    }
}
