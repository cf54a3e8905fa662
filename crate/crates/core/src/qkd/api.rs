//! JSON bodies of the ETSI GS QKD 014 key delivery interface.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use uuid::Uuid;
use zeroize::Zeroizing;

use super::pool::QkdKey;

/// Response header carrying the epoch the delivered keys belong to.
pub const EPOCH_HEADER: &str = "x-qkd-epoch";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeStatus {
    pub source_kme_id: String,
    pub target_kme_id: String,
    pub master_sae_id: String,
    pub slave_sae_id: String,
    pub key_size: u32,
    pub stored_key_count: u64,
    pub max_key_count: u64,
    pub max_key_per_request: u64,
}

fn default_number() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRequest {
    #[serde(default = "default_number")]
    pub number: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    #[serde(rename = "key_ID")]
    pub key_id: Uuid,
    pub key: String,
}

impl KeyEntry {
    pub fn encode(key: &QkdKey) -> Self {
        KeyEntry {
            key_id: key.key_id,
            key: BASE64.encode(&key.key[..]),
        }
    }

    pub fn decode(&self, epoch: u64) -> Result<QkdKey, base64::DecodeError> {
        Ok(QkdKey {
            key_id: self.key_id,
            key: Zeroizing::new(BASE64.decode(&self.key)?),
            epoch,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyContainer {
    pub keys: Vec<KeyEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyIdEntry {
    #[serde(rename = "key_ID")]
    pub key_id: Uuid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyIdsRequest {
    #[serde(rename = "key_IDs")]
    pub key_ids: Vec<KeyIdEntry>,
}

impl KeyIdsRequest {
    pub fn new(ids: &[Uuid]) -> Self {
        KeyIdsRequest {
            key_ids: ids.iter().map(|&key_id| KeyIdEntry { key_id }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochAdvanced {
    pub epoch: u64,
}
