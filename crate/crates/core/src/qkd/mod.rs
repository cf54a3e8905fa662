//! ETSI GS QKD 014 key delivery: a blocking client and a mock KME backed
//! by deterministic, epoch-synchronised key pools.

mod api;
mod client;
mod kme;
mod pool;

use thiserror::Error;
use uuid::Uuid;

pub use api::{
    EpochAdvanced, ErrorBody, KeyContainer, KeyEntry, KeyIdEntry, KeyIdsRequest, KeyRequest,
    KmeStatus, EPOCH_HEADER,
};
pub use client::{client_get_dec_keys, client_get_enc_keys, client_get_status, KmeClient};
pub use kme::{router, ApiError, Kme, KmeConfig, KmeHandle, DEFAULT_MAX_KEY_PER_REQUEST};
pub use pool::{
    sim_advance_epoch, sim_generate_pool, DeliveryFlags, EpochPool, PoolError, QkdKey,
    LINK_SEED_LEN, MAX_KEY_SIZE_BITS,
};

#[derive(Debug, Error)]
pub enum QkdError {
    #[error("invalid KME configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("KME unreachable: {0}")]
    Network(String),
    #[error("KME returned {status}: {message}")]
    Protocol { status: u16, message: String },
    #[error("malformed KME response: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QkdError {
    /// HTTP status for protocol errors.
    pub fn status(&self) -> Option<u16> {
        match self {
            QkdError::Protocol { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// Where a handshake peer obtains its QKD key.
pub trait QkdKeySource: Send + Sync {
    /// Fetches a fresh key as the master SAE.
    fn master_key(&self) -> Result<QkdKey, QkdError>;
    /// Fetches the key the master announced under `key_id`.
    fn slave_key(&self, key_id: Uuid) -> Result<QkdKey, QkdError>;
}

/// One SAE's view of a KME link: its own id and the peer's.
#[derive(Debug, Clone)]
pub struct KmeLink {
    pub client: KmeClient,
    pub own_sae_id: String,
    pub peer_sae_id: String,
    pub key_size_bits: Option<u32>,
}

impl KmeLink {
    pub fn new(endpoint: &str, own_sae_id: &str, peer_sae_id: &str) -> Self {
        KmeLink {
            client: KmeClient::new(endpoint),
            own_sae_id: own_sae_id.to_string(),
            peer_sae_id: peer_sae_id.to_string(),
            key_size_bits: None,
        }
    }
}

fn single(mut keys: Vec<QkdKey>) -> Result<QkdKey, QkdError> {
    match keys.len() {
        1 => Ok(keys.remove(0)),
        n => Err(QkdError::Decode(format!("expected one key, got {n}"))),
    }
}

impl QkdKeySource for KmeLink {
    fn master_key(&self) -> Result<QkdKey, QkdError> {
        single(
            self.client
                .enc_keys(&self.peer_sae_id, 1, self.key_size_bits)?,
        )
    }

    fn slave_key(&self, key_id: Uuid) -> Result<QkdKey, QkdError> {
        single(self.client.dec_keys(&self.peer_sae_id, &[key_id])?)
    }
}
