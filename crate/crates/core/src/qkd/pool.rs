//! Deterministic epoch key pools shared by a pair of linked KMEs.

use std::collections::HashMap;

use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;
use zeroize::Zeroizing;

use crate::hybrid_kex::kdf2_sha256_into;

pub const LINK_SEED_LEN: usize = 32;

/// Largest key the simulator hands out, in bits.
pub const MAX_KEY_SIZE_BITS: u32 = 65_536;

const KEY_ID_LABEL: &[u8] = b"hybridkex qkd key_ID";

#[derive(Clone, PartialEq, Eq)]
pub struct QkdKey {
    pub key_id: Uuid,
    pub key: Zeroizing<Vec<u8>>,
    pub epoch: u64,
}

impl std::fmt::Debug for QkdKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QkdKey")
            .field("key_id", &self.key_id)
            .field("key_len", &self.key.len())
            .field("epoch", &self.epoch)
            .finish()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PoolError {
    #[error("insufficient keys: requested {requested}, available {available}")]
    InsufficientKeys { requested: usize, available: usize },
    #[error("key_ID {0} not found")]
    UnknownKey(Uuid),
    #[error("key_ID {0} already consumed")]
    AlreadyConsumed(Uuid),
    #[error("key_ID {0} appears more than once in the request")]
    DuplicateKeyId(Uuid),
    #[error("key size {0} bits is not supported")]
    UnsupportedSize(u32),
    #[error("a pool must hold at least one key")]
    EmptyPool,
    #[error("epoch counter exhausted")]
    EpochOverflow,
}

/// Which SAEs have received a given key.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeliveryFlags {
    pub master: bool,
    pub slave: bool,
}

pub struct EpochPool {
    link_seed: Zeroizing<[u8; LINK_SEED_LEN]>,
    epoch: u64,
    key_size_bits: u32,
    keys: Vec<QkdKey>,
    flags: Vec<DeliveryFlags>,
    index: HashMap<Uuid, usize>,
}

impl std::fmt::Debug for EpochPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EpochPool")
            .field("epoch", &self.epoch)
            .field("key_size_bits", &self.key_size_bits)
            .field("max_key_count", &self.keys.len())
            .field("stored_key_count", &self.stored_key_count())
            .finish()
    }
}

fn key_id(link_seed: &[u8], epoch: u64, index: u32) -> Uuid {
    let digest = Sha256::new()
        .chain_update(KEY_ID_LABEL)
        .chain_update(link_seed)
        .chain_update(epoch.to_be_bytes())
        .chain_update(index.to_be_bytes())
        .finalize();
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    uuid::Builder::from_sha1_bytes(bytes).into_uuid()
}

fn key_bytes(link_seed: &[u8], epoch: u64, index: u32, len: usize) -> Zeroizing<Vec<u8>> {
    let mut key = Zeroizing::new(vec![0u8; len]);
    kdf2_sha256_into(
        &[link_seed, &epoch.to_be_bytes(), &index.to_be_bytes()],
        &mut key[..],
    )
    .expect("key sizes are capped far below the KDF2 output bound");
    key
}

pub fn validate_key_size(size_bits: u32) -> Result<(), PoolError> {
    if size_bits == 0 || size_bits % 8 != 0 || size_bits > MAX_KEY_SIZE_BITS {
        return Err(PoolError::UnsupportedSize(size_bits));
    }
    Ok(())
}

/// Builds the pool for `(link_seed, epoch)`. Key `i` is
/// `KDF2(link_seed || epoch || i, size_bits / 8)` and its identifier is a
/// version-5 style UUID taken from a SHA-256 digest of the same tuple.
pub fn sim_generate_pool(
    link_seed: &[u8; LINK_SEED_LEN],
    epoch: u64,
    count: usize,
    size_bits: u32,
) -> Result<EpochPool, PoolError> {
    if count == 0 || count > u32::MAX as usize {
        return Err(PoolError::EmptyPool);
    }
    validate_key_size(size_bits)?;
    let len = (size_bits / 8) as usize;
    let mut keys = Vec::with_capacity(count);
    let mut index = HashMap::with_capacity(count);
    for i in 0..count as u32 {
        let id = key_id(link_seed, epoch, i);
        index.insert(id, i as usize);
        keys.push(QkdKey {
            key_id: id,
            key: key_bytes(link_seed, epoch, i, len),
            epoch,
        });
    }
    Ok(EpochPool {
        link_seed: Zeroizing::new(*link_seed),
        epoch,
        key_size_bits: size_bits,
        keys,
        flags: vec![DeliveryFlags::default(); count],
        index,
    })
}

/// Replaces `pool` with the next epoch's pool. Keys left in the old pool are
/// no longer served.
pub fn sim_advance_epoch(pool: &EpochPool) -> Result<EpochPool, PoolError> {
    let next = pool.epoch.checked_add(1).ok_or(PoolError::EpochOverflow)?;
    sim_generate_pool(&pool.link_seed, next, pool.keys.len(), pool.key_size_bits)
}

impl EpochPool {
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn key_size_bits(&self) -> u32 {
        self.key_size_bits
    }

    pub fn max_key_count(&self) -> usize {
        self.keys.len()
    }

    /// Keys not yet delivered to the master SAE.
    pub fn stored_key_count(&self) -> usize {
        self.flags.iter().filter(|f| !f.master).count()
    }

    pub fn keys(&self) -> &[QkdKey] {
        &self.keys
    }

    pub fn flags(&self, key_id: &Uuid) -> Option<DeliveryFlags> {
        self.index.get(key_id).map(|&i| self.flags[i])
    }

    /// Hands out the next `number` keys not yet delivered to the master SAE.
    /// Nothing is marked unless the whole request can be served.
    pub fn take_enc_keys(&mut self, number: usize) -> Result<Vec<QkdKey>, PoolError> {
        let available: Vec<usize> = self
            .flags
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.master)
            .map(|(i, _)| i)
            .take(number)
            .collect();
        if available.len() < number {
            return Err(PoolError::InsufficientKeys {
                requested: number,
                available: self.stored_key_count(),
            });
        }
        Ok(available
            .into_iter()
            .map(|i| {
                self.flags[i].master = true;
                self.keys[i].clone()
            })
            .collect())
    }

    /// Returns the keys named by `ids` to the slave SAE. The request is
    /// validated in full before any key is marked.
    pub fn take_dec_keys(&mut self, ids: &[Uuid]) -> Result<Vec<QkdKey>, PoolError> {
        let mut positions = Vec::with_capacity(ids.len());
        for id in ids {
            let &i = self.index.get(id).ok_or(PoolError::UnknownKey(*id))?;
            if self.flags[i].slave {
                return Err(PoolError::AlreadyConsumed(*id));
            }
            if positions.contains(&i) {
                return Err(PoolError::DuplicateKeyId(*id));
            }
            positions.push(i);
        }
        Ok(positions
            .into_iter()
            .map(|i| {
                self.flags[i].slave = true;
                self.keys[i].clone()
            })
            .collect())
    }
}
