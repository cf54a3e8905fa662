//! KDF2 (ISO 18033-2) over SHA-256 and the session-key split.

use sha2::{Digest, Sha256};
use zeroize::Zeroizing;

use super::KexError;

pub const SHA256_LEN: usize = 32;

/// Largest output KDF2 can produce: the 32-bit counter runs from 1 to
/// 2^32 - 1.
pub const KDF2_MAX_OUTPUT: u64 = (u32::MAX as u64) * SHA256_LEN as u64;

pub const SESSION_KEY_LEN: usize = 32;

/// KDF2 with SHA-256: `T(1) || T(2) || ...` truncated to `out_len`, where
/// `T(i) = SHA-256(z || I2OSP(i, 4))`.
pub fn kdf2_sha256(z: &[u8], out_len: usize) -> Result<Vec<u8>, KexError> {
    let mut out = vec![0u8; out_len];
    kdf2_sha256_into(&[z], &mut out)?;
    Ok(out)
}

/// KDF2 over a seed given as consecutive parts, written into `out`.
pub(crate) fn kdf2_sha256_into(z_parts: &[&[u8]], out: &mut [u8]) -> Result<(), KexError> {
    if out.len() as u64 > KDF2_MAX_OUTPUT {
        return Err(KexError::OutputTooLong(out.len() as u64));
    }
    let mut seed = Sha256::new();
    for part in z_parts {
        seed.update(part);
    }
    for (i, chunk) in out.chunks_mut(SHA256_LEN).enumerate() {
        let counter = (i as u32) + 1;
        let mut h = seed.clone();
        h.update(counter.to_be_bytes());
        let block = h.finalize();
        chunk.copy_from_slice(&block[..chunk.len()]);
    }
    Ok(())
}

/// Symmetric keys released by a completed key exchange.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKeys {
    pub enc_key: Zeroizing<[u8; SESSION_KEY_LEN]>,
    pub mac_key: Zeroizing<[u8; SESSION_KEY_LEN]>,
}

impl std::fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SessionKeys(fingerprint={})", self.fingerprint())
    }
}

impl SessionKeys {
    /// Non-secret identifier of the key pair, safe to log and compare
    /// across processes.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::new()
            .chain_update(b"hybridkex session fingerprint")
            .chain_update(&self.enc_key[..])
            .chain_update(&self.mac_key[..])
            .finalize();
        hex::encode(&digest[..16])
    }
}

/// `okm = KDF2(ikm || transcript_hash, 64)`; the first half is the
/// encryption key and the second half the MAC key.
pub fn derive_session_keys(
    ikm: &[u8],
    transcript_hash: &[u8; SHA256_LEN],
) -> Result<SessionKeys, KexError> {
    if ikm.is_empty() {
        return Err(KexError::EmptyIkm);
    }
    let mut okm = Zeroizing::new([0u8; 2 * SESSION_KEY_LEN]);
    kdf2_sha256_into(&[ikm, &transcript_hash[..]], &mut okm[..])?;
    let mut enc_key = Zeroizing::new([0u8; SESSION_KEY_LEN]);
    let mut mac_key = Zeroizing::new([0u8; SESSION_KEY_LEN]);
    enc_key.copy_from_slice(&okm[..SESSION_KEY_LEN]);
    mac_key.copy_from_slice(&okm[SESSION_KEY_LEN..]);
    Ok(SessionKeys { enc_key, mac_key })
}
