//! Binary key files: `"HKX1"`, a `u16` type tag, then `u32`-length-prefixed
//! components.
//!
//! Private files hold the Ed25519 seed, Ed25519 public key, ML-DSA-65
//! signing key and ML-DSA-65 verifying key. Public files hold the two
//! verifying keys.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use thiserror::Error;
use zeroize::Zeroizing;

use crate::dual_sig::{DualKeypair, DualVerifyingKey, SigError};

pub const KEYFILE_MAGIC: &[u8; 4] = b"HKX1";
pub const TAG_PRIVATE: u16 = 1;
pub const TAG_PUBLIC: u16 = 2;

#[derive(Debug, Error)]
pub enum KeyfileError {
    #[error("not a key file (bad magic)")]
    BadMagic,
    #[error("expected key file type {expected}, found {got}")]
    WrongType { expected: u16, got: u16 },
    #[error("truncated or malformed key file")]
    Truncated,
    #[error("{0} trailing bytes after key components")]
    Trailing(usize),
    #[error(transparent)]
    Key(#[from] SigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn encode(tag: u16, parts: &[&[u8]]) -> Zeroizing<Vec<u8>> {
    let mut out = Zeroizing::new(Vec::new());
    out.extend_from_slice(KEYFILE_MAGIC);
    out.extend_from_slice(&tag.to_be_bytes());
    for p in parts {
        out.extend_from_slice(&(p.len() as u32).to_be_bytes());
        out.extend_from_slice(p);
    }
    out
}

fn decode<const N: usize>(bytes: &[u8], tag: u16) -> Result<[&[u8]; N], KeyfileError> {
    let rest = bytes
        .strip_prefix(KEYFILE_MAGIC.as_slice())
        .ok_or(KeyfileError::BadMagic)?;
    let (tag_bytes, mut rest) = rest.split_at_checked(2).ok_or(KeyfileError::Truncated)?;
    let got = u16::from_be_bytes([tag_bytes[0], tag_bytes[1]]);
    if got != tag {
        return Err(KeyfileError::WrongType { expected: tag, got });
    }
    let mut parts = [&[][..]; N];
    for part in parts.iter_mut() {
        let (len, tail) = rest.split_at_checked(4).ok_or(KeyfileError::Truncated)?;
        let len = u32::from_be_bytes([len[0], len[1], len[2], len[3]]) as usize;
        let (p, tail) = tail.split_at_checked(len).ok_or(KeyfileError::Truncated)?;
        *part = p;
        rest = tail;
    }
    if !rest.is_empty() {
        return Err(KeyfileError::Trailing(rest.len()));
    }
    Ok(parts)
}

pub fn encode_private_key(kp: &DualKeypair) -> Zeroizing<Vec<u8>> {
    let vk = kp.verifying_key();
    encode(
        TAG_PRIVATE,
        &[
            &kp.classical_signing_bytes()[..],
            &vk.classical,
            &kp.pq_signing_bytes(),
            &vk.pq,
        ],
    )
}

pub fn decode_private_key(bytes: &[u8]) -> Result<DualKeypair, KeyfileError> {
    let [cs, cv, ps, pv] = decode::<4>(bytes, TAG_PRIVATE)?;
    Ok(DualKeypair::from_components(cs, cv, ps, pv)?)
}

pub fn encode_public_key(vk: &DualVerifyingKey) -> Vec<u8> {
    encode(TAG_PUBLIC, &[&vk.classical, &vk.pq]).to_vec()
}

pub fn decode_public_key(bytes: &[u8]) -> Result<DualVerifyingKey, KeyfileError> {
    let [c, p] = decode::<2>(bytes, TAG_PUBLIC)?;
    Ok(DualVerifyingKey::new(c, p)?)
}

/// Writes a private key file readable only by its owner where the platform
/// supports Unix permissions.
pub fn write_private_key(path: &Path, kp: &DualKeypair) -> Result<(), KeyfileError> {
    let mut opts = OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut file = opts.open(path)?;
    #[cfg(unix)]
    {
        // `mode` only applies on creation; tighten an existing file too.
        use std::os::unix::fs::PermissionsExt;
        file.set_permissions(std::fs::Permissions::from_mode(0o600))?;
    }
    file.write_all(&encode_private_key(kp))?;
    file.sync_all()?;
    Ok(())
}

pub fn read_private_key(path: &Path) -> Result<DualKeypair, KeyfileError> {
    let bytes = Zeroizing::new(std::fs::read(path)?);
    decode_private_key(&bytes)
}

pub fn write_public_key(path: &Path, vk: &DualVerifyingKey) -> Result<(), KeyfileError> {
    std::fs::write(path, encode_public_key(vk))?;
    Ok(())
}

pub fn read_public_key(path: &Path) -> Result<DualVerifyingKey, KeyfileError> {
    decode_public_key(&std::fs::read(path)?)
}
