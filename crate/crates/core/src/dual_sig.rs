//! Dual classical + post-quantum signatures (Ed25519 and ML-DSA-65).
//!
//! Both components sign the same message bytes. A dual signature verifies
//! only if both components verify; both checks always run.

use ed25519_dalek::Signer as _;
use ml_dsa::signature::Verifier as _;
use ml_dsa::{EncodedSignature, EncodedVerifyingKey, KeyGen, MlDsa65};
use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::Zeroizing;

pub const ED25519_PUBLIC_LEN: usize = 32;
pub const ED25519_SECRET_LEN: usize = 32;
pub const ED25519_SIG_LEN: usize = 64;
pub const MLDSA65_PUBLIC_LEN: usize = 1952;
pub const MLDSA65_SECRET_LEN: usize = 4032;
pub const MLDSA65_SIG_LEN: usize = 3309;
/// Wire length of `classical_sig || pq_sig`.
pub const DUAL_SIG_LEN: usize = ED25519_SIG_LEN + MLDSA65_SIG_LEN;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SigError {
    #[error("malformed {0} signature encoding")]
    MalformedSignature(&'static str),
    #[error("malformed {0} key encoding")]
    MalformedKey(&'static str),
    #[error("{0} key components do not match")]
    KeyMismatch(&'static str),
    #[error("signature rejected (Ed25519 valid: {classical_ok}, ML-DSA-65 valid: {pq_ok})")]
    Rejected { classical_ok: bool, pq_ok: bool },
}

/// Verifying halves of a dual keypair; these are what peers pin.
#[derive(Clone, PartialEq, Eq)]
pub struct DualVerifyingKey {
    pub classical: [u8; ED25519_PUBLIC_LEN],
    pub pq: Vec<u8>,
}

impl std::fmt::Debug for DualVerifyingKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DualVerifyingKey({})", hex::encode(self.classical))
    }
}

impl DualVerifyingKey {
    pub fn new(classical: &[u8], pq: &[u8]) -> Result<Self, SigError> {
        let classical: [u8; ED25519_PUBLIC_LEN] = classical
            .try_into()
            .map_err(|_| SigError::MalformedKey("Ed25519"))?;
        if pq.len() != MLDSA65_PUBLIC_LEN {
            return Err(SigError::MalformedKey("ML-DSA-65"));
        }
        Ok(DualVerifyingKey {
            classical,
            pq: pq.to_vec(),
        })
    }

    /// Short identifier of the identity: the first 16 bytes of
    /// SHA-256 over both public keys, in hex.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::new()
            .chain_update(b"hybridkex identity")
            .chain_update(self.classical)
            .chain_update(&self.pq)
            .finalize();
        hex::encode(&digest[..16])
    }
}

pub struct DualKeypair {
    classical: ed25519_dalek::SigningKey,
    pq: Box<ml_dsa::SigningKey<MlDsa65>>,
    verifying: DualVerifyingKey,
}

impl std::fmt::Debug for DualKeypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DualKeypair({:?}, ***)", self.verifying)
    }
}

impl DualKeypair {
    pub fn verifying_key(&self) -> &DualVerifyingKey {
        &self.verifying
    }

    pub fn classical_signing_bytes(&self) -> Zeroizing<[u8; ED25519_SECRET_LEN]> {
        Zeroizing::new(self.classical.to_bytes())
    }

    pub fn pq_signing_bytes(&self) -> Zeroizing<Vec<u8>> {
        Zeroizing::new(self.pq.encode().to_vec())
    }

    /// Rebuilds a keypair from its four encoded components, checking that
    /// each signing key matches its verifying key.
    pub fn from_components(
        classical_signing: &[u8],
        classical_verifying: &[u8],
        pq_signing: &[u8],
        pq_verifying: &[u8],
    ) -> Result<Self, SigError> {
        let seed: [u8; ED25519_SECRET_LEN] = classical_signing
            .try_into()
            .map_err(|_| SigError::MalformedKey("Ed25519"))?;
        let classical = ed25519_dalek::SigningKey::from_bytes(&seed);
        let verifying = DualVerifyingKey::new(classical_verifying, pq_verifying)?;
        if classical.verifying_key().as_bytes() != &verifying.classical {
            return Err(SigError::KeyMismatch("Ed25519"));
        }
        let encoded = ml_dsa::EncodedSigningKey::<MlDsa65>::try_from(pq_signing)
            .map_err(|_| SigError::MalformedKey("ML-DSA-65"))?;
        let pq = Box::new(ml_dsa::SigningKey::<MlDsa65>::decode(&encoded));
        // The verifying key is not derivable from the expanded signing key
        // alone, so check the pair by signing a probe message.
        let probe = b"hybridkex keypair consistency probe";
        let sig = pq.sign(probe);
        let vk = decode_pq_verifying(&verifying.pq)?;
        if vk.verify(probe, &sig).is_err() {
            return Err(SigError::KeyMismatch("ML-DSA-65"));
        }
        Ok(DualKeypair {
            classical,
            pq,
            verifying,
        })
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct DualSignature {
    pub classical: [u8; ED25519_SIG_LEN],
    pub pq: Vec<u8>,
}

impl std::fmt::Debug for DualSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DualSignature({}..)", hex::encode(&self.classical[..8]))
    }
}

impl DualSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(DUAL_SIG_LEN);
        out.extend_from_slice(&self.classical);
        out.extend_from_slice(&self.pq);
        out
    }

    /// Parses `classical_sig || pq_sig` at fixed offsets.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SigError> {
        if bytes.len() != DUAL_SIG_LEN {
            return Err(SigError::MalformedSignature("dual"));
        }
        let (c, p) = bytes.split_at(ED25519_SIG_LEN);
        Ok(DualSignature {
            classical: c.try_into().expect("split at 64"),
            pq: p.to_vec(),
        })
    }
}

pub fn dual_keygen(rng: &mut impl CryptoRngCore) -> DualKeypair {
    let classical = ed25519_dalek::SigningKey::generate(rng);
    let kp = MlDsa65::key_gen(rng);
    let verifying = DualVerifyingKey {
        classical: classical.verifying_key().to_bytes(),
        pq: kp.verifying_key().encode().to_vec(),
    };
    DualKeypair {
        classical,
        pq: Box::new(kp.signing_key().clone()),
        verifying,
    }
}

/// Signs `msg` with both components. Both are deterministic.
pub fn dual_sign(kp: &DualKeypair, msg: &[u8]) -> DualSignature {
    let classical = kp.classical.sign(msg).to_bytes();
    let pq = kp.pq.sign(msg).encode().to_vec();
    DualSignature { classical, pq }
}

fn decode_pq_verifying(bytes: &[u8]) -> Result<ml_dsa::VerifyingKey<MlDsa65>, SigError> {
    let enc = EncodedVerifyingKey::<MlDsa65>::try_from(bytes)
        .map_err(|_| SigError::MalformedKey("ML-DSA-65"))?;
    Ok(ml_dsa::VerifyingKey::<MlDsa65>::decode(&enc))
}

fn verify_classical(
    vk: &DualVerifyingKey,
    msg: &[u8],
    sig: &[u8; ED25519_SIG_LEN],
) -> Result<bool, SigError> {
    let key = ed25519_dalek::VerifyingKey::from_bytes(&vk.classical)
        .map_err(|_| SigError::MalformedKey("Ed25519"))?;
    let sig = ed25519_dalek::Signature::from_bytes(sig);
    Ok(key.verify_strict(msg, &sig).is_ok())
}

fn verify_pq(vk: &DualVerifyingKey, msg: &[u8], sig: &[u8]) -> Result<bool, SigError> {
    let key = decode_pq_verifying(&vk.pq)?;
    let enc = EncodedSignature::<MlDsa65>::try_from(sig)
        .map_err(|_| SigError::MalformedSignature("ML-DSA-65"))?;
    let sig = ml_dsa::Signature::<MlDsa65>::decode(&enc)
        .ok_or(SigError::MalformedSignature("ML-DSA-65"))?;
    Ok(key.verify(msg, &sig).is_ok())
}

/// Accepts iff both components verify. Both verifications run before the
/// result is decided.
pub fn dual_verify(vk: &DualVerifyingKey, msg: &[u8], sig: &DualSignature) -> Result<(), SigError> {
    let classical = verify_classical(vk, msg, &sig.classical);
    let pq = verify_pq(vk, msg, &sig.pq);
    match (classical?, pq?) {
        (true, true) => Ok(()),
        (classical_ok, pq_ok) => Err(SigError::Rejected {
            classical_ok,
            pq_ok,
        }),
    }
}
