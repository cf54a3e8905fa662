//! Hybrid key exchange: ECDH + post-quantum KEM, with an optional QKD key
//! folded into the derivation.
//!
//! The initiator publishes a [`HybridPublicBundle`]; the responder
//! encapsulates to it and returns a [`HybridCiphertextBundle`]. Both sides
//! end up with the same ECDH and KEM secrets, which are concatenated with
//! the QKD key (`ecdh_ss || kem_ss || qkd_key`) and run through KDF2 to
//! obtain [`SessionKeys`].

mod kdf;

pub(crate) use kdf::kdf2_sha256_into;
pub use kdf::{derive_session_keys, kdf2_sha256, SessionKeys, KDF2_MAX_OUTPUT, SESSION_KEY_LEN};

use rand_core::CryptoRngCore;
use thiserror::Error;
use zeroize::Zeroizing;

use crate::provider::{self, ClassicalSecret, KemSecret, PrimitiveError, SecretBytes};
use crate::suites::{size_profile, suite_by_id, HybridSuite, SuiteError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KexError {
    #[error("key generation failed in {primitive}: {source}")]
    Keygen {
        primitive: &'static str,
        source: PrimitiveError,
    },
    #[error("encapsulation failed: {0}")]
    Encapsulation(PrimitiveError),
    #[error("decapsulation failed: {0}")]
    Decapsulation(PrimitiveError),
    #[error("malformed {field}: expected {expected} bytes, got {got}")]
    Decode {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("bundle is for suite {got}, expected suite {expected}")]
    SuiteMismatch { expected: u16, got: u16 },
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("{0} shared secret is empty")]
    EmptyComponent(&'static str),
    #[error("input keying material is empty")]
    EmptyIkm,
    #[error("requested {0} bytes exceeds the KDF2 output limit")]
    OutputTooLong(u64),
}

/// Initiator's public contribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HybridPublicBundle {
    pub suite_id: u16,
    pub classical_pub: Vec<u8>,
    pub pq_pub: Vec<u8>,
    /// Opaque per-suite bytes (`extra_flight1_bytes` long, usually empty).
    pub extra: Vec<u8>,
}

/// Responder's reply: its ephemeral ECDH public key and the KEM ciphertext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HybridCiphertextBundle {
    pub suite_id: u16,
    pub classical_pub: Vec<u8>,
    pub pq_ct: Vec<u8>,
}

/// Initiator's private keys, kept until the ciphertext bundle arrives.
#[derive(Debug)]
pub struct HybridPrivateState {
    suite: &'static HybridSuite,
    classical: ClassicalSecret,
    kem: KemSecret,
}

impl HybridPrivateState {
    pub fn suite(&self) -> &'static HybridSuite {
        self.suite
    }
}

/// The three shared inputs to the key derivation.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretBundle {
    pub ecdh_ss: SecretBytes,
    pub kem_ss: SecretBytes,
    /// Empty when QKD is not in use.
    pub qkd_key: SecretBytes,
}

impl std::fmt::Debug for SecretBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretBundle")
            .field("ecdh_ss", &self.ecdh_ss.len())
            .field("kem_ss", &self.kem_ss.len())
            .field("qkd_key", &self.qkd_key.len())
            .finish()
    }
}

fn expect_len(field: &'static str, expected: usize, bytes: &[u8]) -> Result<(), KexError> {
    if bytes.len() == expected {
        Ok(())
    } else {
        Err(KexError::Decode {
            field,
            expected,
            got: bytes.len(),
        })
    }
}

fn check_suite(suite: &HybridSuite, got: u16) -> Result<&'static HybridSuite, KexError> {
    if suite.id != got {
        return Err(KexError::SuiteMismatch {
            expected: suite.id,
            got,
        });
    }
    Ok(suite_by_id(got)?)
}

pub fn hybrid_keygen(
    suite: &HybridSuite,
    rng: &mut impl CryptoRngCore,
) -> Result<(HybridPublicBundle, HybridPrivateState), KexError> {
    let suite = check_suite(suite, suite.id)?;
    let classical = ClassicalSecret::generate(suite.classical, rng);
    let (kem, pq_pub) = provider::kem_keygen(suite.pq, rng).map_err(|e| KexError::Keygen {
        primitive: suite.pq.name(),
        source: e,
    })?;
    let mut extra = vec![0u8; suite.extra_flight1_bytes];
    rng.fill_bytes(&mut extra);
    let public = HybridPublicBundle {
        suite_id: suite.id,
        classical_pub: classical.public_key(),
        pq_pub,
        extra,
    };
    Ok((
        public,
        HybridPrivateState {
            suite,
            classical,
            kem,
        },
    ))
}

/// Responder side: ephemeral ECDH against the initiator's key plus KEM
/// encapsulation. Returns `(bundle, ecdh_ss, kem_ss)`.
pub fn hybrid_encapsulate(
    suite: &HybridSuite,
    peer: &HybridPublicBundle,
    rng: &mut impl CryptoRngCore,
) -> Result<(HybridCiphertextBundle, SecretBytes, SecretBytes), KexError> {
    let suite = check_suite(suite, peer.suite_id)?;
    let profile = size_profile(suite);
    let malformed = |e| KexError::Encapsulation(e);
    if peer.extra.len() != profile.extra_flight1 {
        return Err(KexError::Decode {
            field: "extra",
            expected: profile.extra_flight1,
            got: peer.extra.len(),
        });
    }
    let eph = ClassicalSecret::generate(suite.classical, rng);
    let ecdh_ss = eph.agree(&peer.classical_pub).map_err(malformed)?;
    let (pq_ct, kem_ss) =
        provider::kem_encapsulate(suite.pq, &peer.pq_pub, rng).map_err(malformed)?;
    let bundle = HybridCiphertextBundle {
        suite_id: suite.id,
        classical_pub: eph.public_key(),
        pq_ct,
    };
    Ok((bundle, ecdh_ss, kem_ss))
}

/// Initiator side. Lengths are validated before any primitive runs.
pub fn hybrid_decapsulate(
    suite: &HybridSuite,
    state: &HybridPrivateState,
    ct: &HybridCiphertextBundle,
) -> Result<(SecretBytes, SecretBytes), KexError> {
    let suite = check_suite(suite, ct.suite_id)?;
    if state.suite.id != suite.id {
        return Err(KexError::SuiteMismatch {
            expected: state.suite.id,
            got: suite.id,
        });
    }
    let profile = size_profile(suite);
    expect_len(
        "classical public key",
        profile.classical_pk,
        &ct.classical_pub,
    )?;
    expect_len("KEM ciphertext", profile.pq_ct, &ct.pq_ct)?;
    let ecdh_ss = state
        .classical
        .agree(&ct.classical_pub)
        .map_err(KexError::Decapsulation)?;
    let kem_ss = state
        .kem
        .decapsulate(suite.pq, &ct.pq_ct)
        .map_err(KexError::Decapsulation)?;
    Ok((ecdh_ss, kem_ss))
}

/// `ecdh_ss || kem_ss || qkd_key`. Only the QKD component may be empty.
pub fn combine_secrets(bundle: &SecretBundle) -> Result<SecretBytes, KexError> {
    if bundle.ecdh_ss.is_empty() {
        return Err(KexError::EmptyComponent("ECDH"));
    }
    if bundle.kem_ss.is_empty() {
        return Err(KexError::EmptyComponent("KEM"));
    }
    let mut ikm = Zeroizing::new(Vec::with_capacity(
        bundle.ecdh_ss.len() + bundle.kem_ss.len() + bundle.qkd_key.len(),
    ));
    ikm.extend_from_slice(&bundle.ecdh_ss);
    ikm.extend_from_slice(&bundle.kem_ss);
    ikm.extend_from_slice(&bundle.qkd_key);
    Ok(ikm)
}
