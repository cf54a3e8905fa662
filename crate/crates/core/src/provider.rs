//! Primitive provider.
//!
//! Classical ECDH groups and post-quantum KEMs exposed through one
//! byte-oriented interface so the combiner and protocol never touch a
//! concrete primitive type. Public material crosses this boundary as plain
//! bytes; private material stays in the typed enums below.

use classic_mceliece_rust as mceliece;
use ml_kem::kem::{Decapsulate, Encapsulate};
use ml_kem::{Ciphertext, Encoded, EncodedSizeUser, KemCore, MlKem1024, MlKem512, MlKem768};
use rand_core::CryptoRngCore;
use thiserror::Error;
use zeroize::Zeroizing;

use crate::suites::{ClassicalGroup, PqKem};

/// Shared-secret bytes, wiped on drop.
pub type SecretBytes = Zeroizing<Vec<u8>>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrimitiveError {
    #[error("{primitive}: expected {expected} bytes of {what}, got {got}")]
    Length {
        primitive: &'static str,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{primitive}: malformed {what}")]
    Malformed {
        primitive: &'static str,
        what: &'static str,
    },
    #[error("{0}: key agreement produced a non-contributory secret")]
    NonContributory(&'static str),
    #[error("{primitive}: {reason}")]
    Failure {
        primitive: &'static str,
        reason: String,
    },
}

impl PrimitiveError {
    pub fn primitive(&self) -> &'static str {
        match self {
            PrimitiveError::Length { primitive, .. }
            | PrimitiveError::Malformed { primitive, .. }
            | PrimitiveError::Failure { primitive, .. }
            | PrimitiveError::NonContributory(primitive) => primitive,
        }
    }
}

fn check_len(
    primitive: &'static str,
    what: &'static str,
    expected: usize,
    bytes: &[u8],
) -> Result<(), PrimitiveError> {
    if bytes.len() == expected {
        Ok(())
    } else {
        Err(PrimitiveError::Length {
            primitive,
            what,
            expected,
            got: bytes.len(),
        })
    }
}

/// Private half of a classical ECDH keypair.
pub enum ClassicalSecret {
    X25519(x25519_dalek::StaticSecret),
    X448(Box<x448::Secret>),
}

impl std::fmt::Debug for ClassicalSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ClassicalSecret({}, ***)", self.group())
    }
}

impl ClassicalSecret {
    pub fn generate(group: ClassicalGroup, rng: &mut impl CryptoRngCore) -> Self {
        match group {
            ClassicalGroup::X25519 => {
                ClassicalSecret::X25519(x25519_dalek::StaticSecret::random_from_rng(rng))
            }
            ClassicalGroup::X448 => {
                let mut raw = Zeroizing::new([0u8; 56]);
                rng.fill_bytes(raw.as_mut());
                ClassicalSecret::X448(Box::new(
                    x448::Secret::from_bytes(raw.as_ref()).expect("56-byte scalar"),
                ))
            }
        }
    }

    /// Imports a raw scalar (clamped by the group on use).
    pub fn from_bytes(group: ClassicalGroup, bytes: &[u8]) -> Result<Self, PrimitiveError> {
        check_len(
            group.name(),
            "secret scalar",
            group.public_key_bytes(),
            bytes,
        )?;
        Ok(match group {
            ClassicalGroup::X25519 => {
                let mut raw = [0u8; 32];
                raw.copy_from_slice(bytes);
                ClassicalSecret::X25519(x25519_dalek::StaticSecret::from(raw))
            }
            ClassicalGroup::X448 => ClassicalSecret::X448(Box::new(
                x448::Secret::from_bytes(bytes).expect("length checked"),
            )),
        })
    }

    pub fn group(&self) -> ClassicalGroup {
        match self {
            ClassicalSecret::X25519(_) => ClassicalGroup::X25519,
            ClassicalSecret::X448(_) => ClassicalGroup::X448,
        }
    }

    pub fn public_key(&self) -> Vec<u8> {
        match self {
            ClassicalSecret::X25519(s) => x25519_dalek::PublicKey::from(s).as_bytes().to_vec(),
            ClassicalSecret::X448(s) => x448::PublicKey::from(s.as_ref()).as_bytes().to_vec(),
        }
    }

    /// Diffie-Hellman with a peer public key. Low-order peer points are
    /// rejected.
    pub fn agree(&self, peer_public: &[u8]) -> Result<SecretBytes, PrimitiveError> {
        let group = self.group();
        check_len(
            group.name(),
            "public key",
            group.public_key_bytes(),
            peer_public,
        )?;
        match self {
            ClassicalSecret::X25519(s) => {
                let mut raw = [0u8; 32];
                raw.copy_from_slice(peer_public);
                let shared = s.diffie_hellman(&x25519_dalek::PublicKey::from(raw));
                if !shared.was_contributory() {
                    return Err(PrimitiveError::NonContributory("X25519"));
                }
                Ok(Zeroizing::new(shared.as_bytes().to_vec()))
            }
            ClassicalSecret::X448(s) => {
                let peer =
                    x448::PublicKey::from_bytes(peer_public).ok_or(PrimitiveError::Malformed {
                        primitive: "X448",
                        what: "public key",
                    })?;
                let shared = s
                    .as_diffie_hellman(&peer)
                    .ok_or(PrimitiveError::NonContributory("X448"))?;
                Ok(Zeroizing::new(shared.as_bytes().to_vec()))
            }
        }
    }
}

type MlKemDk<K> = <K as KemCore>::DecapsulationKey;

/// Private half of a post-quantum KEM keypair.
pub enum KemSecret {
    MlKem512(Box<MlKemDk<MlKem512>>),
    MlKem768(Box<MlKemDk<MlKem768>>),
    MlKem1024(Box<MlKemDk<MlKem1024>>),
    Frodo(frodo_kem::Algorithm, frodo_kem::DecryptionKey),
    McEliece(Box<mceliece::SecretKey<'static>>),
}

impl std::fmt::Debug for KemSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            KemSecret::MlKem512(_) => "ML-KEM-512",
            KemSecret::MlKem768(_) => "ML-KEM-768",
            KemSecret::MlKem1024(_) => "ML-KEM-1024",
            KemSecret::Frodo(..) => "FrodoKEM-976",
            KemSecret::McEliece(_) => "Classic-McEliece-348864",
        };
        write!(f, "KemSecret({name}, ***)")
    }
}

fn frodo_algorithm(kem: PqKem) -> Option<frodo_kem::Algorithm> {
    match kem {
        PqKem::Frodo976Shake => Some(frodo_kem::Algorithm::EphemeralFrodoKem976Shake),
        PqKem::Frodo976Aes => Some(frodo_kem::Algorithm::EphemeralFrodoKem976Aes),
        _ => None,
    }
}

fn mlkem_encapsulate<K: KemCore>(
    name: &'static str,
    ek: &[u8],
    rng: &mut impl CryptoRngCore,
) -> Result<(Vec<u8>, SecretBytes), PrimitiveError> {
    let encoded =
        Encoded::<K::EncapsulationKey>::try_from(ek).map_err(|_| PrimitiveError::Malformed {
            primitive: name,
            what: "encapsulation key",
        })?;
    let ek = K::EncapsulationKey::from_bytes(&encoded);
    let (ct, ss) = ek.encapsulate(rng).map_err(|_| PrimitiveError::Failure {
        primitive: name,
        reason: "encapsulation failed".into(),
    })?;
    Ok((ct.to_vec(), Zeroizing::new(ss.to_vec())))
}

fn mlkem_decapsulate<K: KemCore>(
    name: &'static str,
    dk: &K::DecapsulationKey,
    ct: &[u8],
) -> Result<SecretBytes, PrimitiveError> {
    let ct = Ciphertext::<K>::try_from(ct).map_err(|_| PrimitiveError::Malformed {
        primitive: name,
        what: "ciphertext",
    })?;
    let ss = dk.decapsulate(&ct).map_err(|_| PrimitiveError::Failure {
        primitive: name,
        reason: "decapsulation failed".into(),
    })?;
    Ok(Zeroizing::new(ss.to_vec()))
}

/// Generates a KEM keypair, returning the private state and the encoded
/// encapsulation key.
pub fn kem_keygen(
    kem: PqKem,
    rng: &mut impl CryptoRngCore,
) -> Result<(KemSecret, Vec<u8>), PrimitiveError> {
    Ok(match kem {
        PqKem::MlKem512 => {
            let (dk, ek) = MlKem512::generate(rng);
            (KemSecret::MlKem512(Box::new(dk)), ek.as_bytes().to_vec())
        }
        PqKem::MlKem768 | PqKem::Kyber768Draft => {
            let (dk, ek) = MlKem768::generate(rng);
            (KemSecret::MlKem768(Box::new(dk)), ek.as_bytes().to_vec())
        }
        PqKem::MlKem1024 => {
            let (dk, ek) = MlKem1024::generate(rng);
            (KemSecret::MlKem1024(Box::new(dk)), ek.as_bytes().to_vec())
        }
        PqKem::Frodo976Shake | PqKem::Frodo976Aes => {
            let alg = frodo_algorithm(kem).expect("frodo variant");
            let (ek, dk) = alg.generate_keypair(&mut *rng);
            (KemSecret::Frodo(alg, dk), ek.value().to_vec())
        }
        PqKem::McEliece => {
            let (pk, sk) = mceliece::keypair_boxed(rng);
            (KemSecret::McEliece(Box::new(sk)), pk.as_array().to_vec())
        }
    })
}

/// Encapsulates to an encoded public key, returning `(ciphertext, secret)`.
pub fn kem_encapsulate(
    kem: PqKem,
    ek: &[u8],
    rng: &mut impl CryptoRngCore,
) -> Result<(Vec<u8>, SecretBytes), PrimitiveError> {
    let name = kem.name();
    check_len(name, "encapsulation key", kem.public_key_bytes(), ek)?;
    match kem {
        PqKem::MlKem512 => mlkem_encapsulate::<MlKem512>(name, ek, rng),
        PqKem::MlKem768 | PqKem::Kyber768Draft => mlkem_encapsulate::<MlKem768>(name, ek, rng),
        PqKem::MlKem1024 => mlkem_encapsulate::<MlKem1024>(name, ek, rng),
        PqKem::Frodo976Shake | PqKem::Frodo976Aes => {
            let alg = frodo_algorithm(kem).expect("frodo variant");
            let ek = alg
                .encryption_key_from_bytes(ek)
                .map_err(|_| PrimitiveError::Malformed {
                    primitive: name,
                    what: "encapsulation key",
                })?;
            let (ct, ss) =
                alg.encapsulate_with_rng(&ek, &mut *rng)
                    .map_err(|e| PrimitiveError::Failure {
                        primitive: name,
                        reason: e.to_string(),
                    })?;
            Ok((ct.value().to_vec(), Zeroizing::new(ss.value().to_vec())))
        }
        PqKem::McEliece => {
            let mut raw = Box::new([0u8; mceliece::CRYPTO_PUBLICKEYBYTES]);
            raw.copy_from_slice(ek);
            let pk = mceliece::PublicKey::from(raw);
            let (ct, ss) = mceliece::encapsulate_boxed(&pk, rng);
            Ok((
                ct.as_array().to_vec(),
                Zeroizing::new(ss.as_array().to_vec()),
            ))
        }
    }
}

impl KemSecret {
    /// Decapsulates a ciphertext. Ciphertext length is checked before the
    /// primitive runs; invalid ciphertexts of the right length decapsulate
    /// to an unrelated secret (implicit rejection).
    pub fn decapsulate(&self, kem: PqKem, ct: &[u8]) -> Result<SecretBytes, PrimitiveError> {
        let name = kem.name();
        check_len(name, "ciphertext", kem.ciphertext_bytes(), ct)?;
        match self {
            KemSecret::MlKem512(dk) => mlkem_decapsulate::<MlKem512>(name, dk, ct),
            KemSecret::MlKem768(dk) => mlkem_decapsulate::<MlKem768>(name, dk, ct),
            KemSecret::MlKem1024(dk) => mlkem_decapsulate::<MlKem1024>(name, dk, ct),
            KemSecret::Frodo(alg, dk) => {
                let ct = alg
                    .ciphertext_from_bytes(ct)
                    .map_err(|_| PrimitiveError::Malformed {
                        primitive: name,
                        what: "ciphertext",
                    })?;
                let (ss, _msg) = alg
                    .decapsulate(dk, &ct)
                    .map_err(|e| PrimitiveError::Failure {
                        primitive: name,
                        reason: e.to_string(),
                    })?;
                Ok(Zeroizing::new(ss.value().to_vec()))
            }
            KemSecret::McEliece(sk) => {
                let mut raw = [0u8; mceliece::CRYPTO_CIPHERTEXTBYTES];
                raw.copy_from_slice(ct);
                let ss = mceliece::decapsulate_boxed(&mceliece::Ciphertext::from(raw), sk);
                Ok(Zeroizing::new(ss.as_array().to_vec()))
            }
        }
    }
}
