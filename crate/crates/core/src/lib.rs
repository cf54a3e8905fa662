//! Hybrid classical/post-quantum key establishment with optional QKD input.
//!
//! - [`suites`]: the registry of ECDH + KEM pairings.
//! - [`hybrid_kex`]: hybrid keygen/encapsulate/decapsulate and KDF2 key
//!   derivation.
//! - [`dual_sig`]: Ed25519 + ML-DSA-65 composite signatures.
//! - [`qkd`]: ETSI GS QKD 014 client and a mock KME.
//! - [`handshake`]: the three-flight authenticated handshake and record
//!   layer.
//! - [`bench`]: timing, transfer accounting and report rendering.

pub mod bench;
pub mod dual_sig;
pub mod handshake;
pub mod hybrid_kex;
pub mod provider;
pub mod qkd;
pub mod suites;
