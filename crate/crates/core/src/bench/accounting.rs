//! Bytes-on-the-wire and packet accounting, plus the reference figures the
//! `--check` mode compares against.

use serde::Serialize;

use super::BenchError;
use crate::suites::{list_suites, size_profile, strength_estimate, HybridSuite};

pub const DEFAULT_MTU: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ByteAccount {
    pub flight1: usize,
    pub flight2: usize,
    pub total: usize,
    /// False when `total` is a recorded figure rather than the flight sum.
    pub verified: bool,
}

/// Flight 1 carries the initiator's ECDH and KEM public keys plus any extra
/// bytes; flight 2 the responder's ECDH public key and KEM ciphertext.
pub fn account_bytes(suite: &HybridSuite) -> ByteAccount {
    let p = size_profile(suite);
    let flight1 = p.classical_pk + p.pq_pk + p.extra_flight1;
    let flight2 = p.classical_pk + p.pq_ct;
    match suite.accounting_override {
        Some(o) => ByteAccount {
            flight1,
            flight2,
            total: o.total_bytes,
            verified: false,
        },
        None => ByteAccount {
            flight1,
            flight2,
            total: flight1 + flight2,
            verified: true,
        },
    }
}

/// Sum over flights of `ceil(bytes / mtu)`.
pub fn account_packets(flight_bytes: &[usize], mtu: usize) -> Result<usize, BenchError> {
    if mtu == 0 {
        return Err(BenchError::ZeroMtu);
    }
    Ok(flight_bytes.iter().map(|b| b.div_ceil(mtu)).sum())
}

/// Packet count reported for a suite. A recorded override is only
/// meaningful at the MTU it was recorded for; elsewhere the flight model
/// is used.
pub fn suite_packets(suite: &HybridSuite, mtu: usize) -> Result<usize, BenchError> {
    match suite.accounting_override {
        Some(o) if mtu == DEFAULT_MTU => Ok(o.packets),
        _ => {
            let b = account_bytes(suite);
            account_packets(&[b.flight1, b.flight2], mtu)
        }
    }
}

/// Reference row of the published evaluation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expected {
    pub label: &'static str,
    pub bytes: usize,
    pub packets: usize,
    pub pqc_bits: u16,
    pub classical_bits: u16,
}

const fn row(
    label: &'static str,
    bytes: usize,
    packets: usize,
    pqc_bits: u16,
    classical_bits: u16,
) -> Expected {
    Expected {
        label,
        bytes,
        packets,
        pqc_bits,
        classical_bits,
    }
}

/// Published transfer sizes (MTU 1500) and strength estimates.
#[rustfmt::skip]
pub static EXPECTED: [Expected; 10] = [
    row("X25519-Kyber768-Draft00", 2336, 2, 192, 128),
    row("X25519-MLKE512M-Draft00", 1632, 2, 128, 128),
    row("X25519-MLKE768M-Draft00", 2336, 2, 192, 128),
    row("X25519-MLKE1024M-Draft00", 3200, 4, 256, 128),
    row("X448-MLKEM768-Draft00", 2384, 2, 192, 224),
    row("X25519e-FrodoKEM976-SHAKEDraft00", 31440, 22, 192, 128),
    row("X25519-FrodoKEM976-SHAKEDraft00", 31488, 22, 192, 128),
    row("X25519e-FrodoKEM976-AESDraft00", 31440, 22, 192, 128),
    row("X25519-FrodoKEM976-AESDraft00", 31488, 22, 192, 128),
    row("X25519-Mceliece-Draft00", 200722, 139, 128, 128),
];

pub fn expected_for(suite: &HybridSuite) -> Option<&'static Expected> {
    EXPECTED.iter().find(|e| e.label == suite.label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckOutcome {
    pub label: &'static str,
    pub column: &'static str,
    pub expected: u64,
    pub computed: u64,
    /// False for recorded figures that cannot be derived, which are
    /// reported but not judged.
    pub judged: bool,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        !self.judged || self.expected == self.computed
    }
}

/// Compares computed accounting and strength columns with the reference
/// table. Byte and packet columns are judged at MTU 1500 only, and never
/// for suites whose accounting is a recorded override.
pub fn check_against_reference(
    suites: &[&'static HybridSuite],
) -> Result<Vec<CheckOutcome>, BenchError> {
    let mut out = Vec::new();
    for &suite in suites {
        let exp = expected_for(suite).ok_or_else(|| BenchError::NoReference(suite.label.into()))?;
        let bytes = account_bytes(suite);
        let packets = suite_packets(suite, DEFAULT_MTU)?;
        let (pqc, classical) = strength_estimate(suite)?;
        let judged = bytes.verified;
        let mut push = |column, expected: u64, computed: u64, judged| {
            out.push(CheckOutcome {
                label: suite.label,
                column,
                expected,
                computed,
                judged,
            })
        };
        push("bytes", exp.bytes as u64, bytes.total as u64, judged);
        push("packets", exp.packets as u64, packets as u64, judged);
        push("pqc_bits", exp.pqc_bits as u64, pqc as u64, true);
        push(
            "classical_bits",
            exp.classical_bits as u64,
            classical as u64,
            true,
        );
    }
    Ok(out)
}

/// Registry entry with its accounting, as emitted by `suites --json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuiteSummary {
    pub label: &'static str,
    pub id: u16,
    pub classical: &'static str,
    pub pq: &'static str,
    pub bytes_total: usize,
    pub packets: usize,
    pub strength_pqc: u16,
    pub strength_classical: u16,
    pub verified_accounting: bool,
}

pub fn suite_summaries(mtu: usize) -> Result<Vec<SuiteSummary>, BenchError> {
    list_suites()
        .iter()
        .map(|s| {
            let bytes = account_bytes(s);
            Ok(SuiteSummary {
                label: s.label,
                id: s.id,
                classical: s.classical.name(),
                pq: s.pq.name(),
                bytes_total: bytes.total,
                packets: suite_packets(s, mtu)?,
                strength_pqc: s.strength_pqc_bits,
                strength_classical: s.strength_classical_bits,
                verified_accounting: bytes.verified,
            })
        })
        .collect()
}
