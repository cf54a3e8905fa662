//! Timing and transfer-size evaluation of the hybrid suites.

mod accounting;
mod report;
mod stats;

use std::time::Instant;

use rand_core::{CryptoRngCore, OsRng};
use serde::Serialize;
use thiserror::Error;

use crate::hybrid_kex::{
    combine_secrets, derive_session_keys, hybrid_decapsulate, hybrid_encapsulate, hybrid_keygen,
    KexError, SecretBundle,
};
use crate::suites::{list_suites, suite_by_label, HybridSuite, SuiteError};

pub use accounting::{
    account_bytes, account_packets, check_against_reference, expected_for, suite_packets,
    suite_summaries, ByteAccount, CheckOutcome, Expected, SuiteSummary, DEFAULT_MTU, EXPECTED,
};
pub use report::{parse_json_report, render_report, ReportFormat, CSV_HEADER};
pub use stats::{compute_stats, TimingStats};

pub const DEFAULT_ITERATIONS: usize = 100;
pub const DEFAULT_WARMUP: usize = 10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("at least 2 samples are needed, got {0}")]
    TooFewSamples(usize),
    #[error("MTU must be positive")]
    ZeroMtu,
    #[error("unknown report format {0:?} (expected table, csv or json)")]
    UnknownFormat(String),
    #[error("malformed report: {0}")]
    Parse(String),
    #[error("nothing to report")]
    NoRows,
    #[error("no reference figures for {0}")]
    NoReference(String),
    #[error("clock reading out of range")]
    Clock,
    #[error("{0}: both sides derived different keys")]
    Disagreement(&'static str),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Kex(#[from] KexError),
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub iterations: usize,
    pub warmup: usize,
    pub mtu: usize,
    /// Labels to run; empty means every registered suite.
    pub suites: Vec<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            iterations: DEFAULT_ITERATIONS,
            warmup: DEFAULT_WARMUP,
            mtu: DEFAULT_MTU,
            suites: Vec::new(),
        }
    }
}

impl BenchConfig {
    /// Selected suites in registry order.
    pub fn selected(&self) -> Result<Vec<&'static HybridSuite>, BenchError> {
        if self.suites.is_empty() {
            return Ok(list_suites().iter().collect());
        }
        let mut picked = Vec::new();
        for label in &self.suites {
            picked.push(suite_by_label(label)?);
        }
        let mut out: Vec<_> = list_suites()
            .iter()
            .filter(|s| picked.iter().any(|p| p.id == s.id))
            .collect();
        out.dedup_by_key(|s| s.id);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub label: &'static str,
    pub timing: TimingStats,
    pub bytes_transfer: usize,
    pub packets: usize,
    pub strength_pqc: u16,
    pub strength_classical: u16,
    pub verified_accounting: bool,
}

/// One complete local exchange: keygen, encapsulation, decapsulation and
/// KDF2 derivation on both sides.
fn exchange_once(suite: &HybridSuite, rng: &mut impl CryptoRngCore) -> Result<(), BenchError> {
    let (public, state) = hybrid_keygen(suite, rng)?;
    let (ct, ecdh_r, kem_r) = hybrid_encapsulate(suite, &public, rng)?;
    let (ecdh_i, kem_i) = hybrid_decapsulate(suite, &state, &ct)?;
    let th = [0u8; 32];
    let derive = |ecdh_ss, kem_ss| -> Result<_, KexError> {
        let ikm = combine_secrets(&SecretBundle {
            ecdh_ss,
            kem_ss,
            qkd_key: Default::default(),
        })?;
        derive_session_keys(&ikm, &th)
    };
    if derive(ecdh_i, kem_i)? != derive(ecdh_r, kem_r)? {
        return Err(BenchError::Disagreement(suite.label));
    }
    Ok(())
}

/// Builds a row from measured samples and the suite's accounting.
pub fn bench_row(
    suite: &'static HybridSuite,
    samples: &[u64],
    mtu: usize,
) -> Result<BenchRow, BenchError> {
    let bytes = account_bytes(suite);
    Ok(BenchRow {
        label: suite.label,
        timing: compute_stats(samples)?,
        bytes_transfer: bytes.total,
        packets: suite_packets(suite, mtu)?,
        strength_pqc: suite.strength_pqc_bits,
        strength_classical: suite.strength_classical_bits,
        verified_accounting: bytes.verified,
    })
}

/// Times each selected suite in turn on the calling thread.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    if cfg.iterations < 2 {
        return Err(BenchError::TooFewSamples(cfg.iterations));
    }
    if cfg.mtu == 0 {
        return Err(BenchError::ZeroMtu);
    }
    let mut rng = OsRng;
    let mut rows = Vec::new();
    for suite in cfg.selected()? {
        for _ in 0..cfg.warmup {
            exchange_once(suite, &mut rng)?;
        }
        let mut samples = Vec::with_capacity(cfg.iterations);
        for _ in 0..cfg.iterations {
            let start = Instant::now();
            exchange_once(suite, &mut rng)?;
            let ns = u64::try_from(start.elapsed().as_nanos()).map_err(|_| BenchError::Clock)?;
            samples.push(ns);
        }
        log::info!("{}: {} iterations", suite.label, cfg.iterations);
        rows.push(bench_row(suite, &samples, cfg.mtu)?);
    }
    Ok(rows)
}
