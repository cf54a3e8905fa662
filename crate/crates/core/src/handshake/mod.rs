//! Three-flight, mutually authenticated hybrid key establishment.
//!
//! ```text
//! initiator                                      responder
//!   Flight1: random, ECDH pub, KEM pub, [qkd key_ID], sig  ->
//!   <-  Flight2: random, ECDH pub, KEM ct, sig, confirm MAC
//!   Flight3: confirm MAC                                   ->
//! ```
//!
//! Each signature is a dual (Ed25519 + ML-DSA-65) signature over a label and
//! the running transcript hash. Session keys come from
//! `KDF2(ecdh_ss || kem_ss || qkd_key || transcript_hash)` once Flight2's
//! signed fields are in the transcript; the HMAC key only drives the two
//! confirmation MACs and the AES-256-GCM key protects records afterwards.

mod config;
mod keyfile;
mod record;
mod transport;
mod wire;

use std::sync::Arc;

use hmac::{Hmac, Mac};
use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;
use zeroize::Zeroizing;

use crate::dual_sig::{
    dual_sign, dual_verify, DualKeypair, DualSignature, DualVerifyingKey, SigError,
};
use crate::hybrid_kex::{
    combine_secrets, derive_session_keys, hybrid_decapsulate, hybrid_encapsulate, hybrid_keygen,
    HybridCiphertextBundle, HybridPrivateState, HybridPublicBundle, KexError, SecretBundle,
    SessionKeys,
};
use crate::qkd::{QkdError, QkdKey, QkdKeySource};
use crate::suites::HybridSuite;

pub use config::{KeySource, NodeConfig, QkdSettings};
pub use keyfile::{
    decode_private_key, decode_public_key, encode_private_key, encode_public_key, read_private_key,
    read_public_key, write_private_key, write_public_key, KeyfileError, KEYFILE_MAGIC, TAG_PRIVATE,
    TAG_PUBLIC,
};
pub use record::{RecordLayer, MAX_RECORD_PLAINTEXT};
pub use transport::{
    accept_handshake, connect_handshake, read_frame, recv_record, send_record, write_frame,
};
pub use wire::{
    Flight1, Flight2, Flight3, FlightType, Header, HEADER_LEN, KEY_ID_LEN, MAC_LEN, MAX_BODY_LEN,
    RANDOM_LEN, VERSION,
};

const FLIGHT1_SIG_LABEL: &[u8] = b"hybridkex flight1 signature";
const FLIGHT2_SIG_LABEL: &[u8] = b"hybridkex flight2 signature";
const RESPONDER_CONFIRM: &[u8] = b"responder-confirm";
const INITIATOR_CONFIRM: &[u8] = b"initiator-confirm";

#[derive(Debug, Error)]
pub enum HandshakeError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("authentication failed: {0}")]
    Auth(SigError),
    #[error("key confirmation failed")]
    KeyConfirmation,
    #[error("QKD key retrieval failed: {0}")]
    Qkd(#[from] QkdError),
    #[error("QKD policy mismatch: {0}")]
    QkdMismatch(&'static str),
    #[error("key exchange failed: {0}")]
    Kex(#[from] KexError),
    #[error("record authentication failed")]
    RecordAuth,
    #[error("session expired: record counter exhausted")]
    SessionExpired,
    #[error("record of {0} bytes exceeds the record size limit")]
    RecordTooLarge(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Initiator,
    Responder,
}

/// Everything one side needs to run the handshake.
pub struct HandshakeConfig {
    pub suite: &'static HybridSuite,
    pub role: Role,
    pub keypair: DualKeypair,
    /// Peers accepted by this node; a flight verifies if it carries a valid
    /// signature from any of them.
    pub peer_keys: Vec<DualVerifyingKey>,
    pub qkd: Option<Arc<dyn QkdKeySource>>,
}

impl std::fmt::Debug for HandshakeConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HandshakeConfig")
            .field("suite", &self.suite.label)
            .field("role", &self.role)
            .field("peer_keys", &self.peer_keys.len())
            .field("qkd", &self.qkd.is_some())
            .finish()
    }
}

impl HandshakeConfig {
    fn expect_role(&self, role: Role) -> Result<(), HandshakeError> {
        if self.role != role {
            return Err(HandshakeError::Config(format!(
                "configured as {:?}, used as {role:?}",
                self.role
            )));
        }
        if self.peer_keys.is_empty() {
            return Err(HandshakeError::Config("no pinned peer keys".into()));
        }
        Ok(())
    }

    fn verify_peer(
        &self,
        msg: &[u8],
        sig: &DualSignature,
    ) -> Result<DualVerifyingKey, HandshakeError> {
        let mut last = SigError::Rejected {
            classical_ok: false,
            pq_ok: false,
        };
        for key in &self.peer_keys {
            match dual_verify(key, msg, sig) {
                Ok(()) => return Ok(key.clone()),
                Err(e) => last = e,
            }
        }
        Err(HandshakeError::Auth(last))
    }
}

/// Running SHA-256 over the encoded signed fields of each flight.
#[derive(Clone, Default)]
pub struct Transcript(Sha256);

impl Transcript {
    pub fn absorb(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }

    pub fn hash(&self) -> [u8; 32] {
        self.0.clone().finalize().into()
    }
}

fn signed_message(label: &[u8], th: &[u8; 32]) -> Vec<u8> {
    [label, &th[..]].concat()
}

fn confirm_mac(keys: &SessionKeys, label: &[u8], th: &[u8; 32]) -> Hmac<Sha256> {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&keys.mac_key[..])
        .expect("HMAC accepts any key length");
    mac.update(label);
    mac.update(th);
    mac
}

fn check_suite(expected: &HybridSuite, got: u16) -> Result<(), HandshakeError> {
    if expected.id != got {
        return Err(HandshakeError::Malformed(format!(
            "suite {got} offered, suite {} configured",
            expected.id
        )));
    }
    Ok(())
}

fn derive(
    ecdh_ss: Zeroizing<Vec<u8>>,
    kem_ss: Zeroizing<Vec<u8>>,
    qkd: &Option<QkdKey>,
    th: &[u8; 32],
) -> Result<SessionKeys, HandshakeError> {
    let ikm = combine_secrets(&SecretBundle {
        ecdh_ss,
        kem_ss,
        qkd_key: qkd
            .as_ref()
            .map(|k| k.key.clone())
            .unwrap_or_else(|| Zeroizing::new(Vec::new())),
    })?;
    Ok(derive_session_keys(&ikm, th)?)
}

/// An established session: agreed keys plus the record layer.
pub struct Session {
    keys: SessionKeys,
    transcript_hash: [u8; 32],
    suite: &'static HybridSuite,
    qkd_key_id: Option<Uuid>,
    peer: DualVerifyingKey,
    pub records: RecordLayer,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("suite", &self.suite.label)
            .field("keys", &self.keys)
            .field("transcript_hash", &hex::encode(self.transcript_hash))
            .field("qkd_key_id", &self.qkd_key_id)
            .finish()
    }
}

impl Session {
    fn new(
        keys: SessionKeys,
        transcript_hash: [u8; 32],
        suite: &'static HybridSuite,
        qkd_key_id: Option<Uuid>,
        peer: DualVerifyingKey,
        role: Role,
    ) -> Self {
        let records = RecordLayer::new(&keys, suite.id, role);
        Session {
            keys,
            transcript_hash,
            suite,
            qkd_key_id,
            peer,
            records,
        }
    }

    pub fn keys(&self) -> &SessionKeys {
        &self.keys
    }

    /// Transcript hash the session keys were derived from.
    pub fn transcript_hash(&self) -> &[u8; 32] {
        &self.transcript_hash
    }

    pub fn suite(&self) -> &'static HybridSuite {
        self.suite
    }

    pub fn qkd_key_id(&self) -> Option<Uuid> {
        self.qkd_key_id
    }

    /// The pinned key the peer authenticated with.
    pub fn peer(&self) -> &DualVerifyingKey {
        &self.peer
    }

    pub fn seal(&mut self, plaintext: &[u8]) -> Result<Vec<u8>, HandshakeError> {
        self.records.seal(plaintext)
    }

    pub fn open(&mut self, record: &[u8]) -> Result<Vec<u8>, HandshakeError> {
        self.records.open(record)
    }
}

/// Initiator after sending Flight1.
pub struct InitiatorAwaitingFlight2<'a> {
    cfg: &'a HandshakeConfig,
    kex: HybridPrivateState,
    transcript: Transcript,
    qkd_key: Option<QkdKey>,
}

impl std::fmt::Debug for InitiatorAwaitingFlight2<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InitiatorAwaitingFlight2")
            .field("suite", &self.cfg.suite.label)
            .finish_non_exhaustive()
    }
}

/// Responder after sending Flight2.
pub struct ResponderAwaitingFlight3<'a> {
    cfg: &'a HandshakeConfig,
    keys: SessionKeys,
    transcript: Transcript,
    th: [u8; 32],
    qkd_key_id: Option<Uuid>,
    peer: DualVerifyingKey,
}

impl std::fmt::Debug for ResponderAwaitingFlight3<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResponderAwaitingFlight3")
            .field("suite", &self.cfg.suite.label)
            .finish_non_exhaustive()
    }
}

/// Generates the ephemeral hybrid keys, fetches a QKD key when configured
/// and signs Flight1.
pub fn initiator_start<'a>(
    cfg: &'a HandshakeConfig,
    rng: &mut impl CryptoRngCore,
) -> Result<(InitiatorAwaitingFlight2<'a>, Flight1), HandshakeError> {
    cfg.expect_role(Role::Initiator)?;
    let (public, kex) = hybrid_keygen(cfg.suite, rng)?;
    let qkd_key = match &cfg.qkd {
        Some(source) => Some(source.master_key()?),
        None => None,
    };
    let mut client_random = [0u8; RANDOM_LEN];
    rng.fill_bytes(&mut client_random);
    let HybridPublicBundle {
        suite_id,
        classical_pub,
        pq_pub,
        extra,
    } = public;
    let mut flight = Flight1 {
        suite_id,
        client_random,
        classical_pub,
        pq_pub,
        extra,
        qkd_key_id: qkd_key.as_ref().map(|k| k.key_id),
        signature: DualSignature {
            classical: [0; 64],
            pq: Vec::new(),
        },
    };
    let mut transcript = Transcript::default();
    transcript.absorb(&flight.signed_bytes());
    flight.signature = dual_sign(
        &cfg.keypair,
        &signed_message(FLIGHT1_SIG_LABEL, &transcript.hash()),
    );
    Ok((
        InitiatorAwaitingFlight2 {
            cfg,
            kex,
            transcript,
            qkd_key,
        },
        flight,
    ))
}

/// Verifies Flight1, encapsulates to it, derives the session keys and
/// answers with a signed, key-confirming Flight2.
pub fn responder_respond<'a>(
    cfg: &'a HandshakeConfig,
    f1: &Flight1,
    rng: &mut impl CryptoRngCore,
) -> Result<(ResponderAwaitingFlight3<'a>, Flight2), HandshakeError> {
    cfg.expect_role(Role::Responder)?;
    check_suite(cfg.suite, f1.suite_id)?;
    let mut transcript = Transcript::default();
    transcript.absorb(&f1.signed_bytes());
    let peer = cfg.verify_peer(
        &signed_message(FLIGHT1_SIG_LABEL, &transcript.hash()),
        &f1.signature,
    )?;
    let qkd_key = match (&cfg.qkd, f1.qkd_key_id) {
        (Some(source), Some(id)) => Some(source.slave_key(id)?),
        (None, None) => None,
        (Some(_), None) => return Err(HandshakeError::QkdMismatch("peer offered no QKD key")),
        (None, Some(_)) => {
            return Err(HandshakeError::QkdMismatch(
                "peer offered a QKD key but no KME is configured",
            ))
        }
    };
    let peer_bundle = HybridPublicBundle {
        suite_id: f1.suite_id,
        classical_pub: f1.classical_pub.clone(),
        pq_pub: f1.pq_pub.clone(),
        extra: f1.extra.clone(),
    };
    let (ct, ecdh_ss, kem_ss) = hybrid_encapsulate(cfg.suite, &peer_bundle, rng)?;
    let mut server_random = [0u8; RANDOM_LEN];
    rng.fill_bytes(&mut server_random);
    let mut flight = Flight2 {
        suite_id: ct.suite_id,
        server_random,
        classical_pub: ct.classical_pub,
        pq_ct: ct.pq_ct,
        signature: DualSignature {
            classical: [0; 64],
            pq: Vec::new(),
        },
        confirm_mac: [0; MAC_LEN],
    };
    transcript.absorb(&flight.signed_bytes());
    let th = transcript.hash();
    flight.signature = dual_sign(&cfg.keypair, &signed_message(FLIGHT2_SIG_LABEL, &th));
    let keys = derive(ecdh_ss, kem_ss, &qkd_key, &th)?;
    flight.confirm_mac = confirm_mac(&keys, RESPONDER_CONFIRM, &th)
        .finalize()
        .into_bytes()
        .into();
    Ok((
        ResponderAwaitingFlight3 {
            cfg,
            keys,
            transcript,
            th,
            qkd_key_id: f1.qkd_key_id,
            peer,
        },
        flight,
    ))
}

impl<'a> InitiatorAwaitingFlight2<'a> {
    /// Verifies Flight2, derives the session keys, checks the responder's
    /// confirmation and produces Flight3.
    pub fn finish(mut self, f2: &Flight2) -> Result<(Session, Flight3), HandshakeError> {
        let suite = self.cfg.suite;
        check_suite(suite, f2.suite_id)?;
        self.transcript.absorb(&f2.signed_bytes());
        let th = self.transcript.hash();
        let peer = self
            .cfg
            .verify_peer(&signed_message(FLIGHT2_SIG_LABEL, &th), &f2.signature)?;
        let (ecdh_ss, kem_ss) = hybrid_decapsulate(
            suite,
            &self.kex,
            &HybridCiphertextBundle {
                suite_id: f2.suite_id,
                classical_pub: f2.classical_pub.clone(),
                pq_ct: f2.pq_ct.clone(),
            },
        )?;
        let keys = derive(ecdh_ss, kem_ss, &self.qkd_key, &th)?;
        confirm_mac(&keys, RESPONDER_CONFIRM, &th)
            .verify_slice(&f2.confirm_mac)
            .map_err(|_| HandshakeError::KeyConfirmation)?;
        self.transcript.absorb(&Flight3::header_bytes(suite.id));
        let th3 = self.transcript.hash();
        let f3 = Flight3 {
            suite_id: suite.id,
            confirm_mac: confirm_mac(&keys, INITIATOR_CONFIRM, &th3)
                .finalize()
                .into_bytes()
                .into(),
        };
        let qkd_key_id = self.qkd_key.as_ref().map(|k| k.key_id);
        Ok((
            Session::new(keys, th, suite, qkd_key_id, peer, Role::Initiator),
            f3,
        ))
    }
}

impl<'a> ResponderAwaitingFlight3<'a> {
    /// Checks the initiator's confirmation and releases the session.
    pub fn finish(mut self, f3: &Flight3) -> Result<Session, HandshakeError> {
        let suite = self.cfg.suite;
        check_suite(suite, f3.suite_id)?;
        self.transcript.absorb(&Flight3::header_bytes(suite.id));
        confirm_mac(&self.keys, INITIATOR_CONFIRM, &self.transcript.hash())
            .verify_slice(&f3.confirm_mac)
            .map_err(|_| HandshakeError::KeyConfirmation)?;
        Ok(Session::new(
            self.keys,
            self.th,
            suite,
            self.qkd_key_id,
            self.peer,
            Role::Responder,
        ))
    }
}

pub fn initiator_finish(
    state: InitiatorAwaitingFlight2<'_>,
    f2: &Flight2,
) -> Result<(Session, Flight3), HandshakeError> {
    state.finish(f2)
}

pub fn responder_finish(
    state: ResponderAwaitingFlight3<'_>,
    f3: &Flight3,
) -> Result<Session, HandshakeError> {
    state.finish(f3)
}

#[cfg(test)]
mod tests;
