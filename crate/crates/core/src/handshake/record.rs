//! AES-256-GCM record protection with implicit per-direction counters.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};

use super::wire::{FlightType, Header, HEADER_LEN};
use super::{HandshakeError, Role};
use crate::hybrid_kex::SessionKeys;

pub const MAX_RECORD_PLAINTEXT: usize = 1 << 16;
const TAG_LEN: usize = 16;

const INITIATOR_TAG: [u8; 4] = *b"ini>";
const RESPONDER_TAG: [u8; 4] = *b"rsp>";

/// Sending and receiving state for one side of a session. The nonce is the
/// 4-byte direction tag followed by the 8-byte big-endian record counter,
/// so a replayed, dropped or reordered record fails authentication.
pub struct RecordLayer {
    cipher: Aes256Gcm,
    suite_id: u16,
    send_tag: [u8; 4],
    recv_tag: [u8; 4],
    send_seq: u64,
    recv_seq: u64,
}

impl std::fmt::Debug for RecordLayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecordLayer")
            .field("send_seq", &self.send_seq)
            .field("recv_seq", &self.recv_seq)
            .finish_non_exhaustive()
    }
}

fn nonce(tag: [u8; 4], seq: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[..4].copy_from_slice(&tag);
    n[4..].copy_from_slice(&seq.to_be_bytes());
    n
}

impl RecordLayer {
    pub fn new(keys: &SessionKeys, suite_id: u16, role: Role) -> Self {
        let (send_tag, recv_tag) = match role {
            Role::Initiator => (INITIATOR_TAG, RESPONDER_TAG),
            Role::Responder => (RESPONDER_TAG, INITIATOR_TAG),
        };
        RecordLayer {
            cipher: Aes256Gcm::new_from_slice(&keys.enc_key[..]).expect("32-byte key"),
            suite_id,
            send_tag,
            recv_tag,
            send_seq: 0,
            recv_seq: 0,
        }
    }

    /// Encrypts `plaintext` into a complete type-4 frame.
    pub fn seal(&mut self, plaintext: &[u8]) -> Result<Vec<u8>, HandshakeError> {
        if plaintext.len() > MAX_RECORD_PLAINTEXT {
            return Err(HandshakeError::RecordTooLarge(plaintext.len()));
        }
        if self.send_seq == u64::MAX {
            return Err(HandshakeError::SessionExpired);
        }
        let header =
            Header::new(FlightType::Record, self.suite_id, plaintext.len() + TAG_LEN).encode();
        let ct = self
            .cipher
            .encrypt(
                Nonce::from_slice(&nonce(self.send_tag, self.send_seq)),
                Payload {
                    msg: plaintext,
                    aad: &header,
                },
            )
            .map_err(|_| HandshakeError::RecordAuth)?;
        self.send_seq += 1;
        let mut frame = header.to_vec();
        frame.extend_from_slice(&ct);
        Ok(frame)
    }

    /// Authenticates and decrypts the next record. A failed record does not
    /// advance the receive counter.
    pub fn open(&mut self, frame: &[u8]) -> Result<Vec<u8>, HandshakeError> {
        if self.recv_seq == u64::MAX {
            return Err(HandshakeError::SessionExpired);
        }
        let (header, body) =
            Header::split(frame, FlightType::Record).map_err(|_| HandshakeError::RecordAuth)?;
        if header.suite_id != self.suite_id || body.len() < TAG_LEN {
            return Err(HandshakeError::RecordAuth);
        }
        let pt = self
            .cipher
            .decrypt(
                Nonce::from_slice(&nonce(self.recv_tag, self.recv_seq)),
                Payload {
                    msg: body,
                    aad: &frame[..HEADER_LEN],
                },
            )
            .map_err(|_| HandshakeError::RecordAuth)?;
        self.recv_seq += 1;
        Ok(pt)
    }

    #[cfg(test)]
    pub(crate) fn set_counters(&mut self, send: u64, recv: u64) {
        self.send_seq = send;
        self.recv_seq = recv;
    }
}
