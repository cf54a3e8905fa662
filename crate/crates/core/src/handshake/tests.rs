use std::sync::{Arc, Mutex};

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use uuid::Uuid;

use super::*;
use crate::dual_sig::dual_keygen;
use crate::qkd::{sim_generate_pool, EpochPool};
use crate::suites::{list_suites, size_profile, suite_by_label};

struct PoolSource {
    pool: Arc<Mutex<EpochPool>>,
    // Flips a key byte on the slave side.
    corrupt: bool,
}

impl QkdKeySource for PoolSource {
    fn master_key(&self) -> Result<QkdKey, QkdError> {
        Ok(self.pool.lock().unwrap().take_enc_keys(1)?.remove(0))
    }

    fn slave_key(&self, key_id: Uuid) -> Result<QkdKey, QkdError> {
        let mut k = self
            .pool
            .lock()
            .unwrap()
            .take_dec_keys(&[key_id])?
            .remove(0);
        if self.corrupt {
            k.key[0] ^= 1;
        }
        Ok(k)
    }
}

struct Pair {
    client: HandshakeConfig,
    server: HandshakeConfig,
}

fn pair(suite: &'static HybridSuite, qkd: bool) -> Pair {
    let ck = dual_keygen(&mut ChaCha20Rng::seed_from_u64(100));
    let sk = dual_keygen(&mut ChaCha20Rng::seed_from_u64(200));
    let client_vk = ck.verifying_key().clone();
    let pool = Arc::new(Mutex::new(sim_generate_pool(&[5; 32], 0, 32, 256).unwrap()));
    let source = |corrupt| -> Option<Arc<dyn QkdKeySource>> {
        qkd.then(|| {
            Arc::new(PoolSource {
                pool: pool.clone(),
                corrupt,
            }) as Arc<dyn QkdKeySource>
        })
    };
    Pair {
        client: HandshakeConfig {
            suite,
            role: Role::Initiator,
            peer_keys: vec![sk.verifying_key().clone()],
            keypair: ck,
            qkd: source(false),
        },
        server: HandshakeConfig {
            suite,
            role: Role::Responder,
            peer_keys: vec![client_vk],
            keypair: sk,
            qkd: source(false),
        },
    }
}

fn mlkem768() -> &'static HybridSuite {
    suite_by_label("X25519-MLKEM768-Draft00").unwrap()
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn run(p: &Pair, seed: u64) -> Result<(Session, Session), HandshakeError> {
    let mut r = rng(seed);
    let (ist, f1) = initiator_start(&p.client, &mut r)?;
    let (rst, f2) = responder_respond(&p.server, &Flight1::decode(&f1.encode())?, &mut r)?;
    let (is, f3) = ist.finish(&Flight2::decode(&f2.encode())?)?;
    let rs = rst.finish(&Flight3::decode(&f3.encode())?)?;
    Ok((is, rs))
}

fn assert_agree(a: &Session, b: &Session) {
    assert_eq!(a.keys(), b.keys());
    assert_eq!(a.transcript_hash(), b.transcript_hash());
    assert_eq!(a.qkd_key_id(), b.qkd_key_id());
}

#[test]
fn every_suite_agrees_with_and_without_qkd() {
    for suite in list_suites() {
        for qkd in [false, true] {
            let p = pair(suite, qkd);
            let (mut i, mut r) = run(&p, suite.id as u64).unwrap();
            assert_agree(&i, &r);
            assert_eq!(i.qkd_key_id().is_some(), qkd);
            let rec = i.seal(b"ping").unwrap();
            assert_eq!(r.open(&rec).unwrap(), b"ping");
            let rec = r.seal(b"pong").unwrap();
            assert_eq!(i.open(&rec).unwrap(), b"pong");
        }
    }
}

#[test]
fn flight1_field_sizes() {
    let p = pair(mlkem768(), false);
    let (_, f1) = initiator_start(&p.client, &mut rng(1)).unwrap();
    assert_eq!(f1.classical_pub.len() + f1.pq_pub.len(), 32 + 1184);
    assert_eq!(f1.qkd_key_id, None);
    let bytes = f1.encode();
    // QKD field sits right before the signature: prefix 1, flag 0.
    let flag_at = bytes.len() - (4 + crate::dual_sig::DUAL_SIG_LEN) - 1;
    assert_eq!(&bytes[flag_at - 4..=flag_at], &[0, 0, 0, 1, 0]);

    let p = pair(mlkem768(), true);
    let (_, f1) = initiator_start(&p.client, &mut rng(1)).unwrap();
    assert_eq!(f1.qkd_key_id.unwrap().as_bytes().len(), 16);
}

#[test]
fn flight2_ciphertext_follows_profile() {
    for label in ["X25519-MLKEM768-Draft00", "X25519-FrodoKEM976-AESDraft00"] {
        let suite = suite_by_label(label).unwrap();
        let p = pair(suite, false);
        let mut r = rng(2);
        let (_, f1) = initiator_start(&p.client, &mut r).unwrap();
        let (_, f2) = responder_respond(&p.server, &f1, &mut r).unwrap();
        assert_eq!(f2.pq_ct.len(), size_profile(suite).pq_ct);
        assert_eq!(f1.extra.len(), suite.extra_flight1_bytes);
    }
}

#[test]
fn flipped_flight1_signature_is_auth_failure() {
    let p = pair(mlkem768(), false);
    let mut r = rng(3);
    let (_, mut f1) = initiator_start(&p.client, &mut r).unwrap();
    f1.signature.pq[100] ^= 0x04;
    assert!(matches!(
        responder_respond(&p.server, &f1, &mut r),
        Err(HandshakeError::Auth(_))
    ));
}

#[test]
fn unknown_suite_is_malformed() {
    let p = pair(mlkem768(), false);
    let (_, f1) = initiator_start(&p.client, &mut rng(4)).unwrap();
    let mut bytes = f1.encode();
    bytes[2..4].copy_from_slice(&0x7777u16.to_be_bytes());
    assert!(matches!(
        Flight1::decode(&bytes),
        Err(HandshakeError::Malformed(_))
    ));
}

#[test]
fn suite_downgrade_aborts() {
    // A responder configured for a different suite refuses the offer, and a
    // rewritten suite id breaks the initiator's signature.
    let p = pair(mlkem768(), false);
    let mut r = rng(5);
    let (_, f1) = initiator_start(&p.client, &mut r).unwrap();
    let other = pair(suite_by_label("X25519-Kyber768-Draft00").unwrap(), false);
    assert!(matches!(
        responder_respond(&other.server, &f1, &mut r),
        Err(HandshakeError::Malformed(_))
    ));
    let mut relabelled = f1.clone();
    relabelled.suite_id = 1;
    let kyber = pair(suite_by_label("X25519-Kyber768-Draft00").unwrap(), false);
    assert!(matches!(
        responder_respond(&kyber.server, &relabelled, &mut r),
        Err(HandshakeError::Auth(_))
    ));
}

#[test]
fn corrupted_ciphertext_fails_confirmation() {
    let p = pair(mlkem768(), false);
    let mut r = rng(6);
    let (ist, f1) = initiator_start(&p.client, &mut r).unwrap();
    let (_, mut f2) = responder_respond(&p.server, &f1, &mut r).unwrap();
    f2.pq_ct[10] ^= 1;
    // Re-sign so the change survives authentication and reaches the KEM.
    let mut t = Transcript::default();
    t.absorb(&f1.signed_bytes());
    t.absorb(&f2.signed_bytes());
    f2.signature = dual_sign(
        &p.server.keypair,
        &signed_message(FLIGHT2_SIG_LABEL, &t.hash()),
    );
    assert!(matches!(
        ist.finish(&f2),
        Err(HandshakeError::KeyConfirmation)
    ));
}

#[test]
fn wrong_pinned_responder_key() {
    let mut p = pair(mlkem768(), false);
    p.client.peer_keys = vec![dual_keygen(&mut rng(999)).verifying_key().clone()];
    assert!(matches!(run(&p, 7), Err(HandshakeError::Auth(_))));
}

#[test]
fn truncated_flight3_is_malformed() {
    let p = pair(mlkem768(), false);
    let mut r = rng(8);
    let (ist, f1) = initiator_start(&p.client, &mut r).unwrap();
    let (_, f2) = responder_respond(&p.server, &f1, &mut r).unwrap();
    let (_, f3) = ist.finish(&f2).unwrap();
    let bytes = f3.encode();
    assert!(matches!(
        Flight3::decode(&bytes[..bytes.len() - 3]),
        Err(HandshakeError::Malformed(_))
    ));
}

#[test]
fn replayed_flight3_from_another_session() {
    let p = pair(mlkem768(), false);
    let mut r = rng(9);
    let (ist, f1) = initiator_start(&p.client, &mut r).unwrap();
    let (_, f2) = responder_respond(&p.server, &f1, &mut r).unwrap();
    let (_, old_f3) = ist.finish(&f2).unwrap();

    let (_, f1b) = initiator_start(&p.client, &mut r).unwrap();
    let (rst, _) = responder_respond(&p.server, &f1b, &mut r).unwrap();
    assert!(matches!(
        rst.finish(&old_f3),
        Err(HandshakeError::KeyConfirmation)
    ));
}

#[test]
fn substituted_qkd_key_fails_confirmation() {
    let mut p = pair(mlkem768(), true);
    let pool = Arc::new(Mutex::new(sim_generate_pool(&[5; 32], 0, 32, 256).unwrap()));
    p.client.qkd = Some(Arc::new(PoolSource {
        pool: pool.clone(),
        corrupt: false,
    }));
    p.server.qkd = Some(Arc::new(PoolSource {
        pool,
        corrupt: true,
    }));
    assert!(matches!(run(&p, 10), Err(HandshakeError::KeyConfirmation)));
}

#[test]
fn qkd_presence_must_match() {
    let with = pair(mlkem768(), true);
    let without = pair(mlkem768(), false);
    let mut r = rng(11);
    let (_, f1) = initiator_start(&without.client, &mut r).unwrap();
    assert!(matches!(
        responder_respond(&with.server, &f1, &mut r),
        Err(HandshakeError::QkdMismatch(_))
    ));
    let (_, f1) = initiator_start(&with.client, &mut r).unwrap();
    assert!(matches!(
        responder_respond(&without.server, &f1, &mut r),
        Err(HandshakeError::QkdMismatch(_))
    ));
}

struct DeadKme;

impl QkdKeySource for DeadKme {
    fn master_key(&self) -> Result<QkdKey, QkdError> {
        Err(QkdError::Network("connection refused".into()))
    }
    fn slave_key(&self, _: Uuid) -> Result<QkdKey, QkdError> {
        Err(QkdError::Network("connection refused".into()))
    }
}

#[test]
fn kme_failure_aborts_without_fallback() {
    let mut p = pair(mlkem768(), true);
    p.client.qkd = Some(Arc::new(DeadKme));
    assert!(matches!(
        initiator_start(&p.client, &mut rng(12)),
        Err(HandshakeError::Qkd(_))
    ));
    let ok = pair(mlkem768(), true);
    let mut r = rng(13);
    let (_, f1) = initiator_start(&ok.client, &mut r).unwrap();
    p.server.qkd = Some(Arc::new(DeadKme));
    assert!(matches!(
        responder_respond(&p.server, &f1, &mut r),
        Err(HandshakeError::Qkd(_))
    ));
}

#[test]
fn wrong_role_rejected() {
    let p = pair(mlkem768(), false);
    assert!(matches!(
        initiator_start(&p.server, &mut rng(14)),
        Err(HandshakeError::Config(_))
    ));
}

#[test]
fn flights_carry_no_secrets() {
    let p = pair(mlkem768(), true);
    let mut r = rng(15);
    let (ist, f1) = initiator_start(&p.client, &mut r).unwrap();
    let qkd_bytes = ist.qkd_key.as_ref().unwrap().key.clone();
    let (_, f2) = responder_respond(&p.server, &f1, &mut r).unwrap();
    let (s, f3) = ist.finish(&f2).unwrap();
    let wire = [f1.encode(), f2.encode(), f3.encode()].concat();
    for secret in [&s.keys().enc_key[..], &s.keys().mac_key[..], &qkd_bytes[..]] {
        assert!(!wire.windows(secret.len()).any(|w| w == secret));
    }
}

// Flips one byte at positions spread across every flight (at least 200 in
// total) and checks that the handshake never completes on either side.
#[test]
fn single_byte_tampering_always_aborts() {
    let p = pair(mlkem768(), false);
    let mut positions_tested = 0;
    for flight in 1..=3 {
        let mut r = rng(16);
        let (ist, f1) = initiator_start(&p.client, &mut r).unwrap();
        let f1b = f1.encode();
        let (rst, f2) = responder_respond(&p.server, &f1, &mut r).unwrap();
        let f2b = f2.encode();
        let (_, f3) = initiator_start(&p.client, &mut rng(16))
            .unwrap()
            .0
            .finish(&f2)
            .unwrap();
        let f3b = f3.encode();
        let target = match flight {
            1 => &f1b,
            2 => &f2b,
            _ => &f3b,
        };
        let stride = (target.len() / 90).max(1);
        let positions: Vec<usize> = (0..target.len()).step_by(stride).collect();
        for &pos in &positions {
            let mut t = target.clone();
            t[pos] ^= 0x80;
            let aborted = match flight {
                1 => Flight1::decode(&t)
                    .and_then(|f| responder_respond(&p.server, &f, &mut rng(17)).map(|_| ()))
                    .is_err(),
                2 => {
                    let (ist2, _) = initiator_start(&p.client, &mut rng(16)).unwrap();
                    Flight2::decode(&t)
                        .and_then(|f| ist2.finish(&f).map(|_| ()))
                        .is_err()
                }
                _ => {
                    let mut r2 = rng(16);
                    let (_, f1x) = initiator_start(&p.client, &mut r2).unwrap();
                    let (rst2, _) = responder_respond(&p.server, &f1x, &mut r2).unwrap();
                    Flight3::decode(&t)
                        .and_then(|f| rst2.finish(&f).map(|_| ()))
                        .is_err()
                }
            };
            assert!(aborted, "flight {flight} byte {pos} accepted");
        }
        positions_tested += positions.len();
        drop((ist, rst));
    }
    assert!(positions_tested >= 200, "{positions_tested}");
}
