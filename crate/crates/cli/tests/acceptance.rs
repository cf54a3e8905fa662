//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the verdict lines are always printed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, ChildStdout, Command, ExitCode, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use hybridkex::bench::{
    account_bytes, check_against_reference, compute_stats, run_bench, suite_packets, BenchConfig,
    DEFAULT_MTU,
};
use hybridkex::dual_sig::{
    dual_keygen, dual_sign, dual_verify, DualKeypair, DualSignature, DUAL_SIG_LEN, ED25519_SIG_LEN,
};
use hybridkex::handshake::{
    initiator_start, responder_respond, Flight1, Flight2, Flight3, HandshakeConfig, HandshakeError,
    Role, Session,
};
use hybridkex::hybrid_kex::{
    combine_secrets, derive_session_keys, hybrid_decapsulate, hybrid_encapsulate, hybrid_keygen,
    kdf2_sha256, SecretBundle,
};
use hybridkex::provider::ClassicalSecret;
use hybridkex::qkd::{sim_generate_pool, EpochPool, QkdError, QkdKey, QkdKeySource};
use hybridkex::suites::{
    list_suites, strength_estimate, suite_by_label, ClassicalGroup, HybridSuite,
};
use rand_core::OsRng;
use serde_json::Value;
use sha2::{Digest, Sha256};
use uuid::Uuid;

type Verdict = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

const BIN: &str = env!("CARGO_BIN_EXE_hybridkex");

/// Published evaluation table: label, bytes, packets, pqc bits, classical bits.
const TABLE: [(&str, usize, usize, u16, u16); 10] = [
    ("X25519-Kyber768-Draft00", 2336, 2, 192, 128),
    ("X25519-MLKE512M-Draft00", 1632, 2, 128, 128),
    ("X25519-MLKE768M-Draft00", 2336, 2, 192, 128),
    ("X25519-MLKE1024M-Draft00", 3200, 4, 256, 128),
    ("X448-MLKEM768-Draft00", 2384, 2, 192, 224),
    ("X25519e-FrodoKEM976-SHAKEDraft00", 31440, 22, 192, 128),
    ("X25519-FrodoKEM976-SHAKEDraft00", 31488, 22, 192, 128),
    ("X25519e-FrodoKEM976-AESDraft00", 31440, 22, 192, 128),
    ("X25519-FrodoKEM976-AESDraft00", 31488, 22, 192, 128),
    ("X25519-Mceliece-Draft00", 200722, 139, 128, 128),
];

const MCELIECE: &str = "X25519-Mceliece-Draft00";

struct SplitMix(u64);

impl SplitMix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

/// Kills the child if the criterion bails out early.
struct Proc(Child);

impl Drop for Proc {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn(args: &[&str]) -> Result<(Proc, BufReader<ChildStdout>), String> {
    let mut child = Command::new(BIN)
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("spawn {args:?}: {e}"))?;
    let out = BufReader::new(child.stdout.take().expect("piped stdout"));
    Ok((Proc(child), out))
}

fn first_line(out: &mut BufReader<ChildStdout>) -> Result<String, String> {
    let mut line = String::new();
    out.read_line(&mut line).map_err(|e| e.to_string())?;
    Ok(line.trim_end().to_string())
}

fn wait_exit(p: &mut Proc, limit: Duration) -> Result<std::process::ExitStatus, String> {
    let deadline = Instant::now() + limit;
    loop {
        if let Some(status) = p.0.try_wait().map_err(|e| e.to_string())? {
            return Ok(status);
        }
        if Instant::now() > deadline {
            return Err("process did not exit in time".into());
        }
        std::thread::sleep(Duration::from_millis(10));
    }
}

fn run_cli(args: &[&str]) -> Result<(i32, String, String), String> {
    let out = Command::new(BIN)
        .args(args)
        .output()
        .map_err(|e| format!("run {args:?}: {e}"))?;
    Ok((
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    ))
}

/// Value of `name=` in a `key=value` status line.
fn field<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(name)?.strip_prefix('='))
}

fn suite(label: &str) -> &'static HybridSuite {
    suite_by_label(label).expect("registered suite")
}

// AC1

fn ac1_bytes() -> Verdict {
    let start = Instant::now();
    let (code, out, err) = run_cli(&["bench", "--check"])?;
    let elapsed = start.elapsed();
    ensure!(code == 0, "bench --check exited {code}: {err}");
    ensure!(
        elapsed < Duration::from_secs(1),
        "bench --check took {elapsed:?}"
    );
    for (label, bytes, ..) in TABLE.iter().filter(|r| r.0 != MCELIECE) {
        let line = format!("PASS {label} bytes: {bytes}");
        ensure!(out.lines().any(|l| l == line), "missing line {line:?}");
        let computed = account_bytes(suite(label));
        ensure!(computed.verified, "{label} accounting not derived");
        ensure!(
            computed.total == *bytes,
            "{label}: {} != {bytes}",
            computed.total
        );
        ensure!(
            computed.flight1 + computed.flight2 == *bytes,
            "{label}: flights do not sum to {bytes}"
        );
    }
    ensure!(!out.contains("FAIL"), "bench --check reported a failure");
    Ok(format!(
        "nine rows exact, bench --check in {} ms",
        elapsed.as_millis()
    ))
}

// AC2

fn ac2_packets() -> Verdict {
    for (label, _, packets, ..) in TABLE.iter().filter(|r| r.0 != MCELIECE) {
        let s = suite(label);
        let b = account_bytes(s);
        let ceil = |n: usize| n.div_ceil(DEFAULT_MTU);
        let oracle = ceil(b.flight1) + ceil(b.flight2);
        ensure!(
            oracle == *packets,
            "{label}: per-flight ceiling {oracle} != {packets}"
        );
        let computed = suite_packets(s, DEFAULT_MTU).map_err(|e| e.to_string())?;
        ensure!(computed == *packets, "{label}: {computed} != {packets}");
    }
    let (code, out, err) = run_cli(&["suites", "--json"])?;
    ensure!(code == 0, "suites --json exited {code}: {err}");
    let rows: Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    let rows = rows.as_array().ok_or("suites --json is not an array")?;
    ensure!(rows.len() == 10, "{} suites listed", rows.len());
    for row in rows {
        let label = row["label"].as_str().ok_or("label missing")?;
        let verified = row["verified_accounting"].as_bool().ok_or("flag missing")?;
        ensure!(
            verified == (label != MCELIECE),
            "{label}: verified_accounting={verified}"
        );
        let (_, _, packets, ..) = TABLE.iter().find(|r| r.0 == label).ok_or("unknown label")?;
        ensure!(
            row["packets"] == *packets,
            "{label}: packets {}",
            row["packets"]
        );
    }
    let outcomes = check_against_reference(&[suite(MCELIECE)]).map_err(|e| e.to_string())?;
    ensure!(
        outcomes.iter().filter(|o| !o.judged).count() == 2,
        "McEliece bytes/packets should be reported unjudged"
    );
    Ok("nine rows exact at MTU 1500, McEliece flagged unverified".into())
}

// AC3

fn ac3_strengths() -> Verdict {
    for (label, _, _, pqc, classical) in TABLE {
        let got = strength_estimate(suite(label)).map_err(|e| e.to_string())?;
        ensure!(
            got == (pqc, classical),
            "{label}: {got:?} != ({pqc}, {classical})"
        );
    }
    Ok("ten (pqc, classical) pairs exact".into())
}

// AC4

fn oracle_stats(samples: &[u64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let sum: u128 = samples.iter().map(|&s| s as u128).sum();
    let mean = sum as f64 / n;
    let ss: f64 = samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn rel_close(a: f64, b: f64) -> bool {
    if b == 0.0 {
        a == 0.0
    } else {
        ((a - b) / b).abs() <= 1e-9
    }
}

fn ac4_timing_properties() -> Verdict {
    let cfg = BenchConfig {
        iterations: 100,
        warmup: 0,
        ..Default::default()
    };
    let rows = run_bench(&cfg).map_err(|e| e.to_string())?;
    ensure!(rows.len() == 10, "{} rows", rows.len());
    for r in &rows {
        let t = r.timing;
        ensure!(
            t.iterations >= 100,
            "{}: {} iterations",
            r.label,
            t.iterations
        );
        ensure!(
            t.min_ns as f64 <= t.average_ns && t.average_ns <= t.max_ns as f64,
            "{}: min/avg/max out of order",
            r.label
        );
        ensure!(t.std_dev_ns >= 0.0, "{}: negative std", r.label);
    }
    for c in [0u64, 1, 1234, u64::MAX / 4] {
        let t = compute_stats(&[c; 100]).map_err(|e| e.to_string())?;
        ensure!(t.std_dev_ns == 0.0, "constant {c}: std {}", t.std_dev_ns);
        ensure!(
            t.average_ns == c as f64,
            "constant {c}: avg {}",
            t.average_ns
        );
    }
    let mut rng = SplitMix(4);
    for case in 0..1000 {
        let n = 2 + rng.below(300) as usize;
        let base = rng.below(1_000_000_000);
        let spread = 1 + rng.below(10_000_000);
        let samples: Vec<u64> = (0..n).map(|_| base + rng.below(spread)).collect();
        let t = compute_stats(&samples).map_err(|e| e.to_string())?;
        let (mean, std) = oracle_stats(&samples);
        ensure!(
            rel_close(t.average_ns, mean),
            "case {case}: mean {} vs {mean}",
            t.average_ns
        );
        ensure!(
            rel_close(t.std_dev_ns, std),
            "case {case}: std {} vs {std}",
            t.std_dev_ns
        );
    }
    Ok("100 iterations x 10 suites ordered, constant samples give 0, 1000 oracle cases within 1e-9".into())
}

// AC5

fn kdf2_oracle(z: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::new();
    let mut counter = 1u32;
    while out.len() < len {
        out.extend_from_slice(
            &Sha256::new()
                .chain_update(z)
                .chain_update(counter.to_be_bytes())
                .finalize(),
        );
        counter += 1;
    }
    out.truncate(len);
    out
}

fn ac5_kex_correctness() -> Verdict {
    let mut rng = OsRng;
    for s in list_suites() {
        let mut previous: Option<Vec<u8>> = None;
        for i in 0..100 {
            let (public, state) = hybrid_keygen(s, &mut rng).map_err(|e| e.to_string())?;
            let (ct, ecdh_r, kem_r) =
                hybrid_encapsulate(s, &public, &mut rng).map_err(|e| e.to_string())?;
            let (ecdh_i, kem_i) = hybrid_decapsulate(s, &state, &ct).map_err(|e| e.to_string())?;
            ensure!(
                ecdh_i[..] == ecdh_r[..],
                "{} run {i}: ECDH secrets differ",
                s.label
            );
            ensure!(
                kem_i[..] == kem_r[..],
                "{} run {i}: KEM secrets differ",
                s.label
            );
            ensure!(
                previous.as_deref() != Some(&kem_i[..]),
                "{}: KEM secret repeated",
                s.label
            );
            let keys = |ecdh_ss, kem_ss| {
                let ikm = combine_secrets(&SecretBundle {
                    ecdh_ss,
                    kem_ss,
                    qkd_key: Default::default(),
                })
                .map_err(|e| e.to_string())?;
                derive_session_keys(&ikm, &[7; 32]).map_err(|e| e.to_string())
            };
            previous = Some(kem_i.to_vec());
            ensure!(
                keys(ecdh_i, kem_i)? == keys(ecdh_r, kem_r)?,
                "{}: session keys differ",
                s.label
            );
        }
    }

    let unhex = |s: &str| hex::decode(s).expect("hex literal");
    let alice = ClassicalSecret::from_bytes(
        ClassicalGroup::X25519,
        &unhex("77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a"),
    )
    .map_err(|e| e.to_string())?;
    let bob_pub = unhex("de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f");
    ensure!(
        alice.public_key()
            == unhex("8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a"),
        "X25519 public key mismatch"
    );
    let shared = alice.agree(&bob_pub).map_err(|e| e.to_string())?;
    ensure!(
        shared[..] == unhex("4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742")[..],
        "X25519 shared secret mismatch"
    );

    let base = dual_keygen(&mut rng);
    let kp = DualKeypair::from_components(
        &unhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"),
        &unhex("d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"),
        &base.pq_signing_bytes(),
        &base.verifying_key().pq,
    )
    .map_err(|e| e.to_string())?;
    let sig = dual_sign(&kp, b"");
    ensure!(
        sig.classical[..] == unhex("e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b")[..],
        "Ed25519 component differs from the RFC 8032 TEST 1 signature"
    );

    let mut r = SplitMix(5);
    for case in 0..1000 {
        let z: Vec<u8> = (0..r.below(200)).map(|_| r.next() as u8).collect();
        let len = r.below(300) as usize;
        let got = kdf2_sha256(&z, len).map_err(|e| e.to_string())?;
        ensure!(
            got == kdf2_oracle(&z, len),
            "KDF2 case {case} (z {} B, {len} B out)",
            z.len()
        );
    }
    Ok("100 round trips x 10 suites, RFC 7748 and RFC 8032 vectors, 1000 KDF2 oracle cases".into())
}

// AC6

fn ac6_dual_signature() -> Verdict {
    let kp = dual_keygen(&mut OsRng);
    let msg = b"dual signature acceptance";
    let sig = dual_sign(&kp, msg);
    ensure!(
        dual_verify(kp.verifying_key(), msg, &sig).is_ok(),
        "honest signature rejected"
    );
    let wire = sig.to_bytes();
    ensure!(wire.len() == DUAL_SIG_LEN, "wire length {}", wire.len());
    let mut rng = SplitMix(6);
    let mut positions = BTreeSet::new();
    let (mut classical, mut pq) = (0, 0);
    for i in 0..400 {
        // Alternate components so both get a fair share of the flips.
        let pos = if i % 2 == 0 {
            rng.below(ED25519_SIG_LEN as u64) as usize
        } else {
            ED25519_SIG_LEN + rng.below((DUAL_SIG_LEN - ED25519_SIG_LEN) as u64) as usize
        };
        let mut bad = wire.clone();
        bad[pos] ^= 1 << rng.below(8);
        let parsed = DualSignature::from_bytes(&bad).map_err(|e| e.to_string())?;
        ensure!(
            dual_verify(kp.verifying_key(), msg, &parsed).is_err(),
            "flip at byte {pos} accepted"
        );
        positions.insert(pos);
        if pos < ED25519_SIG_LEN {
            classical += 1;
        } else {
            pq += 1;
        }
    }
    ensure!(
        positions.len() >= 200,
        "only {} distinct positions",
        positions.len()
    );
    let other = dual_sign(&dual_keygen(&mut OsRng), msg);
    let mixed = DualSignature {
        classical: sig.classical,
        pq: other.pq,
    };
    ensure!(
        dual_verify(kp.verifying_key(), msg, &mixed).is_err(),
        "mixed components accepted"
    );
    Ok(format!(
        "{} distinct positions rejected ({classical} classical, {pq} ML-DSA flips)",
        positions.len()
    ))
}

// AC7

fn write_json(path: &Path, v: &Value) -> Result<(), String> {
    std::fs::write(path, serde_json::to_vec_pretty(v).expect("json")).map_err(|e| e.to_string())
}

fn keygen(dir: &Path, name: &str) -> Result<String, String> {
    let prefix = dir.join(name);
    let (code, out, err) = run_cli(&["keygen", "--out", prefix.to_str().unwrap()])?;
    ensure!(code == 0, "keygen exited {code}: {err}");
    out.lines()
        .find_map(|l| l.strip_prefix("fingerprint: "))
        .map(str::to_string)
        .ok_or_else(|| "keygen printed no fingerprint".into())
}

fn kme_config(seed: &str, listen: &str) -> Value {
    serde_json::json!({
        "link_seed_hex": seed,
        "epoch": 0,
        "key_count": 64,
        "key_size_bits": 256,
        "master_sae_id": "sae-alice",
        "slave_sae_id": "sae-bob",
        "listen_addr": listen,
    })
}

fn spawn_kme(dir: &Path, name: &str, seed: &str) -> Result<(Proc, String), String> {
    let path = dir.join(format!("{name}.json"));
    write_json(&path, &kme_config(seed, "127.0.0.1:0"))?;
    let (p, mut out) = spawn(&["qkd-sim", "--config", path.to_str().unwrap()])?;
    let line = first_line(&mut out)?;
    let url = line
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected qkd-sim banner {line:?}"))?;
    Ok((p, url.to_string()))
}

fn one_e2e_run(
    dir: &Path,
    label: &str,
    kme: Option<&str>,
    ids: (&str, &str),
) -> Result<(), String> {
    let tag = format!("{label}-{}", if kme.is_some() { "qkd" } else { "plain" });
    let qkd = |own: &str, peer: &str| {
        kme.map(
            |url| serde_json::json!({"kme_endpoint": url, "own_sae_id": own, "peer_sae_id": peer}),
        )
    };
    let mut server = serde_json::json!({
        "suite": label,
        "role": "responder",
        "address": "127.0.0.1:0",
        "own_key": {"file": "server.key"},
        "peer_keys": [{"file": "client.pub"}],
    });
    let mut client = serde_json::json!({
        "suite": label,
        "role": "initiator",
        "address": "unused:0",
        "own_key": {"file": "client.key"},
        "peer_keys": [{"file": "server.pub"}],
    });
    if let Some(q) = qkd("sae-bob", "sae-alice") {
        server["qkd"] = q;
    }
    if let Some(q) = qkd("sae-alice", "sae-bob") {
        client["qkd"] = q;
    }
    let server_cfg = dir.join(format!("server-{tag}.json"));
    let client_cfg = dir.join(format!("client-{tag}.json"));
    write_json(&server_cfg, &server)?;
    write_json(&client_cfg, &client)?;

    let (mut srv, mut srv_out) = spawn(&[
        "serve",
        "--config",
        server_cfg.to_str().unwrap(),
        "--max-sessions",
        "1",
    ])?;
    let banner = first_line(&mut srv_out)?;
    let addr = banner
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("{tag}: unexpected serve banner {banner:?}"))?
        .to_string();
    let message = format!("hello over {label}");
    let (code, out, err) = run_cli(&[
        "connect",
        "--config",
        client_cfg.to_str().unwrap(),
        "--address",
        &addr,
        "--message",
        &message,
    ])?;
    ensure!(code == 0, "{tag}: connect exited {code}: {err}");
    let status = wait_exit(&mut srv, Duration::from_secs(20))?;
    ensure!(status.success(), "{tag}: serve exited with {status}");
    let mut rest = String::new();
    srv_out
        .read_to_string(&mut rest)
        .map_err(|e| e.to_string())?;

    let c = out
        .lines()
        .find(|l| l.starts_with("connected to "))
        .ok_or("no connect line")?;
    let s = rest
        .lines()
        .find(|l| l.starts_with("session 1: established"))
        .ok_or_else(|| format!("{tag}: server did not establish: {rest}"))?;
    ensure!(
        out.lines().any(|l| l == format!("echo: {message}")),
        "{tag}: echo missing"
    );
    for name in ["suite", "fingerprint", "transcript", "qkd"] {
        ensure!(
            field(c, name).is_some() && field(c, name) == field(s, name),
            "{tag}: {name} differs between client and server"
        );
    }
    ensure!(
        field(c, "peer") == Some(ids.1),
        "{tag}: client saw wrong server identity"
    );
    ensure!(
        field(s, "peer") == Some(ids.0),
        "{tag}: server saw wrong client identity"
    );
    let qkd_id = field(c, "qkd").unwrap_or("none");
    ensure!(
        (qkd_id != "none") == kme.is_some() && (kme.is_none() || Uuid::parse_str(qkd_id).is_ok()),
        "{tag}: qkd field {qkd_id}"
    );
    Ok(())
}

fn ac7_end_to_end() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let client_fp = keygen(dir.path(), "client")?;
    let server_fp = keygen(dir.path(), "server")?;
    let (_kme, url) = spawn_kme(dir.path(), "kme", &"42".repeat(32))?;
    let mut runs = 0;
    for s in list_suites() {
        for kme in [None, Some(url.as_str())] {
            one_e2e_run(dir.path(), s.label, kme, (&client_fp, &server_fp))?;
            runs += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{runs} process-level handshakes agreed in {:.1} s",
        elapsed.as_secs_f64()
    ))
}

// AC8

struct PoolSource {
    pool: Arc<Mutex<EpochPool>>,
    substitute: bool,
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
        if self.substitute {
            k.key[0] ^= 0x80;
        }
        Ok(k)
    }
}

fn node_pair(s: &'static HybridSuite, substitute: bool) -> (HandshakeConfig, HandshakeConfig) {
    let ik = dual_keygen(&mut OsRng);
    let rk = dual_keygen(&mut OsRng);
    let pool = Arc::new(Mutex::new(
        sim_generate_pool(&[9; 32], 0, 4096, 256).expect("pool"),
    ));
    let source = |substitute| {
        Some(Arc::new(PoolSource {
            pool: Arc::clone(&pool),
            substitute,
        }) as Arc<dyn QkdKeySource>)
    };
    let ini = HandshakeConfig {
        suite: s,
        role: Role::Initiator,
        peer_keys: vec![rk.verifying_key().clone()],
        keypair: ik,
        qkd: source(false),
    };
    let rsp = HandshakeConfig {
        suite: s,
        role: Role::Responder,
        peer_keys: vec![ini.keypair.verifying_key().clone()],
        keypair: rk,
        qkd: source(substitute),
    };
    (ini, rsp)
}

enum Outcome {
    Established(Box<(Session, Session)>, Vec<u8>),
    /// Flight number whose receiver aborted, and why.
    Aborted(u8, HandshakeError),
}

/// Runs one in-memory handshake, letting `tamper` rewrite the encoded
/// frame of flight `stage` before it is delivered.
fn handshake(
    ini: &HandshakeConfig,
    rsp: &HandshakeConfig,
    stage: u8,
    tamper: impl FnOnce(&mut Vec<u8>),
) -> Result<Outcome, String> {
    let mut rng = OsRng;
    let mut tamper = Some(tamper);
    let mut deliver = |n: u8, mut bytes: Vec<u8>| {
        if n == stage {
            (tamper.take().expect("single use"))(&mut bytes);
        }
        bytes
    };
    let (ist, f1) = initiator_start(ini, &mut rng).map_err(|e| format!("initiator_start: {e}"))?;
    let b1 = deliver(1, f1.encode());
    let f1 = match Flight1::decode(&b1) {
        Ok(f) => f,
        Err(e) => return Ok(Outcome::Aborted(1, e)),
    };
    let (rst, f2) = match responder_respond(rsp, &f1, &mut rng) {
        Ok(v) => v,
        Err(e) => return Ok(Outcome::Aborted(1, e)),
    };
    let b2 = deliver(2, f2.encode());
    let (isess, f3) = match Flight2::decode(&b2).and_then(|f2| ist.finish(&f2)) {
        Ok(v) => v,
        Err(e) => return Ok(Outcome::Aborted(2, e)),
    };
    let honest_f3 = f3.encode();
    let b3 = deliver(3, honest_f3.clone());
    match Flight3::decode(&b3).and_then(|f3| rst.finish(&f3)) {
        Ok(rsess) => Ok(Outcome::Established(Box::new((isess, rsess)), honest_f3)),
        Err(e) => Ok(Outcome::Aborted(3, e)),
    }
}

fn expect_abort(
    what: &str,
    ini: &HandshakeConfig,
    rsp: &HandshakeConfig,
    stage: u8,
    tamper: impl FnOnce(&mut Vec<u8>),
) -> Result<HandshakeError, String> {
    match handshake(ini, rsp, stage, tamper)? {
        Outcome::Aborted(at, e) if at == stage => Ok(e),
        Outcome::Aborted(at, e) => Err(format!(
            "{what}: aborted at flight {at} instead of {stage}: {e}"
        )),
        Outcome::Established(..) => Err(format!("{what}: handshake completed")),
    }
}

fn edit<T>(
    decode: fn(&[u8]) -> Result<T, HandshakeError>,
    encode: fn(&T) -> Vec<u8>,
    f: impl FnOnce(&mut T),
) -> impl FnOnce(&mut Vec<u8>) {
    move |bytes| {
        let mut v = decode(bytes).expect("honest frame decodes");
        f(&mut v);
        *bytes = encode(&v);
    }
}

fn ac8_tamper() -> Verdict {
    let s = suite("X25519-MLKEM768-Draft00");
    let (ini, rsp) = node_pair(s, false);
    let Outcome::Established(sessions, _) = handshake(&ini, &rsp, 0, |_| {})? else {
        return Err("honest control run failed".into());
    };
    ensure!(
        sessions.0.keys() == sessions.1.keys(),
        "control run keys differ"
    );

    let f1 = |f: fn(&mut Flight1)| edit(Flight1::decode, Flight1::encode, f);
    let f2 = |f: fn(&mut Flight2)| edit(Flight2::decode, Flight2::encode, f);
    let f3 = |f: fn(&mut Flight3)| edit(Flight3::decode, Flight3::encode, f);
    let mut cases = 0;
    macro_rules! case {
        ($what:expr, $stage:expr, $tamper:expr, $pat:pat) => {{
            let e = expect_abort($what, &ini, &rsp, $stage, $tamper)?;
            ensure!(matches!(e, $pat), "{}: unexpected error {e:?}", $what);
            cases += 1;
        }};
    }
    use HandshakeError::{Auth, KeyConfirmation, Malformed};
    case!(
        "f1 suite_id downgrade",
        1,
        f1(|f| f.suite_id = suite("X25519-Kyber768-Draft00").id),
        Auth(_) | Malformed(_)
    );
    case!(
        "f1 client_random",
        1,
        f1(|f| f.client_random[0] ^= 1),
        Auth(_)
    );
    case!(
        "f1 classical_pub",
        1,
        f1(|f| f.classical_pub[5] ^= 1),
        Auth(_)
    );
    case!(
        "f1 pq_pub",
        1,
        f1(|f| *f.pq_pub.last_mut().unwrap() ^= 1),
        Auth(_)
    );
    case!(
        "f1 qkd_key_id",
        1,
        f1(|f| f.qkd_key_id = Some(Uuid::from_bytes([0x5a; 16]))),
        Auth(_)
    );
    case!(
        "f1 qkd_key_id dropped",
        1,
        f1(|f| f.qkd_key_id = None),
        Auth(_) | HandshakeError::QkdMismatch(_)
    );
    case!(
        "f1 ed25519 signature",
        1,
        f1(|f| f.signature.classical[10] ^= 1),
        Auth(_)
    );
    case!(
        "f1 ml-dsa signature",
        1,
        f1(|f| f.signature.pq[100] ^= 1),
        Auth(_)
    );
    case!(
        "f1 truncated",
        1,
        |b: &mut Vec<u8>| b.truncate(b.len() - 1),
        Malformed(_)
    );
    case!(
        "f2 suite_id",
        2,
        f2(|f| f.suite_id = suite("X25519-Kyber768-Draft00").id),
        Auth(_) | Malformed(_)
    );
    case!(
        "f2 server_random",
        2,
        f2(|f| f.server_random[31] ^= 1),
        Auth(_)
    );
    case!(
        "f2 classical_pub",
        2,
        f2(|f| f.classical_pub[0] ^= 1),
        Auth(_)
    );
    case!("f2 pq_ct", 2, f2(|f| f.pq_ct[77] ^= 1), Auth(_));
    case!(
        "f2 ed25519 signature",
        2,
        f2(|f| f.signature.classical[63] ^= 1),
        Auth(_)
    );
    case!(
        "f2 ml-dsa signature",
        2,
        f2(|f| f.signature.pq[3000] ^= 1),
        Auth(_)
    );
    case!(
        "f2 confirm_mac",
        2,
        f2(|f| f.confirm_mac[0] ^= 1),
        KeyConfirmation
    );
    case!(
        "f3 confirm_mac",
        3,
        f3(|f| f.confirm_mac[31] ^= 1),
        KeyConfirmation
    );
    case!(
        "f3 suite_id",
        3,
        f3(|f| f.suite_id ^= 0x0100),
        Malformed(_) | KeyConfirmation
    );
    case!(
        "f3 truncated",
        3,
        |b: &mut Vec<u8>| b.truncate(b.len() - 1),
        Malformed(_)
    );

    // Cross-session replay of an honest Flight3.
    let Outcome::Established(_, old_f3) = handshake(&ini, &rsp, 0, |_| {})? else {
        return Err("replay source run failed".into());
    };
    case!(
        "f3 replayed from another session",
        3,
        move |b: &mut Vec<u8>| *b = old_f3,
        KeyConfirmation
    );

    // QKD key substituted on the responder side.
    let (si, sr) = node_pair(s, true);
    let e = expect_abort("qkd substitution", &si, &sr, 2, |_| {})?;
    ensure!(matches!(e, KeyConfirmation), "qkd substitution: {e:?}");
    cases += 1;

    // Random single-bit flips anywhere in any flight.
    let mut rng = SplitMix(8);
    let mut fuzzed = 0;
    for i in 0..240u64 {
        let stage = (i % 3) as u8 + 1;
        let r = rng.next();
        let bit = 1u8 << (r % 8);
        let pick = r >> 8;
        expect_abort(
            &format!("fuzz #{i}"),
            &ini,
            &rsp,
            stage,
            move |b: &mut Vec<u8>| {
                let pos = (pick % b.len() as u64) as usize;
                b[pos] ^= bit;
            },
        )?;
        fuzzed += 1;
    }
    Ok(format!(
        "{cases} field/replay/QKD cases and {fuzzed} random bit flips all aborted"
    ))
}

// AC9

fn http(
    agent: &ureq::Agent,
    method: &str,
    url: &str,
    body: Option<Value>,
) -> Result<(u16, Option<String>, Value), String> {
    let resp = match body {
        None if method == "GET" => agent.get(url).call(),
        None => agent.post(url).send_empty(),
        Some(b) => agent
            .post(url)
            .header("content-type", "application/json")
            .send(b.to_string()),
    };
    let mut resp = resp.map_err(|e| format!("{method} {url}: {e}"))?;
    let status = resp.status().as_u16();
    let epoch = resp
        .headers()
        .get("x-qkd-epoch")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    let json = serde_json::from_str(&text).map_err(|e| format!("{url}: {e}: {text}"))?;
    Ok((status, epoch, json))
}

fn key_set(v: &Value) -> BTreeSet<String> {
    v.as_object()
        .map(|o| o.keys().cloned().collect())
        .unwrap_or_default()
}

/// Checks the key container shape and returns key_ID -> key bytes.
fn container(v: &Value, bits: usize) -> Result<BTreeMap<Uuid, Vec<u8>>, String> {
    ensure!(
        key_set(v) == BTreeSet::from(["keys".to_string()]),
        "container keys {:?}",
        key_set(v)
    );
    let mut out = BTreeMap::new();
    for k in v["keys"].as_array().ok_or("keys is not an array")? {
        ensure!(
            key_set(k) == BTreeSet::from(["key_ID".to_string(), "key".to_string()]),
            "key entry fields {:?}",
            key_set(k)
        );
        let id = Uuid::parse_str(k["key_ID"].as_str().ok_or("key_ID not a string")?)
            .map_err(|e| e.to_string())?;
        let key = base64::engine::general_purpose::STANDARD
            .decode(k["key"].as_str().ok_or("key not a string")?)
            .map_err(|e| e.to_string())?;
        ensure!(key.len() * 8 == bits, "key of {} bytes", key.len());
        out.insert(id, key);
    }
    Ok(out)
}

fn ac9_etsi() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seed_hex = "a5".repeat(32);
    let (_a, a) = spawn_kme(dir.path(), "kme-a", &seed_hex)?;
    let (_b, b) = spawn_kme(dir.path(), "kme-b", &seed_hex)?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .into();

    let (code, _, st) = http(
        &agent,
        "GET",
        &format!("{a}/api/v1/keys/sae-bob/status"),
        None,
    )?;
    ensure!(code == 200, "status returned {code}");
    let want: BTreeSet<String> = [
        "source_kme_id",
        "target_kme_id",
        "master_sae_id",
        "slave_sae_id",
        "key_size",
        "stored_key_count",
        "max_key_count",
        "max_key_per_request",
    ]
    .map(String::from)
    .into();
    ensure!(key_set(&st) == want, "status fields {:?}", key_set(&st));
    for f in [
        "source_kme_id",
        "target_kme_id",
        "master_sae_id",
        "slave_sae_id",
    ] {
        ensure!(st[f].is_string(), "{f} is not a string");
    }
    for f in [
        "key_size",
        "stored_key_count",
        "max_key_count",
        "max_key_per_request",
    ] {
        ensure!(st[f].is_u64(), "{f} is not an integer");
    }
    ensure!(
        st["key_size"] == 256 && st["stored_key_count"] == 64,
        "status values {st}"
    );
    ensure!(
        st["master_sae_id"] == "sae-alice" && st["slave_sae_id"] == "sae-bob",
        "SAE ids {st}"
    );

    let enc_url = format!("{a}/api/v1/keys/sae-bob/enc_keys");
    let (code, epoch, enc) = http(
        &agent,
        "POST",
        &enc_url,
        Some(serde_json::json!({"number": 3, "size": 256})),
    )?;
    ensure!(code == 200, "enc_keys returned {code}: {enc}");
    ensure!(
        epoch.as_deref() == Some("0"),
        "enc_keys epoch header {epoch:?}"
    );
    let enc = container(&enc, 256)?;
    ensure!(enc.len() == 3, "{} keys delivered", enc.len());

    let ids: Vec<Value> = enc
        .keys()
        .map(|id| serde_json::json!({"key_ID": id.to_string()}))
        .collect();
    let dec_url = format!("{b}/api/v1/keys/sae-alice/dec_keys");
    let (code, _, dec) = http(
        &agent,
        "POST",
        &dec_url,
        Some(serde_json::json!({"key_IDs": ids})),
    )?;
    ensure!(code == 200, "dec_keys returned {code}: {dec}");
    let dec = container(&dec, 256)?;
    ensure!(dec == enc, "the two KME processes disagree on the keys");

    let mut seed = [0u8; 32];
    hex::decode_to_slice(&seed_hex, &mut seed).map_err(|e| e.to_string())?;
    let pool = sim_generate_pool(&seed, 0, 64, 256).map_err(|e| e.to_string())?;
    for (id, key) in &enc {
        let k = pool
            .keys()
            .iter()
            .find(|k| k.key_id == *id)
            .ok_or("key_ID not in the pool")?;
        ensure!(
            k.key[..] == key[..],
            "key {id} differs from the deterministic pool"
        );
    }

    // Single use on both sides.
    let one = serde_json::json!({"key_IDs": [{"key_ID": enc.keys().next().unwrap().to_string()}]});
    let (code, _, body) = http(&agent, "POST", &dec_url, Some(one))?;
    ensure!(code == 400, "second dec_keys returned {code}: {body}");
    ensure!(
        key_set(&body) == BTreeSet::from(["message".to_string()]),
        "error body {body}"
    );
    let (code, _, again) = http(
        &agent,
        "POST",
        &enc_url,
        Some(serde_json::json!({"number": 3})),
    )?;
    ensure!(code == 200, "enc_keys returned {code}");
    let again = container(&again, 256)?;
    ensure!(
        again.keys().all(|id| !enc.contains_key(id)),
        "enc_keys re-delivered a key"
    );
    let (_, _, st) = http(
        &agent,
        "GET",
        &format!("{a}/api/v1/keys/sae-bob/status"),
        None,
    )?;
    ensure!(
        st["stored_key_count"] == 58,
        "stored_key_count {}",
        st["stored_key_count"]
    );

    // Epoch expiry: keys of the old epoch vanish on advance.
    let (code, _, body) = http(&agent, "POST", &format!("{b}/admin/epoch/advance"), None)?;
    ensure!(
        code == 200 && body == serde_json::json!({"epoch": 1}),
        "advance returned {code} {body}"
    );
    let stale =
        serde_json::json!({"key_IDs": [{"key_ID": again.keys().next().unwrap().to_string()}]});
    let (code, _, body) = http(&agent, "POST", &dec_url, Some(stale))?;
    ensure!(code == 404, "old-epoch key_ID returned {code}: {body}");
    let (code, _, _) = http(&agent, "POST", &format!("{a}/admin/epoch/advance"), None)?;
    ensure!(code == 200, "advance on A returned {code}");
    let (_, epoch, fresh) = http(
        &agent,
        "POST",
        &enc_url,
        Some(serde_json::json!({"number": 1})),
    )?;
    ensure!(
        epoch.as_deref() == Some("1"),
        "enc_keys epoch header {epoch:?}"
    );
    let fresh = container(&fresh, 256)?;
    ensure!(
        fresh
            .keys()
            .all(|id| !enc.contains_key(id) && !again.contains_key(id)),
        "key_ID reused across epochs"
    );
    let ids: Vec<Value> = fresh
        .keys()
        .map(|id| serde_json::json!({"key_ID": id.to_string()}))
        .collect();
    let (code, _, dec) = http(
        &agent,
        "POST",
        &dec_url,
        Some(serde_json::json!({"key_IDs": ids})),
    )?;
    ensure!(
        code == 200 && container(&dec, 256)? == fresh,
        "epoch 1 keys disagree"
    );
    Ok("shapes exact, two processes agree, single-use and epoch expiry enforced".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("AC1", "byte accounting", ac1_bytes),
        ("AC2", "packet accounting", ac2_packets),
        ("AC3", "strength columns", ac3_strengths),
        ("AC4", "timing statistics properties", ac4_timing_properties),
        ("AC5", "KEM/KEX correctness", ac5_kex_correctness),
        ("AC6", "dual-signature AND rule", ac6_dual_signature),
        (
            "AC7",
            "end-to-end handshake across processes",
            ac7_end_to_end,
        ),
        ("AC8", "tamper suite", ac8_tamper),
        ("AC9", "ETSI GS QKD 014 conformance", ac9_etsi),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| id.eq_ignore_ascii_case(f)) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {:?}",
                p.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(p.downcast_ref::<&str>().copied())
            ))
        });
        let ms = start.elapsed().as_millis();
        match verdict {
            Ok(detail) => println!("PASS {id} {name}: {detail} ({ms} ms)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id} {name}: {why} ({ms} ms)");
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
