use std::ffi::OsString;
use std::io::Write as _;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand_core::OsRng;

use hybridkex::bench::{
    check_against_reference, parse_json_report, render_report, run_bench, suite_summaries,
    BenchConfig, ReportFormat, DEFAULT_MTU,
};
use hybridkex::dual_sig::dual_keygen;
use hybridkex::handshake::{
    accept_handshake, connect_handshake, encode_public_key, recv_record, send_record,
    write_private_key, write_public_key, HandshakeConfig, HandshakeError, NodeConfig, Role,
    Session,
};
use hybridkex::qkd::{KmeConfig, KmeHandle};

use crate::CliError;

const SESSION_READ_TIMEOUT: Duration = Duration::from_secs(60);

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn suites(json: bool, mtu: usize) -> Result<(), CliError> {
    let rows = suite_summaries(mtu)?;
    if json {
        let text =
            serde_json::to_string_pretty(&rows).map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
    println!(
        "{:<width$}  {:>6}  {:<6}  {:<22}  {:>7}  {:>7}  {:>4}  {:>9}",
        "Suite", "ID", "ECDH", "KEM", "Bytes", "Packets", "PQC", "Classical"
    );
    for r in &rows {
        let mark = if r.verified_accounting { "" } else { "*" };
        println!(
            "{:<width$}  0x{:04x}  {:<6}  {:<22}  {:>7}  {:>7}  {:>4}  {:>9}",
            r.label,
            r.id,
            r.classical,
            r.pq,
            format!("{}{mark}", r.bytes_total),
            r.packets,
            r.strength_pqc,
            r.strength_classical
        );
    }
    if rows.iter().any(|r| !r.verified_accounting) {
        println!("* recorded figure, not derived from key sizes");
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

pub fn keygen(out: &Path, hex: bool, force: bool) -> Result<(), CliError> {
    let key_path = with_suffix(out, ".key");
    let pub_path = with_suffix(out, ".pub");
    if !force {
        for p in [&key_path, &pub_path] {
            if p.exists() {
                return Err(CliError::Usage(format!(
                    "{} exists; pass --force to overwrite",
                    p.display()
                )));
            }
        }
    }
    let kp = dual_keygen(&mut OsRng);
    write_private_key(&key_path, &kp)?;
    write_public_key(&pub_path, kp.verifying_key())?;
    println!("private key: {}", key_path.display());
    println!("public key:  {}", pub_path.display());
    println!("fingerprint: {}", kp.verifying_key().fingerprint());
    if hex {
        println!("{}", ::hex::encode(encode_public_key(kp.verifying_key())));
    }
    Ok(())
}

fn load_node(config: &Path, role: Role) -> Result<(NodeConfig, HandshakeConfig), CliError> {
    let node = NodeConfig::load(config)?;
    if node.role != role {
        return Err(CliError::Usage(format!(
            "{}: role is {:?}, this command needs {:?}",
            config.display(),
            node.role,
            role
        )));
    }
    let hs = node.handshake_config()?;
    Ok((node, hs))
}

fn describe(session: &Session) -> String {
    let qkd = session
        .qkd_key_id()
        .map_or_else(|| "none".to_string(), |id| id.to_string());
    format!(
        "suite={} fingerprint={} transcript={} peer={} qkd={}",
        session.suite().label,
        session.keys().fingerprint(),
        ::hex::encode(session.transcript_hash()),
        session.peer().fingerprint(),
        qkd
    )
}

fn handle_session(
    n: usize,
    mut stream: TcpStream,
    hs: &HandshakeConfig,
) -> Result<(), HandshakeError> {
    stream.set_read_timeout(Some(SESSION_READ_TIMEOUT))?;
    stream.set_nodelay(true)?;
    let peer = stream.peer_addr()?;
    let mut session = accept_handshake(&mut stream, hs, &mut OsRng)?;
    println!(
        "session {n}: established with {peer} {}",
        describe(&session)
    );
    let mut echoed = 0usize;
    while let Some(msg) = recv_record(&mut stream, &mut session)? {
        send_record(&mut stream, &mut session, &msg)?;
        echoed += 1;
    }
    println!("session {n}: closed after {echoed} records");
    Ok(())
}

pub fn serve(
    config: &Path,
    address: Option<String>,
    max_sessions: Option<usize>,
) -> Result<(), CliError> {
    let (node, hs) = load_node(config, Role::Responder)?;
    let address = address.unwrap_or(node.address);
    let listener = TcpListener::bind(&address)?;
    println!("listening on {}", listener.local_addr()?);
    log::info!(
        "serving {} with identity {}",
        hs.suite.label,
        hs.keypair.verifying_key().fingerprint()
    );
    let hs = Arc::new(hs);
    let mut workers = Vec::new();
    let mut accepted = 0usize;
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        accepted += 1;
        let n = accepted;
        let hs = Arc::clone(&hs);
        workers.push(thread::spawn(move || {
            if let Err(e) = handle_session(n, stream, &hs) {
                println!("session {n}: failed: {e}");
            }
        }));
        workers.retain(|w| !w.is_finished());
        if max_sessions.is_some_and(|max| accepted >= max) {
            break;
        }
    }
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

pub fn connect(config: &Path, address: Option<String>, message: &str) -> Result<(), CliError> {
    let (node, hs) = load_node(config, Role::Initiator)?;
    let address = address.unwrap_or(node.address);
    let mut stream = TcpStream::connect(&address)?;
    stream.set_read_timeout(Some(SESSION_READ_TIMEOUT))?;
    stream.set_nodelay(true)?;
    let mut session = connect_handshake(&mut stream, &hs, &mut OsRng)?;
    println!("connected to {address} {}", describe(&session));
    send_record(&mut stream, &mut session, message.as_bytes())?;
    let echo = recv_record(&mut stream, &mut session)?.ok_or_else(|| {
        CliError::Runtime("server closed the connection without answering".into())
    })?;
    if echo != message.as_bytes() {
        return Err(CliError::Runtime(
            "echoed record differs from the message sent".into(),
        ));
    }
    println!("echo: {}", String::from_utf8_lossy(&echo));
    let _ = stream.shutdown(Shutdown::Write);
    Ok(())
}

pub fn qkd_sim(config: &Path, listen: Option<String>) -> Result<(), CliError> {
    let mut cfg = KmeConfig::load(config)?;
    if let Some(listen) = listen {
        cfg.listen_addr = listen;
    }
    let handle = KmeHandle::spawn(&cfg)?;
    println!("listening on {}", handle.base_url());
    std::io::stdout().flush()?;
    log::info!(
        "KME {} <-> {}: {} keys of {} bits, epoch {}",
        cfg.master_sae_id,
        cfg.slave_sae_id,
        cfg.key_count,
        cfg.key_size_bits,
        cfg.epoch
    );
    handle.join()?;
    Ok(())
}

pub fn bench(cfg: &BenchConfig, format: ReportFormat, out: Option<&Path>) -> Result<(), CliError> {
    let rows = run_bench(cfg)?;
    emit(&render_report(&rows, format)?, out)
}

pub fn bench_check(cfg: &BenchConfig) -> Result<(), CliError> {
    if cfg.mtu != DEFAULT_MTU {
        return Err(CliError::Usage(format!(
            "--check compares the MTU {DEFAULT_MTU} reference figures; drop --mtu"
        )));
    }
    let outcomes = check_against_reference(&cfg.selected()?)?;
    let (mut passed, mut failed, mut unjudged) = (0, 0, 0);
    for o in &outcomes {
        if !o.judged {
            unjudged += 1;
            println!(
                "INFO {} {}: recorded {} (not derivable from key sizes, unverified)",
                o.label, o.column, o.expected
            );
        } else if o.passed() {
            passed += 1;
            println!("PASS {} {}: {}", o.label, o.column, o.computed);
        } else {
            failed += 1;
            println!(
                "FAIL {} {}: expected {}, computed {}",
                o.label, o.column, o.expected, o.computed
            );
        }
    }
    println!("check: {passed} passed, {failed} failed, {unjudged} not judged");
    if failed > 0 {
        return Err(CliError::CheckFailed(format!(
            "{failed} accounting checks failed"
        )));
    }
    Ok(())
}

pub fn report(input: &Path, format: ReportFormat, out: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", input.display())))?;
    let rows = parse_json_report(&text)?;
    emit(&render_report(&rows, format)?, out)
}
