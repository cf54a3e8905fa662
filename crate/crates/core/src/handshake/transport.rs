//! Running the handshake over a byte stream, one frame per flight.

use std::io::{ErrorKind, Read, Write};

use rand_core::CryptoRngCore;

use super::wire::{Flight1, Flight2, Flight3, Header, HEADER_LEN};
use super::{initiator_start, responder_respond, HandshakeConfig, HandshakeError, Session};

pub fn write_frame(w: &mut impl Write, frame: &[u8]) -> std::io::Result<()> {
    w.write_all(frame)?;
    w.flush()
}

/// Reads one frame. Returns `None` if the stream ends cleanly before a new
/// frame starts.
fn read_frame_opt(r: &mut impl Read) -> Result<Option<Vec<u8>>, HandshakeError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(std::io::Error::from(ErrorKind::UnexpectedEof).into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let parsed = Header::decode(&header)?;
    let mut frame = vec![0u8; HEADER_LEN + parsed.body_len as usize];
    frame[..HEADER_LEN].copy_from_slice(&header);
    r.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(Some(frame))
}

pub fn read_frame(r: &mut impl Read) -> Result<Vec<u8>, HandshakeError> {
    read_frame_opt(r)?.ok_or_else(|| {
        std::io::Error::new(ErrorKind::UnexpectedEof, "peer closed the connection").into()
    })
}

/// Initiator side over `stream`.
pub fn connect_handshake<S: Read + Write>(
    stream: &mut S,
    cfg: &HandshakeConfig,
    rng: &mut impl CryptoRngCore,
) -> Result<Session, HandshakeError> {
    let (state, f1) = initiator_start(cfg, rng)?;
    write_frame(stream, &f1.encode())?;
    let f2 = Flight2::decode(&read_frame(stream)?)?;
    let (session, f3) = state.finish(&f2)?;
    write_frame(stream, &f3.encode())?;
    Ok(session)
}

/// Responder side over `stream`.
pub fn accept_handshake<S: Read + Write>(
    stream: &mut S,
    cfg: &HandshakeConfig,
    rng: &mut impl CryptoRngCore,
) -> Result<Session, HandshakeError> {
    let f1 = Flight1::decode(&read_frame(stream)?)?;
    let (state, f2) = responder_respond(cfg, &f1, rng)?;
    write_frame(stream, &f2.encode())?;
    let f3 = Flight3::decode(&read_frame(stream)?)?;
    state.finish(&f3)
}

pub fn send_record<W: Write>(
    stream: &mut W,
    session: &mut Session,
    plaintext: &[u8],
) -> Result<(), HandshakeError> {
    let record = session.seal(plaintext)?;
    Ok(write_frame(stream, &record)?)
}

/// Next record from the peer, or `None` once it has closed the stream.
pub fn recv_record<R: Read>(
    stream: &mut R,
    session: &mut Session,
) -> Result<Option<Vec<u8>>, HandshakeError> {
    match read_frame_opt(stream) {
        Ok(Some(frame)) => session.open(&frame).map(Some),
        Ok(None) => Ok(None),
        // A bad header on the record channel is an authentication failure.
        Err(HandshakeError::Malformed(_)) => Err(HandshakeError::RecordAuth),
        Err(e) => Err(e),
    }
}
