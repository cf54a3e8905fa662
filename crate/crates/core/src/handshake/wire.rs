//! Flight encoding. Every message is an 8-byte header
//! `{u8 type, u8 version, u16 suite_id, u32 body_len}` followed by
//! `u32`-length-prefixed fields in a fixed order; integers are big-endian.

use uuid::Uuid;

use super::HandshakeError;
use crate::dual_sig::{DualSignature, DUAL_SIG_LEN};
use crate::suites::{size_profile, suite_by_id, HybridSuite};

pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;
pub const RANDOM_LEN: usize = 32;
pub const MAC_LEN: usize = 32;
pub const KEY_ID_LEN: usize = 16;

/// Upper bound on a frame body; the largest flight (McEliece public key
/// plus signature) is well below it.
pub const MAX_BODY_LEN: u32 = 1 << 20;

const QKD_ABSENT: u8 = 0x00;
const QKD_PRESENT: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FlightType {
    Flight1 = 1,
    Flight2 = 2,
    Flight3 = 3,
    Record = 4,
}

impl FlightType {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(FlightType::Flight1),
            2 => Some(FlightType::Flight2),
            3 => Some(FlightType::Flight3),
            4 => Some(FlightType::Record),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub flight_type: FlightType,
    pub version: u8,
    pub suite_id: u16,
    pub body_len: u32,
}

impl Header {
    pub fn new(flight_type: FlightType, suite_id: u16, body_len: usize) -> Self {
        Header {
            flight_type,
            version: VERSION,
            suite_id,
            body_len: body_len as u32,
        }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0] = self.flight_type as u8;
        out[1] = self.version;
        out[2..4].copy_from_slice(&self.suite_id.to_be_bytes());
        out[4..8].copy_from_slice(&self.body_len.to_be_bytes());
        out
    }

    /// Parses and sanity-checks a header without looking at the body.
    pub fn decode(bytes: &[u8]) -> Result<Self, HandshakeError> {
        let bytes: &[u8; HEADER_LEN] = bytes
            .get(..HEADER_LEN)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| malformed("truncated header"))?;
        let flight_type =
            FlightType::from_u8(bytes[0]).ok_or_else(|| malformed("unknown message type"))?;
        if bytes[1] != VERSION {
            return Err(malformed(format!("unsupported version {}", bytes[1])));
        }
        let body_len = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
        if body_len > MAX_BODY_LEN {
            return Err(malformed(format!("body of {body_len} bytes exceeds limit")));
        }
        Ok(Header {
            flight_type,
            version: bytes[1],
            suite_id: u16::from_be_bytes([bytes[2], bytes[3]]),
            body_len,
        })
    }

    /// Splits a whole frame into header and body, checking the type and the
    /// declared length.
    pub fn split(frame: &[u8], expected: FlightType) -> Result<(Self, &[u8]), HandshakeError> {
        let header = Header::decode(frame)?;
        if header.flight_type != expected {
            return Err(malformed(format!(
                "expected {expected:?}, got {:?}",
                header.flight_type
            )));
        }
        let body = &frame[HEADER_LEN..];
        if body.len() != header.body_len as usize {
            return Err(malformed(format!(
                "body length {} does not match header {}",
                body.len(),
                header.body_len
            )));
        }
        Ok((header, body))
    }
}

pub(crate) fn malformed(msg: impl Into<String>) -> HandshakeError {
    HandshakeError::Malformed(msg.into())
}

fn put_fields(out: &mut Vec<u8>, fields: &[&[u8]]) {
    for f in fields {
        out.extend_from_slice(&(f.len() as u32).to_be_bytes());
        out.extend_from_slice(f);
    }
}

fn fields_len(fields: &[&[u8]]) -> usize {
    fields.iter().map(|f| 4 + f.len()).sum()
}

struct FieldReader<'a> {
    buf: &'a [u8],
}

impl<'a> FieldReader<'a> {
    fn take(&mut self, name: &str, expected: usize) -> Result<&'a [u8], HandshakeError> {
        if self.buf.len() < 4 {
            return Err(malformed(format!("{name}: missing length prefix")));
        }
        let len = u32::from_be_bytes([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]) as usize;
        if len != expected {
            return Err(malformed(format!(
                "{name}: expected {expected} bytes, got {len}"
            )));
        }
        let rest = &self.buf[4..];
        if rest.len() < len {
            return Err(malformed(format!("{name}: truncated")));
        }
        let (field, rest) = rest.split_at(len);
        self.buf = rest;
        Ok(field)
    }

    fn take_array<const N: usize>(&mut self, name: &str) -> Result<[u8; N], HandshakeError> {
        Ok(self.take(name, N)?.try_into().expect("length checked"))
    }

    fn take_qkd(&mut self) -> Result<Option<Uuid>, HandshakeError> {
        let len = self
            .buf
            .get(..4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]));
        let expected = if len == Some(1) { 1 } else { 1 + KEY_ID_LEN };
        let field = self.take("qkd key_ID", expected)?;
        match (field[0], field.len()) {
            (QKD_ABSENT, 1) => Ok(None),
            (QKD_PRESENT, 17) => Ok(Some(Uuid::from_slice(&field[1..]).expect("16 bytes"))),
            _ => Err(malformed("qkd key_ID: bad presence flag")),
        }
    }

    fn take_signature(&mut self) -> Result<DualSignature, HandshakeError> {
        let raw = self.take("signature", DUAL_SIG_LEN)?;
        DualSignature::from_bytes(raw).map_err(|e| malformed(e.to_string()))
    }

    fn finish(self) -> Result<(), HandshakeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(malformed(format!("{} trailing bytes", self.buf.len())))
        }
    }
}

fn suite_for(header: &Header) -> Result<&'static HybridSuite, HandshakeError> {
    suite_by_id(header.suite_id).map_err(|e| malformed(e.to_string()))
}

fn qkd_field(id: &Option<Uuid>) -> Vec<u8> {
    match id {
        None => vec![QKD_ABSENT],
        Some(id) => {
            let mut v = vec![QKD_PRESENT];
            v.extend_from_slice(id.as_bytes());
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flight1 {
    pub suite_id: u16,
    pub client_random: [u8; RANDOM_LEN],
    pub classical_pub: Vec<u8>,
    pub pq_pub: Vec<u8>,
    pub extra: Vec<u8>,
    pub qkd_key_id: Option<Uuid>,
    pub signature: DualSignature,
}

impl Flight1 {
    /// Header and every field the signature covers.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let qkd = qkd_field(&self.qkd_key_id);
        let fields: [&[u8]; 5] = [
            &self.client_random,
            &self.classical_pub,
            &self.pq_pub,
            &self.extra,
            &qkd,
        ];
        let body_len = fields_len(&fields) + 4 + DUAL_SIG_LEN;
        let mut out = Header::new(FlightType::Flight1, self.suite_id, body_len)
            .encode()
            .to_vec();
        put_fields(&mut out, &fields);
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        put_fields(&mut out, &[&self.signature.to_bytes()]);
        out
    }

    pub fn decode(frame: &[u8]) -> Result<Self, HandshakeError> {
        let (header, body) = Header::split(frame, FlightType::Flight1)?;
        let profile = size_profile(suite_for(&header)?);
        let mut r = FieldReader { buf: body };
        let flight = Flight1 {
            suite_id: header.suite_id,
            client_random: r.take_array("client_random")?,
            classical_pub: r.take("classical_pub", profile.classical_pk)?.to_vec(),
            pq_pub: r.take("pq_pub", profile.pq_pk)?.to_vec(),
            extra: r.take("extra", profile.extra_flight1)?.to_vec(),
            qkd_key_id: r.take_qkd()?,
            signature: r.take_signature()?,
        };
        r.finish()?;
        Ok(flight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flight2 {
    pub suite_id: u16,
    pub server_random: [u8; RANDOM_LEN],
    pub classical_pub: Vec<u8>,
    pub pq_ct: Vec<u8>,
    pub signature: DualSignature,
    pub confirm_mac: [u8; MAC_LEN],
}

impl Flight2 {
    pub fn signed_bytes(&self) -> Vec<u8> {
        let fields: [&[u8]; 3] = [&self.server_random, &self.classical_pub, &self.pq_ct];
        let body_len = fields_len(&fields) + 4 + DUAL_SIG_LEN + 4 + MAC_LEN;
        let mut out = Header::new(FlightType::Flight2, self.suite_id, body_len)
            .encode()
            .to_vec();
        put_fields(&mut out, &fields);
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        put_fields(&mut out, &[&self.signature.to_bytes(), &self.confirm_mac]);
        out
    }

    pub fn decode(frame: &[u8]) -> Result<Self, HandshakeError> {
        let (header, body) = Header::split(frame, FlightType::Flight2)?;
        let profile = size_profile(suite_for(&header)?);
        let mut r = FieldReader { buf: body };
        let flight = Flight2 {
            suite_id: header.suite_id,
            server_random: r.take_array("server_random")?,
            classical_pub: r.take("classical_pub", profile.classical_pk)?.to_vec(),
            pq_ct: r.take("pq_ct", profile.pq_ct)?.to_vec(),
            signature: r.take_signature()?,
            confirm_mac: r.take_array("confirm_mac")?,
        };
        r.finish()?;
        Ok(flight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flight3 {
    pub suite_id: u16,
    pub confirm_mac: [u8; MAC_LEN],
}

impl Flight3 {
    pub fn header_bytes(suite_id: u16) -> [u8; HEADER_LEN] {
        Header::new(FlightType::Flight3, suite_id, 4 + MAC_LEN).encode()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Self::header_bytes(self.suite_id).to_vec();
        put_fields(&mut out, &[&self.confirm_mac]);
        out
    }

    pub fn decode(frame: &[u8]) -> Result<Self, HandshakeError> {
        let (header, body) = Header::split(frame, FlightType::Flight3)?;
        suite_for(&header)?;
        let mut r = FieldReader { buf: body };
        let confirm_mac = r.take_array("confirm_mac")?;
        r.finish()?;
        Ok(Flight3 {
            suite_id: header.suite_id,
            confirm_mac,
        })
    }
}
