//! Public-channel framing.
//!
//! ```text
//! +------+------+---------+------+----------------+-----------+
//! | 0x51 | 0x4B | version | type | length (u32LE) | payload   |
//! +------+------+---------+------+----------------+-----------+
//! ```
//!
//! All integers are little-endian. Bit strings are packed LSB-first and
//! preceded by their bit count.

use std::io::{Read, Write};

use crate::{Error, Result};

pub const MAGIC: [u8; 2] = [0x51, 0x4B];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 8;
/// Largest payload accepted from a peer.
pub const MAX_PAYLOAD: usize = 1 << 28;

pub const TYPE_SESSION_START: u8 = 0x01;
pub const TYPE_DETECTIONS: u8 = 0x02;
pub const TYPE_BASES: u8 = 0x03;
pub const TYPE_SIFT_ACK: u8 = 0x04;
pub const TYPE_PARITY_REQUEST: u8 = 0x10;
pub const TYPE_PARITY_RESPONSE: u8 = 0x11;
pub const TYPE_PA_SEED: u8 = 0x20;
pub const TYPE_KEY_DIGEST: u8 = 0x21;
pub const TYPE_ABORT: u8 = 0x7F;

pub const ABORT_DESYNC: u8 = 0x01;
pub const ABORT_UNEXPECTED_FRAME: u8 = 0x02;
pub const ABORT_BAD_PAYLOAD: u8 = 0x03;
pub const ABORT_DIGEST_MISMATCH: u8 = 0x04;

/// A half-open range `[start, end)` of positions in a pass permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRange {
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    SessionStart { session_id: u64, n_slots: u64 },
    Detections { slots: Vec<u64> },
    /// One basis bit per announced detection, in detection order.
    Bases { bases: Vec<u8> },
    SiftAck { sifted_len: u32 },
    /// Pass 0 discloses and discards the listed key positions (QBER sample);
    /// passes >= 1 ask for block parities over that pass's permutation.
    ParityRequest { pass: u8, blocks: Vec<BlockRange> },
    ParityResponse { parities: Vec<u8> },
    PaSeed { input_len: u32, output_len: u32, seed: Vec<u8> },
    KeyDigest { key_len: u32, digest: u32 },
    Abort { reason: u8 },
}

impl Frame {
    pub fn type_byte(&self) -> u8 {
        match self {
            Frame::SessionStart { .. } => TYPE_SESSION_START,
            Frame::Detections { .. } => TYPE_DETECTIONS,
            Frame::Bases { .. } => TYPE_BASES,
            Frame::SiftAck { .. } => TYPE_SIFT_ACK,
            Frame::ParityRequest { .. } => TYPE_PARITY_REQUEST,
            Frame::ParityResponse { .. } => TYPE_PARITY_RESPONSE,
            Frame::PaSeed { .. } => TYPE_PA_SEED,
            Frame::KeyDigest { .. } => TYPE_KEY_DIGEST,
            Frame::Abort { .. } => TYPE_ABORT,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Frame::SessionStart { .. } => "SESSION_START",
            Frame::Detections { .. } => "DETECTIONS",
            Frame::Bases { .. } => "BASES",
            Frame::SiftAck { .. } => "SIFT_ACK",
            Frame::ParityRequest { .. } => "PARITY_REQUEST",
            Frame::ParityResponse { .. } => "PARITY_RESPONSE",
            Frame::PaSeed { .. } => "PA_SEED",
            Frame::KeyDigest { .. } => "KEY_DIGEST",
            Frame::Abort { .. } => "ABORT",
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            Frame::SessionStart { session_id, n_slots } => {
                p.extend_from_slice(&session_id.to_le_bytes());
                p.extend_from_slice(&n_slots.to_le_bytes());
            }
            Frame::Detections { slots } => {
                p.extend_from_slice(&(slots.len() as u32).to_le_bytes());
                for s in slots {
                    p.extend_from_slice(&s.to_le_bytes());
                }
            }
            Frame::Bases { bases } => put_bits(&mut p, bases),
            Frame::SiftAck { sifted_len } => p.extend_from_slice(&sifted_len.to_le_bytes()),
            Frame::ParityRequest { pass, blocks } => {
                p.push(*pass);
                p.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
                for b in blocks {
                    p.extend_from_slice(&b.start.to_le_bytes());
                    p.extend_from_slice(&b.end.to_le_bytes());
                }
            }
            Frame::ParityResponse { parities } => put_bits(&mut p, parities),
            Frame::PaSeed { input_len, output_len, seed } => {
                p.extend_from_slice(&input_len.to_le_bytes());
                p.extend_from_slice(&output_len.to_le_bytes());
                put_bits(&mut p, seed);
            }
            Frame::KeyDigest { key_len, digest } => {
                p.extend_from_slice(&key_len.to_le_bytes());
                p.extend_from_slice(&digest.to_le_bytes());
            }
            Frame::Abort { reason } => p.push(*reason),
        }
        p
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.type_byte());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes exactly one frame from `buf`, returning it and the bytes used.
    pub fn decode(buf: &[u8]) -> Result<(Frame, usize)> {
        if buf.len() < HEADER_LEN {
            return Err(Error::Frame(format!("short header: {} bytes", buf.len())));
        }
        let (ty, len) = parse_header(buf[..HEADER_LEN].try_into().expect("8 bytes"))?;
        let total = HEADER_LEN + len;
        if buf.len() < total {
            return Err(Error::Frame(format!(
                "truncated payload: need {len} bytes, have {}",
                buf.len() - HEADER_LEN
            )));
        }
        Ok((decode_payload(ty, &buf[HEADER_LEN..total])?, total))
    }
}

fn parse_header(h: [u8; HEADER_LEN]) -> Result<(u8, usize)> {
    if h[..2] != MAGIC {
        return Err(Error::Frame(format!("bad magic {:02x} {:02x}", h[0], h[1])));
    }
    if h[2] != VERSION {
        return Err(Error::Frame(format!("unsupported version {:#04x}", h[2])));
    }
    let len = u32::from_le_bytes(h[4..8].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(Error::Frame(format!("payload of {len} bytes exceeds limit")));
    }
    Ok((h[3], len))
}

fn put_bits(out: &mut Vec<u8>, bits: &[u8]) {
    out.extend_from_slice(&(bits.len() as u32).to_le_bytes());
    out.extend(pack_bits(bits));
}

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut packed = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        packed[i / 8] |= (b & 1) << (i % 8);
    }
    packed
}

pub fn unpack_bits(packed: &[u8], n: usize) -> Vec<u8> {
    (0..n).map(|i| (packed[i / 8] >> (i % 8)) & 1).collect()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Frame("payload too short".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bits(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        let packed = self.take(n.div_ceil(8))?;
        // Padding bits in the final byte must be zero.
        if n % 8 != 0 && packed[packed.len() - 1] >> (n % 8) != 0 {
            return Err(Error::Frame("nonzero padding in bit string".into()));
        }
        Ok(unpack_bits(packed, n))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Frame(format!(
                "{} trailing payload bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn decode_payload(ty: u8, payload: &[u8]) -> Result<Frame> {
    let mut c = Cursor { buf: payload, pos: 0 };
    let frame = match ty {
        TYPE_SESSION_START => Frame::SessionStart {
            session_id: c.u64()?,
            n_slots: c.u64()?,
        },
        TYPE_DETECTIONS => {
            let n = c.u32()? as usize;
            if n.saturating_mul(8) > payload.len() {
                return Err(Error::Frame("detection count exceeds payload".into()));
            }
            let slots = (0..n).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
            if slots.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Frame("detection slots not strictly increasing".into()));
            }
            Frame::Detections { slots }
        }
        TYPE_BASES => Frame::Bases { bases: c.bits()? },
        TYPE_SIFT_ACK => Frame::SiftAck { sifted_len: c.u32()? },
        TYPE_PARITY_REQUEST => {
            let pass = c.u8()?;
            let n = c.u32()? as usize;
            if n.saturating_mul(8) > payload.len() {
                return Err(Error::Frame("block count exceeds payload".into()));
            }
            let mut blocks = Vec::with_capacity(n);
            for _ in 0..n {
                let (start, end) = (c.u32()?, c.u32()?);
                if start >= end {
                    return Err(Error::Frame(format!("empty block [{start}, {end})")));
                }
                blocks.push(BlockRange { start, end });
            }
            Frame::ParityRequest { pass, blocks }
        }
        TYPE_PARITY_RESPONSE => Frame::ParityResponse { parities: c.bits()? },
        TYPE_PA_SEED => {
            let input_len = c.u32()?;
            let output_len = c.u32()?;
            let seed = c.bits()?;
            Frame::PaSeed { input_len, output_len, seed }
        }
        TYPE_KEY_DIGEST => Frame::KeyDigest {
            key_len: c.u32()?,
            digest: c.u32()?,
        },
        TYPE_ABORT => Frame::Abort { reason: c.u8()? },
        other => return Err(Error::Frame(format!("unknown frame type {other:#04x}"))),
    };
    c.finish()?;
    Ok(frame)
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, frame: &Frame) -> Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a header.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<Frame>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..])? {
            0 if filled == 0 => return Ok(None),
            0 => return Err(Error::Frame("stream ended inside a header".into())),
            n => filled += n,
        }
    }
    let (ty, len) = parse_header(header)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)
        .map_err(|e| Error::Frame(format!("stream ended inside a payload: {e}")))?;
    decode_payload(ty, &payload).map(Some)
}
