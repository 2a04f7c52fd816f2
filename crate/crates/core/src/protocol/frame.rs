// Licensed under the Apache-2.0 license

//! Length-prefixed binary framing: `[u8 type][u32 len LE][payload]`.
//!
//! AttRequest (0x01):
//!
//! | field     | size              |
//! |-----------|-------------------|
//! | chal      | 16                |
//! | mode      | 1                 |
//! | n_regions | 2                 |
//! | regions   | n × (u16 start, u16 len) |
//! | has_pox   | 1 (0 or 1)        |
//! | pox       | 4 × u16 (er_min, er_max, or_min, or_max), only if has_pox |
//!
//! AttResponse (0x02):
//!
//! | field     | size              |
//! |-----------|-------------------|
//! | chal      | 16                |
//! | mode      | 1                 |
//! | n_regions | 2                 |
//! | regions   | n × (u16 start, u16 len) |
//! | exec      | 1 (0 or 1)        |
//! | lmt       | 16                |
//! | mac       | 32                |
//! | or_len    | 4                 |
//! | or_bytes  | or_len            |
//!
//! Abort (0x03): UTF-8 reason.

use thiserror::Error;

use crate::ief::{AttReport, AttScope, ScopeMode};
use crate::memory::Region;
use crate::monitor::ApexConfig;

pub const TYPE_REQUEST: u8 = 0x01;
pub const TYPE_RESPONSE: u8 = 0x02;
pub const TYPE_ABORT: u8 = 0x03;
pub const HEADER_LEN: usize = 5;
/// Upper bound on accepted payloads.
pub const MAX_PAYLOAD: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttRequest {
    pub chal: [u8; 16],
    pub scope: AttScope,
    pub pox: Option<ApexConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Request(AttRequest),
    Response(AttReport),
    Abort(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown frame type {0:#04x}")]
    UnknownType(u8),
    #[error("payload length {0} exceeds limit")]
    TooLong(u32),
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.buf.len() < n {
            return Err(FrameError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FrameError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FrameError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn flag(&mut self) -> Result<bool, FrameError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(FrameError::Malformed("flag byte not 0 or 1")),
        }
    }

    fn scope(&mut self) -> Result<AttScope, FrameError> {
        let mode = ScopeMode::from_code(self.u8()?).ok_or(FrameError::Malformed("unknown scope mode"))?;
        let n = self.u16()?;
        let mut regions = Vec::with_capacity(n.min(64) as usize);
        for _ in 0..n {
            let start = self.u16()?;
            let len = self.u16()?;
            regions.push(Region::new(start, len as u32));
        }
        Ok(AttScope { mode, regions })
    }
}

fn put_scope(out: &mut Vec<u8>, scope: &AttScope) {
    out.push(scope.mode.code());
    out.extend_from_slice(&(scope.regions.len() as u16).to_le_bytes());
    for r in &scope.regions {
        out.extend_from_slice(&r.start.to_le_bytes());
        out.extend_from_slice(&(r.len as u16).to_le_bytes());
    }
}

impl Frame {
    pub fn type_byte(&self) -> u8 {
        match self {
            Frame::Request(_) => TYPE_REQUEST,
            Frame::Response(_) => TYPE_RESPONSE,
            Frame::Abort(_) => TYPE_ABORT,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Frame::Request(req) => {
                out.extend_from_slice(&req.chal);
                put_scope(&mut out, &req.scope);
                match &req.pox {
                    Some(cfg) => {
                        out.push(1);
                        for w in cfg.to_words() {
                            out.extend_from_slice(&w.to_le_bytes());
                        }
                    }
                    None => out.push(0),
                }
            }
            Frame::Response(rep) => {
                out.extend_from_slice(&rep.chal);
                put_scope(&mut out, &rep.scope);
                out.push(rep.exec as u8);
                out.extend_from_slice(&rep.lmt);
                out.extend_from_slice(&rep.mac);
                out.extend_from_slice(&(rep.or_bytes.len() as u32).to_le_bytes());
                out.extend_from_slice(&rep.or_bytes);
            }
            Frame::Abort(reason) => out.extend_from_slice(reason.as_bytes()),
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.push(self.type_byte());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Frame, FrameError> {
        let (frame, used) = Frame::decode_prefix(bytes)?.ok_or(FrameError::Truncated)?;
        if used != bytes.len() {
            return Err(FrameError::Trailing(bytes.len() - used));
        }
        Ok(frame)
    }

    /// Decodes the first frame in a byte stream. `Ok(None)` means more bytes
    /// are needed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<Option<(Frame, usize)>, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Ok(None);
        }
        let ty = bytes[0];
        if !matches!(ty, TYPE_REQUEST | TYPE_RESPONSE | TYPE_ABORT) {
            return Err(FrameError::UnknownType(ty));
        }
        let len = u32::from_le_bytes(bytes[1..5].try_into().unwrap());
        if len > MAX_PAYLOAD {
            return Err(FrameError::TooLong(len));
        }
        let total = HEADER_LEN + len as usize;
        if bytes.len() < total {
            return Ok(None);
        }
        let frame = Frame::decode_payload(ty, &bytes[HEADER_LEN..total])?;
        Ok(Some((frame, total)))
    }

    fn decode_payload(ty: u8, payload: &[u8]) -> Result<Frame, FrameError> {
        let mut r = Reader { buf: payload };
        let frame = match ty {
            TYPE_REQUEST => {
                let chal = r.array()?;
                let scope = r.scope()?;
                let pox = if r.flag()? {
                    Some(ApexConfig { er_min: r.u16()?, er_max: r.u16()?, or_min: r.u16()?, or_max: r.u16()? })
                } else {
                    None
                };
                Frame::Request(AttRequest { chal, scope, pox })
            }
            TYPE_RESPONSE => {
                let chal = r.array()?;
                let scope = r.scope()?;
                let exec = r.flag()?;
                let lmt = r.array()?;
                let mac = r.array()?;
                let n = r.u32()? as usize;
                let or_bytes = r.take(n)?.to_vec();
                Frame::Response(AttReport { chal, scope, exec, lmt, mac, or_bytes })
            }
            _ => {
                let text = std::str::from_utf8(r.take(payload.len())?)
                    .map_err(|_| FrameError::Malformed("abort reason is not UTF-8"))?;
                Frame::Abort(text.to_string())
            }
        };
        if !r.buf.is_empty() {
            return Err(FrameError::Malformed("payload longer than its fields"));
        }
        Ok(frame)
    }
}
