//! Opcode table and payload encodings.
//!
//! | opcode | request                  | request payload                                  | ok response body              |
//! |--------|--------------------------|--------------------------------------------------|-------------------------------|
//! | 0x01   | ping                     | –                                                | –                             |
//! | 0x02   | pool_connect             | name str, create u8                              | token u64                     |
//! | 0x03   | cont_open                | pool token u64, label str, create u8             | token u64, pool str           |
//! | 0x04   | cont_close               | cont u64                                         | –                             |
//! | 0x05   | alloc_oids               | cont u64, count u64                              | oid                           |
//! | 0x06   | kv_put                   | cont u64, oid, key str, value bytes              | seq u64                       |
//! | 0x07   | kv_insert                | cont u64, oid, key str, value bytes              | 0 u8 seq u64 / 1 u8 bytes     |
//! | 0x08   | kv_get                   | cont u64, oid, key str                           | value bytes (or not-found)    |
//! | 0x09   | kv_list                  | cont u64, oid                                    | count u32, str × count        |
//! | 0x0A   | array_write              | cont u64, oid, offset u64, data bytes            | seq u64                       |
//! | 0x0B   | array_read               | cont u64, oid, offset u64, len u64               | data bytes                    |
//! | 0x0C   | array_get_size           | cont u64, oid                                    | size u64                      |
//! | 0x7F   | shutdown                 | –                                                | –                             |
//!
//! A response carries opcode `request | 0x80`, the request id of its request,
//! and a payload starting with a status byte ([`Status`]). Error statuses are
//! followed by `kind u8, detail str` identifying the engine error variant.
//! `oid` is `hi u64, lo u64`; `str` and `bytes` are `len u32` + bytes.

use crate::engine::{EngineError, Oid};

pub const PING: u8 = 0x01;
pub const POOL_CONNECT: u8 = 0x02;
pub const CONT_OPEN: u8 = 0x03;
pub const CONT_CLOSE: u8 = 0x04;
pub const ALLOC_OIDS: u8 = 0x05;
pub const KV_PUT: u8 = 0x06;
pub const KV_INSERT: u8 = 0x07;
pub const KV_GET: u8 = 0x08;
pub const KV_LIST: u8 = 0x09;
pub const ARRAY_WRITE: u8 = 0x0A;
pub const ARRAY_READ: u8 = 0x0B;
pub const ARRAY_GET_SIZE: u8 = 0x0C;
pub const SHUTDOWN: u8 = 0x7F;

pub const RESPONSE_BIT: u8 = 0x80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    /// Success-shaped absence (e.g. `kv_get` of a missing key).
    NotFound = 1,
    BadRequest = 2,
    ServerError = 3,
}

impl Status {
    pub fn from_u8(v: u8) -> Option<Status> {
        Some(match v {
            0 => Status::Ok,
            1 => Status::NotFound,
            2 => Status::BadRequest,
            3 => Status::ServerError,
            _ => return None,
        })
    }
}

#[derive(Default)]
pub struct Enc(pub Vec<u8>);

impl Enc {
    pub fn new() -> Self {
        Enc(Vec::new())
    }
    pub fn u8(mut self, v: u8) -> Self {
        self.0.push(v);
        self
    }
    pub fn u32(mut self, v: u32) -> Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn u64(mut self, v: u64) -> Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn oid(self, o: Oid) -> Self {
        self.u64(o.hi).u64(o.lo)
    }
    pub fn bytes(mut self, b: &[u8]) -> Self {
        self.0.extend_from_slice(&(b.len() as u32).to_le_bytes());
        self.0.extend_from_slice(b);
        self
    }
    pub fn str(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }
    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

pub struct Dec<'a>(&'a [u8]);

impl<'a> Dec<'a> {
    pub fn new(b: &'a [u8]) -> Self {
        Dec(b)
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], EngineError> {
        if self.0.len() < n {
            return Err(EngineError::InvalidArgument("truncated payload".into()));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }
    pub fn u8(&mut self) -> Result<u8, EngineError> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32, EngineError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64, EngineError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn oid(&mut self) -> Result<Oid, EngineError> {
        Ok(Oid::new(self.u64()?, self.u64()?))
    }
    pub fn bytes(&mut self) -> Result<Vec<u8>, EngineError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
    pub fn str(&mut self) -> Result<String, EngineError> {
        String::from_utf8(self.bytes()?)
            .map_err(|_| EngineError::InvalidArgument("string is not utf-8".into()))
    }
    pub fn bool(&mut self) -> Result<bool, EngineError> {
        Ok(self.u8()? != 0)
    }
    pub fn finish(self) -> Result<(), EngineError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(EngineError::InvalidArgument("trailing bytes in payload".into()))
        }
    }
}

fn detail(e: &EngineError) -> String {
    match e {
        EngineError::UnknownPool(s)
        | EngineError::ContainerNotFound(s)
        | EngineError::InvalidArgument(s)
        | EngineError::Corrupt(s)
        | EngineError::Storage(s)
        | EngineError::Server(s) => s.clone(),
        EngineError::InvalidHandle(t) => t.to_string(),
        EngineError::KeyTooLong(n) => n.to_string(),
        EngineError::WrongObjectType { oid, expected } => format!("{oid}|{expected}"),
        EngineError::OidsExhausted => String::new(),
    }
}

pub fn error_payload(e: &EngineError) -> Vec<u8> {
    let status = if e.is_client_error() {
        Status::BadRequest
    } else {
        Status::ServerError
    };
    Enc::new()
        .u8(status as u8)
        .u8(e.kind_code())
        .str(&detail(e))
        .finish()
}

/// Inverse of [`error_payload`] after the status byte.
pub fn decode_error(d: &mut Dec<'_>) -> EngineError {
    let parsed = (|| -> Result<EngineError, EngineError> {
        let kind = d.u8()?;
        let s = d.str()?;
        let num = |s: &str| s.parse::<u64>().unwrap_or_default();
        Ok(match kind {
            1 => EngineError::UnknownPool(s),
            2 => EngineError::ContainerNotFound(s),
            3 => EngineError::InvalidHandle(num(&s)),
            4 => EngineError::InvalidArgument(s),
            5 => EngineError::KeyTooLong(num(&s) as usize),
            6 => {
                let (oid, expected) = s.split_once('|').unwrap_or(("0.0", ""));
                EngineError::WrongObjectType {
                    oid: oid.parse().unwrap_or_default(),
                    expected: expected.to_string(),
                }
            }
            7 => EngineError::OidsExhausted,
            8 => EngineError::Corrupt(s),
            9 => EngineError::Storage(s),
            _ => EngineError::Server(s),
        })
    })();
    parsed.unwrap_or_else(|e| EngineError::Server(format!("malformed error response: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_survive_the_wire() {
        let all = [
            EngineError::UnknownPool("p".into()),
            EngineError::ContainerNotFound("c".into()),
            EngineError::InvalidHandle(7),
            EngineError::InvalidArgument("x".into()),
            EngineError::KeyTooLong(600),
            EngineError::WrongObjectType {
                oid: Oid::new(0, 3),
                expected: "array".into(),
            },
            EngineError::OidsExhausted,
            EngineError::Corrupt("c".into()),
            EngineError::Storage("s".into()),
            EngineError::Server("v".into()),
        ];
        for e in all {
            let p = error_payload(&e);
            let mut d = Dec::new(&p);
            let status = Status::from_u8(d.u8().unwrap()).unwrap();
            assert_eq!(status == Status::BadRequest, e.is_client_error());
            assert_eq!(decode_error(&mut d), e);
        }
    }
}
