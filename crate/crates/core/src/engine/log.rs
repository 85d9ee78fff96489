//! Commit log record format.
//!
//! ```text
//! record  := magic "MVC1" | payload_len u32 | payload | crc32(payload) u32
//! payload := seq u64 | kind u8 | body
//! kind 0 Init       body := label
//! kind 1 KvPut      body := oid | key | extent
//! kind 2 ArrayWrite body := oid | offset u64 | extent
//! kind 3 AllocOids  body := first oid | count u64
//! oid    := hi u64 | lo u64
//! extent := log_offset u64 | len u64 | crc32 u32
//! label, key := len u16 | utf-8 bytes
//! ```
//!
//! All integers little-endian.

use super::{EngineError, Oid};

pub const COMMIT_MAGIC: &[u8; 4] = b"MVC1";
const HEADER: usize = 8;
const TRAILER: usize = 4;
/// Largest payload a well-formed record can carry (key cap + fixed fields, with slack).
const MAX_PAYLOAD: u32 = 4096;

/// A write-once byte range of the value log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueExtent {
    pub log_offset: u64,
    pub len: u64,
    pub crc: u32,
}

impl ValueExtent {
    pub fn end(&self) -> u64 {
        self.log_offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordBody {
    Init { label: String },
    KvPut { oid: Oid, key: String, extent: ValueExtent },
    ArrayWrite { oid: Oid, offset: u64, extent: ValueExtent },
    AllocOids { first: Oid, count: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub seq: u64,
    pub body: RecordBody,
}

#[derive(Debug)]
pub(crate) enum Decoded {
    Record(CommitRecord, usize),
    /// Not enough bytes for a whole record.
    Incomplete,
    /// Reason is only surfaced through `Debug`.
    Corrupt(#[allow(dead_code)] String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn oid(&mut self, o: Oid) {
        self.u64(o.hi);
        self.u64(o.lo);
    }
    fn str(&mut self, s: &str) {
        self.0.extend_from_slice(&(s.len() as u16).to_le_bytes());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn extent(&mut self, e: &ValueExtent) {
        self.u64(e.log_offset);
        self.u64(e.len);
        self.u32(e.crc);
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], String> {
        if self.0.len() < n {
            return Err("payload too short".into());
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn oid(&mut self) -> Result<Oid, String> {
        Ok(Oid::new(self.u64()?, self.u64()?))
    }
    fn str(&mut self) -> Result<String, String> {
        let n = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
    fn extent(&mut self) -> Result<ValueExtent, String> {
        Ok(ValueExtent {
            log_offset: self.u64()?,
            len: self.u64()?,
            crc: self.u32()?,
        })
    }
}

impl CommitRecord {
    pub fn encode(&self) -> Result<Vec<u8>, EngineError> {
        let mut p = Writer(Vec::with_capacity(64));
        p.u64(self.seq);
        match &self.body {
            RecordBody::Init { label } => {
                p.u8(0);
                p.str(label);
            }
            RecordBody::KvPut { oid, key, extent } => {
                p.u8(1);
                p.oid(*oid);
                p.str(key);
                p.extent(extent);
            }
            RecordBody::ArrayWrite { oid, offset, extent } => {
                p.u8(2);
                p.oid(*oid);
                p.u64(*offset);
                p.extent(extent);
            }
            RecordBody::AllocOids { first, count } => {
                p.u8(3);
                p.oid(*first);
                p.u64(*count);
            }
        }
        let payload = p.0;
        if payload.len() > MAX_PAYLOAD as usize {
            return Err(EngineError::InvalidArgument("commit record too large".into()));
        }
        let mut out = Vec::with_capacity(HEADER + payload.len() + TRAILER);
        out.extend_from_slice(COMMIT_MAGIC);
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        Ok(out)
    }

    pub(crate) fn decode(buf: &[u8]) -> Decoded {
        if buf.len() < HEADER {
            return Decoded::Incomplete;
        }
        if &buf[..4] != COMMIT_MAGIC {
            return Decoded::Corrupt("bad magic".into());
        }
        let len = u32::from_le_bytes(buf[4..8].try_into().unwrap());
        if len > MAX_PAYLOAD {
            return Decoded::Corrupt(format!("payload length {len} out of range"));
        }
        let total = HEADER + len as usize + TRAILER;
        if buf.len() < total {
            return Decoded::Incomplete;
        }
        let payload = &buf[HEADER..HEADER + len as usize];
        let crc = u32::from_le_bytes(buf[total - 4..total].try_into().unwrap());
        if crc32fast::hash(payload) != crc {
            return Decoded::Corrupt("crc mismatch".into());
        }
        match Self::decode_payload(payload) {
            Ok(rec) => Decoded::Record(rec, total),
            Err(e) => Decoded::Corrupt(e),
        }
    }

    fn decode_payload(payload: &[u8]) -> Result<CommitRecord, String> {
        let mut r = Reader(payload);
        let seq = r.u64()?;
        let body = match r.u8()? {
            0 => RecordBody::Init { label: r.str()? },
            1 => RecordBody::KvPut {
                oid: r.oid()?,
                key: r.str()?,
                extent: r.extent()?,
            },
            2 => RecordBody::ArrayWrite {
                oid: r.oid()?,
                offset: r.u64()?,
                extent: r.extent()?,
            },
            3 => RecordBody::AllocOids {
                first: r.oid()?,
                count: r.u64()?,
            },
            k => return Err(format!("unknown record kind {k}")),
        };
        if !r.0.is_empty() {
            return Err("trailing bytes in payload".into());
        }
        Ok(CommitRecord { seq, body })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<CommitRecord> {
        let e = ValueExtent {
            log_offset: 7,
            len: 9,
            crc: 0xdead_beef,
        };
        vec![
            CommitRecord {
                seq: 0,
                body: RecordBody::Init { label: "od:oper".into() },
            },
            CommitRecord {
                seq: 1,
                body: RecordBody::KvPut {
                    oid: Oid::ENTRY,
                    key: "1:v".into(),
                    extent: e,
                },
            },
            CommitRecord {
                seq: 2,
                body: RecordBody::ArrayWrite {
                    oid: Oid::new(0, 5),
                    offset: 10,
                    extent: e,
                },
            },
            CommitRecord {
                seq: 3,
                body: RecordBody::AllocOids {
                    first: Oid::new(0, 1),
                    count: 64,
                },
            },
        ]
    }

    #[test]
    fn records_round_trip() {
        for rec in sample() {
            let bytes = rec.encode().unwrap();
            match CommitRecord::decode(&bytes) {
                Decoded::Record(r, n) => {
                    assert_eq!(r, rec);
                    assert_eq!(n, bytes.len());
                }
                _ => panic!("decode failed"),
            }
        }
    }

    #[test]
    fn every_strict_prefix_is_incomplete() {
        let bytes = sample()[1].encode().unwrap();
        for cut in 0..bytes.len() {
            assert!(matches!(CommitRecord::decode(&bytes[..cut]), Decoded::Incomplete));
        }
    }

    #[test]
    fn flipped_bit_is_detected() {
        let mut bytes = sample()[1].encode().unwrap();
        bytes[12] ^= 1;
        assert!(matches!(CommitRecord::decode(&bytes), Decoded::Corrupt(_)));
    }
}
