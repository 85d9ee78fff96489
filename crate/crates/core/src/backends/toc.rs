//! Table-of-contents record and index blob formats.
//!
//! TOC record, little-endian:
//!
//! ```text
//! "TOC1" | type u8 | len u32 | payload[len] | crc32(type | len | payload) u32
//! ```
//!
//! * type 0, init: `dataset str`
//! * type 1, index: `collocation str | blob name str | blob length u64 | blob crc32 u32`
//!
//! `str` is `len u16` + UTF-8. A whole record is at most [`MAX_RECORD`] bytes
//! and is appended with a single `write`, so concurrent appenders never
//! interleave. Readers take the longest parseable prefix; a damaged region is
//! skipped by resynchronising on the next valid record.
//!
//! Index blob: `"IDX1" | count u32 | (element str | location str) × count`,
//! protected by the length and CRC carried in the TOC record that publishes it.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TOC1";
pub const BLOB_MAGIC: &[u8; 4] = b"IDX1";
pub const MAX_RECORD: usize = 4096;
const HEADER: usize = 4 + 1 + 4;
const TRAILER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TocRecord {
    Init {
        dataset: String,
    },
    Index {
        collocation: String,
        blob: String,
        blob_len: u64,
        blob_crc: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Record(TocRecord, usize),
    /// The buffer ends inside a record.
    Incomplete,
    Corrupt(String),
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let n = u16::try_from(s.len())
        .map_err(|_| Error::corrupt("toc record", format!("string of {} bytes", s.len())))?;
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.0.len() < n {
            return None;
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Some(a)
    }
    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_le_bytes(self.take(2)?.try_into().ok()?))
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn str(&mut self) -> Option<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }
}

impl TocRecord {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let kind = match self {
            TocRecord::Init { dataset } => {
                put_str(&mut payload, dataset)?;
                0u8
            }
            TocRecord::Index {
                collocation,
                blob,
                blob_len,
                blob_crc,
            } => {
                put_str(&mut payload, collocation)?;
                put_str(&mut payload, blob)?;
                payload.extend_from_slice(&blob_len.to_le_bytes());
                payload.extend_from_slice(&blob_crc.to_le_bytes());
                1u8
            }
        };
        let total = HEADER + payload.len() + TRAILER;
        if total > MAX_RECORD {
            return Err(Error::corrupt(
                "toc record",
                format!("{total} bytes exceeds the {MAX_RECORD} byte append limit"),
            ));
        }
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(MAGIC);
        out.push(kind);
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        let crc = crc32fast::hash(&out[4..]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Decoded {
        if buf.len() < HEADER {
            return if MAGIC.starts_with(&buf[..buf.len().min(4)]) {
                Decoded::Incomplete
            } else {
                Decoded::Corrupt("bad magic".into())
            };
        }
        if &buf[..4] != MAGIC {
            return Decoded::Corrupt("bad magic".into());
        }
        let kind = buf[4];
        let len = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
        if HEADER + len + TRAILER > MAX_RECORD {
            return Decoded::Corrupt(format!("record length {len} out of range"));
        }
        let total = HEADER + len + TRAILER;
        if buf.len() < total {
            return Decoded::Incomplete;
        }
        let crc = u32::from_le_bytes(buf[total - 4..total].try_into().unwrap());
        if crc32fast::hash(&buf[4..total - 4]) != crc {
            return Decoded::Corrupt("checksum mismatch".into());
        }
        let mut c = Cursor(&buf[HEADER..HEADER + len]);
        let rec = match kind {
            0 => c.str().map(|dataset| TocRecord::Init { dataset }),
            1 => (|| {
                Some(TocRecord::Index {
                    collocation: c.str()?,
                    blob: c.str()?,
                    blob_len: c.u64()?,
                    blob_crc: c.u32()?,
                })
            })(),
            _ => None,
        };
        match rec {
            Some(r) if c.0.is_empty() => Decoded::Record(r, total),
            _ => Decoded::Corrupt(format!("malformed payload of record type {kind}")),
        }
    }
}

/// Result of scanning a whole TOC.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Scan {
    pub records: Vec<TocRecord>,
    /// Bytes skipped while resynchronising past damaged regions.
    pub skipped: usize,
    /// Bytes of an unfinished record at the end.
    pub partial_tail: usize,
}

pub fn scan(buf: &[u8]) -> Scan {
    let mut out = Scan::default();
    let mut pos = 0;
    while pos < buf.len() {
        match TocRecord::decode(&buf[pos..]) {
            Decoded::Record(r, used) => {
                out.records.push(r);
                pos += used;
            }
            Decoded::Incomplete | Decoded::Corrupt(_) => match resync(&buf[pos + 1..]) {
                Some(skip) => {
                    out.skipped += 1 + skip;
                    pos += 1 + skip;
                }
                None => {
                    out.partial_tail = buf.len() - pos;
                    break;
                }
            },
        }
    }
    out
}

/// Offset of the next complete, valid record in `buf`.
fn resync(buf: &[u8]) -> Option<usize> {
    let mut from = 0;
    while let Some(i) = buf[from..].windows(4).position(|w| w == MAGIC) {
        let at = from + i;
        if let Decoded::Record(..) = TocRecord::decode(&buf[at..]) {
            return Some(at);
        }
        from = at + 1;
    }
    None
}

pub fn encode_blob(entries: &[(String, String)]) -> Result<Vec<u8>> {
    let mut out = BLOB_MAGIC.to_vec();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (element, location) in entries {
        put_str(&mut out, element)?;
        put_str(&mut out, location)?;
    }
    Ok(out)
}

pub fn decode_blob(buf: &[u8]) -> Option<Vec<(String, String)>> {
    let mut c = Cursor(buf);
    if c.take(4)? != BLOB_MAGIC {
        return None;
    }
    let n = c.u32()?;
    let mut out = Vec::with_capacity(n.min(1 << 16) as usize);
    for _ in 0..n {
        out.push((c.str()?, c.str()?));
    }
    c.0.is_empty().then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn index(n: u64) -> TocRecord {
        TocRecord::Index {
            collocation: "ef:ml:1:7".into(),
            blob: format!("abc.{n}.index"),
            blob_len: n * 10,
            blob_crc: n as u32,
        }
    }

    #[test]
    fn round_trip_and_prefixes() {
        let rec = index(3);
        let bytes = rec.encode().unwrap();
        assert_eq!(TocRecord::decode(&bytes), Decoded::Record(rec, bytes.len()));
        for k in 0..bytes.len() {
            assert_eq!(TocRecord::decode(&bytes[..k]), Decoded::Incomplete, "prefix {k}");
        }
        let mut bad = bytes.clone();
        bad[12] ^= 1;
        assert!(matches!(TocRecord::decode(&bad), Decoded::Corrupt(_)));
    }

    #[test]
    fn oversized_records_refused() {
        let rec = TocRecord::Init { dataset: "x".repeat(5000) };
        assert!(rec.encode().is_err());
    }

    #[test]
    fn scan_skips_damage_and_reports_tail() {
        let mut buf = TocRecord::Init { dataset: "d".into() }.encode().unwrap();
        buf.extend(index(1).encode().unwrap());
        let torn = index(2).encode().unwrap();
        buf.extend(&torn[..7]);
        buf.extend(index(3).encode().unwrap());
        let s = scan(&buf);
        assert_eq!(s.records.len(), 3);
        assert_eq!(s.skipped, 7);
        let tail = index(4).encode().unwrap();
        buf.extend(&tail[..tail.len() - 1]);
        let s = scan(&buf);
        assert_eq!(s.records.len(), 3);
        assert_eq!(s.partial_tail, tail.len() - 1);
    }

    #[test]
    fn blob_round_trip() {
        let entries = vec![("0:v".to_string(), "file://a?off=0&len=1".to_string())];
        let b = encode_blob(&entries).unwrap();
        assert_eq!(decode_blob(&b).unwrap(), entries);
        assert!(decode_blob(&b[..b.len() - 1]).is_none());
    }

    proptest! {
        #[test]
        fn truncated_scan_is_a_prefix(n in 1usize..20, cut in any::<prop::sample::Index>()) {
            let recs: Vec<_> = (0..n as u64).map(index).collect();
            let buf: Vec<u8> = recs.iter().flat_map(|r| r.encode().unwrap()).collect();
            let s = scan(&buf[..cut.index(buf.len() + 1)]);
            prop_assert_eq!(s.skipped, 0);
            prop_assert_eq!(&s.records[..], &recs[..s.records.len()]);
        }
    }
}
