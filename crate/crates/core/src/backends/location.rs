//! Field location descriptors and their URI form.
//!
//! ```text
//! kv://<pool>/<container>/<hi>.<lo>?off=0&len=<N>
//! file://<relative/path>?off=<K>&len=<N>
//! ```
//!
//! Pool and container are percent-encoded URI segments; file paths are
//! relative to the store root, percent-encoded per segment. Both query
//! parameters are always present and in that order.

use std::fmt;
use std::str::FromStr;

use crate::engine::Oid;
use crate::error::Error;
use crate::pathenc::{decode, encode_with, URI_PATH, URI_SEGMENT};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FieldLocation {
    /// An array object; `offset` is always 0.
    Kv {
        pool: String,
        container: String,
        oid: Oid,
        offset: u64,
        length: u64,
    },
    File {
        path: String,
        offset: u64,
        length: u64,
    },
}

impl FieldLocation {
    pub fn length(&self) -> u64 {
        match self {
            FieldLocation::Kv { length, .. } | FieldLocation::File { length, .. } => *length,
        }
    }

    pub fn offset(&self) -> u64 {
        match self {
            FieldLocation::Kv { offset, .. } | FieldLocation::File { offset, .. } => *offset,
        }
    }

    pub fn scheme(&self) -> &'static str {
        match self {
            FieldLocation::Kv { .. } => "kv",
            FieldLocation::File { .. } => "file",
        }
    }
}

impl fmt::Display for FieldLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldLocation::Kv {
                pool,
                container,
                oid,
                offset,
                length,
            } => write!(
                f,
                "kv://{}/{}/{oid}?off={offset}&len={length}",
                encode_with(pool, URI_SEGMENT),
                encode_with(container, URI_SEGMENT)
            ),
            FieldLocation::File { path, offset, length } => write!(
                f,
                "file://{}?off={offset}&len={length}",
                encode_with(path, URI_PATH)
            ),
        }
    }
}

fn query(q: &str) -> Option<(u64, u64)> {
    let (off, len) = q.split_once('&')?;
    Some((
        off.strip_prefix("off=")?.parse().ok()?,
        len.strip_prefix("len=")?.parse().ok()?,
    ))
}

fn parse(s: &str) -> Option<FieldLocation> {
    let (body, q) = s.split_once('?')?;
    let (offset, length) = query(q)?;
    if let Some(rest) = body.strip_prefix("kv://") {
        let mut parts = rest.split('/');
        let (pool, container, oid) = (parts.next()?, parts.next()?, parts.next()?);
        if parts.next().is_some() || pool.is_empty() || container.is_empty() || offset != 0 {
            return None;
        }
        Some(FieldLocation::Kv {
            pool: decode(pool)?,
            container: decode(container)?,
            oid: oid.parse().ok()?,
            offset,
            length,
        })
    } else if let Some(path) = body.strip_prefix("file://") {
        let path = decode(path)?;
        // Relative, and no way to climb out of the store root.
        if path.is_empty() || path.starts_with('/') || path.split('/').any(|c| c == ".." || c.is_empty()) {
            return None;
        }
        Some(FieldLocation::File { path, offset, length })
    } else {
        None
    }
}

impl FromStr for FieldLocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        parse(s).ok_or_else(|| Error::InvalidLocation(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kv_uri() {
        let loc = FieldLocation::Kv {
            pool: "default".into(),
            container: "od:oper:0001:20231201:1200".into(),
            oid: Oid::new(0, 65),
            offset: 0,
            length: 1048576,
        };
        let s = loc.to_string();
        assert_eq!(s, "kv://default/od:oper:0001:20231201:1200/0.65?off=0&len=1048576");
        assert_eq!(s.parse::<FieldLocation>().unwrap(), loc);
    }

    #[test]
    fn file_uri() {
        let loc = FieldLocation::File {
            path: "od:oper/9f.data".into(),
            offset: 4096,
            length: 10,
        };
        assert_eq!(loc.to_string(), "file://od:oper/9f.data?off=4096&len=10");
        assert_eq!(loc.to_string().parse::<FieldLocation>().unwrap(), loc);
    }

    #[test]
    fn rejects_garbage() {
        for s in [
            "",
            "kv://p/c/0.1",
            "kv://p/c/0.1?off=1&len=2",
            "kv://p/c/x?off=0&len=2",
            "kv://p/c/d/0.1?off=0&len=2",
            "file:///abs?off=0&len=1",
            "file://../x?off=0&len=1",
            "s3://b/k?off=0&len=1",
            "file://a?len=1&off=0",
        ] {
            assert!(s.parse::<FieldLocation>().is_err(), "{s}");
        }
    }

    proptest! {
        #[test]
        fn round_trip(
            pool in "[^/\u{0}]{1,12}",
            container in ".{1,24}",
            hi in 0u64..(1 << 32),
            lo in any::<u64>(),
            length in any::<u64>(),
            dir in "[a-z%?&# :]{1,8}",
            offset in any::<u64>(),
        ) {
            let kv = FieldLocation::Kv { pool, container, oid: Oid::new(hi, lo), offset: 0, length };
            prop_assert_eq!(kv.to_string().parse::<FieldLocation>().unwrap(), kv);
            let file = FieldLocation::File { path: format!("{dir}/x.data"), offset, length };
            prop_assert_eq!(file.to_string().parse::<FieldLocation>().unwrap(), file);
        }
    }
}
