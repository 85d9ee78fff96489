//! Embedded MVCC object store: pools, containers, transactional key-value
//! objects, byte arrays and batched OID allocation.
//!
//! Every write lands in a fresh extent of the container's append-only value
//! log, is made durable, and is then published by appending a CRC-protected
//! commit record. Readers look up the latest published version in memory and
//! read immutable bytes, so they never block on writers and never observe a
//! half-written value. The in-memory index is rebuilt from the commit log when
//! a container is opened.
//!
//! [`ObjectEngine`] is the operation contract. [`LocalEngine`] implements it
//! over a directory; `wire::RemoteEngine` implements it over a socket.

mod local;
mod log;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::profile::{Category, Profiler};

pub use local::{open_shared, EngineOptions, LocalEngine};
pub use log::{CommitRecord, RecordBody, ValueExtent, COMMIT_MAGIC};

/// Longest accepted KV key, in bytes.
pub const MAX_KEY_LEN: usize = 512;

/// Exclusive upper bound of the user-managed OID space (96 bits).
pub const OID_SPACE: u128 = 1 << 96;

/// 128-bit object identifier. Only the low 96 bits are used; `0.0` is the
/// per-container entry-point key-value object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Oid {
    pub hi: u64,
    pub lo: u64,
}

impl Oid {
    pub const ENTRY: Oid = Oid { hi: 0, lo: 0 };

    pub const fn new(hi: u64, lo: u64) -> Self {
        Oid { hi, lo }
    }

    pub fn as_u128(self) -> u128 {
        ((self.hi as u128) << 64) | self.lo as u128
    }

    pub fn from_u128(v: u128) -> Self {
        Oid {
            hi: (v >> 64) as u64,
            lo: v as u64,
        }
    }

    /// The OID `n` places after this one, or `None` past the 96-bit space.
    pub fn offset(self, n: u64) -> Option<Oid> {
        let v = self.as_u128().checked_add(n as u128)?;
        (v < OID_SPACE).then(|| Oid::from_u128(v))
    }

    pub fn is_entry(self) -> bool {
        self == Oid::ENTRY
    }
}

impl fmt::Display for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.hi, self.lo)
    }
}

impl FromStr for Oid {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EngineError::InvalidArgument(format!("malformed oid `{s}`"));
        let (hi, lo) = s.split_once('.').ok_or_else(bad)?;
        Ok(Oid {
            hi: hi.parse().map_err(|_| bad())?,
            lo: lo.parse().map_err(|_| bad())?,
        })
    }
}

/// Commit sequence number; strictly increasing per container, 0 = nothing committed.
pub type CommitSeq = u64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PoolHandle {
    pub pool: String,
    pub token: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContainerHandle {
    pub pool: String,
    pub label: String,
    pub token: u64,
}

/// Outcome of [`ObjectEngine::kv_insert`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Insert {
    Inserted(CommitSeq),
    /// The key already existed; carries its current value.
    Exists(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unknown pool `{0}`")]
    UnknownPool(String),
    #[error("container `{0}` not found")]
    ContainerNotFound(String),
    #[error("handle {0} is closed or unknown")]
    InvalidHandle(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("key of {0} bytes exceeds the {MAX_KEY_LEN} byte limit")]
    KeyTooLong(usize),
    #[error("object {oid} is not a {expected}")]
    WrongObjectType { oid: Oid, expected: String },
    #[error("oid space exhausted")]
    OidsExhausted,
    #[error("corrupt storage: {0}")]
    Corrupt(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("server error: {0}")]
    Server(String),
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Storage(e.to_string())
    }
}

impl EngineError {
    /// Wire code of the variant; see the wire module's status table.
    pub fn kind_code(&self) -> u8 {
        match self {
            EngineError::UnknownPool(_) => 1,
            EngineError::ContainerNotFound(_) => 2,
            EngineError::InvalidHandle(_) => 3,
            EngineError::InvalidArgument(_) => 4,
            EngineError::KeyTooLong(_) => 5,
            EngineError::WrongObjectType { .. } => 6,
            EngineError::OidsExhausted => 7,
            EngineError::Corrupt(_) => 8,
            EngineError::Storage(_) => 9,
            EngineError::Server(_) => 10,
        }
    }

    /// Whether the caller is at fault (as opposed to the storage system).
    pub fn is_client_error(&self) -> bool {
        !matches!(
            self,
            EngineError::Corrupt(_) | EngineError::Storage(_) | EngineError::Server(_)
        )
    }
}

pub type EngineResult<T> = Result<T, EngineError>;

/// The engine operation contract shared by the embedded and remote engines.
pub trait ObjectEngine: Send + Sync {
    fn pool_connect(&self, name: &str, create: bool) -> EngineResult<PoolHandle>;

    fn cont_open(&self, pool: &PoolHandle, label: &str, create: bool) -> EngineResult<ContainerHandle>;

    fn cont_close(&self, cont: &ContainerHandle) -> EngineResult<()>;

    /// Reserves `count` consecutive OIDs and returns the first.
    fn alloc_oids(&self, cont: &ContainerHandle, count: u64) -> EngineResult<Oid>;

    fn kv_put(&self, cont: &ContainerHandle, oid: Oid, key: &str, value: &[u8]) -> EngineResult<CommitSeq>;

    /// Put-if-absent. Atomic with respect to other inserts on the same key.
    fn kv_insert(&self, cont: &ContainerHandle, oid: Oid, key: &str, value: &[u8]) -> EngineResult<Insert>;

    fn kv_get(&self, cont: &ContainerHandle, oid: Oid, key: &str) -> EngineResult<Option<Vec<u8>>>;

    fn kv_list(&self, cont: &ContainerHandle, oid: Oid) -> EngineResult<Vec<String>>;

    fn array_write(&self, cont: &ContainerHandle, oid: Oid, offset: u64, data: &[u8]) -> EngineResult<CommitSeq>;

    /// Reads up to `len` bytes; the result is short when the range passes the array end.
    fn array_read(&self, cont: &ContainerHandle, oid: Oid, offset: u64, len: u64) -> EngineResult<Vec<u8>>;

    fn array_get_size(&self, cont: &ContainerHandle, oid: Oid) -> EngineResult<u64>;
}

/// Times every call of the wrapped engine into a [`Profiler`].
pub struct Profiled {
    inner: Arc<dyn ObjectEngine>,
    profiler: Arc<Profiler>,
}

impl Profiled {
    pub fn new(inner: Arc<dyn ObjectEngine>, profiler: Arc<Profiler>) -> Self {
        Profiled { inner, profiler }
    }

    pub fn profiler(&self) -> &Arc<Profiler> {
        &self.profiler
    }
}

impl ObjectEngine for Profiled {
    fn pool_connect(&self, name: &str, create: bool) -> EngineResult<PoolHandle> {
        self.profiler
            .time(Category::Connect, || self.inner.pool_connect(name, create))
    }

    fn cont_open(&self, pool: &PoolHandle, label: &str, create: bool) -> EngineResult<ContainerHandle> {
        self.profiler
            .time(Category::Connect, || self.inner.cont_open(pool, label, create))
    }

    fn cont_close(&self, cont: &ContainerHandle) -> EngineResult<()> {
        self.profiler
            .time(Category::Connect, || self.inner.cont_close(cont))
    }

    fn alloc_oids(&self, cont: &ContainerHandle, count: u64) -> EngineResult<Oid> {
        self.profiler
            .time(Category::OidAlloc, || self.inner.alloc_oids(cont, count))
    }

    fn kv_put(&self, cont: &ContainerHandle, oid: Oid, key: &str, value: &[u8]) -> EngineResult<CommitSeq> {
        self.profiler
            .time(Category::KvPut, || self.inner.kv_put(cont, oid, key, value))
    }

    fn kv_insert(&self, cont: &ContainerHandle, oid: Oid, key: &str, value: &[u8]) -> EngineResult<Insert> {
        self.profiler
            .time(Category::KvPut, || self.inner.kv_insert(cont, oid, key, value))
    }

    fn kv_get(&self, cont: &ContainerHandle, oid: Oid, key: &str) -> EngineResult<Option<Vec<u8>>> {
        self.profiler
            .time(Category::KvGet, || self.inner.kv_get(cont, oid, key))
    }

    fn kv_list(&self, cont: &ContainerHandle, oid: Oid) -> EngineResult<Vec<String>> {
        self.profiler
            .time(Category::KvList, || self.inner.kv_list(cont, oid))
    }

    fn array_write(&self, cont: &ContainerHandle, oid: Oid, offset: u64, data: &[u8]) -> EngineResult<CommitSeq> {
        self.profiler
            .time(Category::ArrayWrite, || self.inner.array_write(cont, oid, offset, data))
    }

    fn array_read(&self, cont: &ContainerHandle, oid: Oid, offset: u64, len: u64) -> EngineResult<Vec<u8>> {
        self.profiler
            .time(Category::ArrayRead, || self.inner.array_read(cont, oid, offset, len))
    }

    fn array_get_size(&self, cont: &ContainerHandle, oid: Oid) -> EngineResult<u64> {
        self.profiler
            .time(Category::Other, || self.inner.array_get_size(cont, oid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oid_text_and_arithmetic() {
        let o = Oid::new(1, u64::MAX);
        assert_eq!(o.to_string(), "1.18446744073709551615");
        assert_eq!(o.to_string().parse::<Oid>().unwrap(), o);
        assert_eq!(o.offset(1), Some(Oid::new(2, 0)));
        assert_eq!(Oid::from_u128(OID_SPACE - 1).offset(1), None);
        assert!("1-2".parse::<Oid>().is_err());
    }
}
