//! Store and Catalogue interfaces and their two implementations each.
//!
//! | pair | store        | catalogue       | visibility                  |
//! |------|--------------|-----------------|-----------------------------|
//! | kv   | [`KvStore`]  | [`KvCatalogue`] | on return from `archive`    |
//! | toc  | [`FileStore`]| [`TocCatalogue`]| on return from `flush`      |
//!
//! An instance is meant for one logical writer or reader; concurrency comes
//! from many instances over shared storage.

mod file_store;
mod kv_catalogue;
mod kv_store;
mod location;
pub mod toc;
mod toc_catalogue;

use std::fs::File;
use std::os::unix::fs::FileExt;
use std::sync::Arc;

use crate::engine::{ContainerHandle, ObjectEngine, Oid};
use crate::error::{Error, Result};
use crate::profile::{Category, Profiler};
use crate::schema::Key;
use crate::Request;

pub use file_store::FileStore;
pub use kv_catalogue::{KvCatalogue, KvCatalogueOptions, DEFAULT_POOL, DEFAULT_ROOT_CONTAINER};
pub use kv_store::{KvStore, DEFAULT_OID_BATCH};
pub use location::FieldLocation;
pub use toc_catalogue::TocCatalogue;

/// Bulk data backend.
pub trait Store: Send {
    /// Takes a copy of `data` and returns where it will live.
    fn archive(&mut self, dataset: &Key, collocation: &Key, data: &[u8]) -> Result<FieldLocation>;
    /// Blocks until everything archived so far is on stable storage.
    fn flush(&mut self) -> Result<()>;
    fn retrieve(&mut self, location: &FieldLocation) -> Result<DataHandle>;
}

/// Indexing backend.
pub trait Catalogue: Send {
    /// Records `fingerprint` on first use and rejects storage created under a
    /// different one.
    fn check_schema(&mut self, fingerprint: &str) -> Result<()>;
    fn archive(&mut self, dataset: &Key, collocation: &Key, element: &Key, location: &FieldLocation) -> Result<()>;
    /// Makes everything archived by this instance visible to new readers.
    fn flush(&mut self) -> Result<()>;
    /// `Ok(None)` when nothing is indexed under the key; that is not an error.
    fn retrieve(&mut self, dataset: &Key, collocation: &Key, element: &Key) -> Result<Option<FieldLocation>>;
    /// Every visible field matching `request`, with its newest location,
    /// ordered by (dataset, collocation, element) strings.
    fn list(&mut self, request: &Request) -> Result<Vec<ListEntry>>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListEntry {
    pub dataset: Key,
    pub collocation: Key,
    pub element: Key,
    pub location: FieldLocation,
}

fn sort_entries(entries: &mut [ListEntry]) {
    entries.sort_by_cached_key(|e| (e.dataset.stringify(), e.collocation.stringify(), e.element.stringify()));
}

/// A pending read of exactly `location.length()` bytes.
pub struct DataHandle {
    location: FieldLocation,
    source: Source,
}

enum Source {
    Array {
        engine: Arc<dyn ObjectEngine>,
        cont: ContainerHandle,
        oid: Oid,
    },
    File {
        file: Arc<File>,
        profiler: Arc<Profiler>,
    },
}

impl DataHandle {
    pub fn location(&self) -> &FieldLocation {
        &self.location
    }

    pub fn len(&self) -> u64 {
        self.location.length()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read_all(self) -> Result<Vec<u8>> {
        let len = self.location.length();
        let dangling = |reason: String| Error::DanglingLocation {
            location: self.location.to_string(),
            reason,
        };
        let bytes = match &self.source {
            Source::Array { engine, cont, oid } => engine.array_read(cont, *oid, 0, len)?,
            Source::File { file, profiler } => {
                let mut buf = vec![0u8; len as usize];
                let mut got = 0;
                profiler.time(Category::FileRead, || -> std::io::Result<()> {
                    while got < buf.len() {
                        match file.read_at(&mut buf[got..], self.location.offset() + got as u64)? {
                            0 => break,
                            n => got += n,
                        }
                    }
                    Ok(())
                })?;
                buf.truncate(got);
                buf
            }
        };
        if bytes.len() as u64 != len {
            return Err(dangling(format!("expected {len} bytes, found {}", bytes.len())));
        }
        Ok(bytes)
    }
}
