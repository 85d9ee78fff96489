//! Per-category wall-time and operation counters.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ArrayWrite,
    ArrayRead,
    KvPut,
    KvGet,
    KvList,
    /// Pool connection and container open/create.
    Connect,
    OidAlloc,
    FileWrite,
    FileRead,
    FileSync,
    TocAppend,
    /// Reading TOC file bytes.
    TocRead,
    /// One count per TOC record decoded.
    TocRecord,
    /// One count per index blob loaded.
    IndexBlobRead,
    Other,
}

impl Category {
    pub const ALL: [Category; 15] = [
        Category::ArrayWrite,
        Category::ArrayRead,
        Category::KvPut,
        Category::KvGet,
        Category::KvList,
        Category::Connect,
        Category::OidAlloc,
        Category::FileWrite,
        Category::FileRead,
        Category::FileSync,
        Category::TocAppend,
        Category::TocRead,
        Category::TocRecord,
        Category::IndexBlobRead,
        Category::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::ArrayWrite => "array_write",
            Category::ArrayRead => "array_read",
            Category::KvPut => "kv_put",
            Category::KvGet => "kv_get",
            Category::KvList => "kv_list",
            Category::Connect => "connect",
            Category::OidAlloc => "oid_alloc",
            Category::FileWrite => "file_write",
            Category::FileRead => "file_read",
            Category::FileSync => "file_sync",
            Category::TocAppend => "toc_append",
            Category::TocRead => "toc_read",
            Category::TocRecord => "toc_record",
            Category::IndexBlobRead => "index_blob_read",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Default)]
struct Slot {
    nanos: AtomicU64,
    ops: AtomicU64,
}

/// Thread-safe counters; share through an `Arc`.
#[derive(Default)]
pub struct Profiler {
    slots: [Slot; Category::ALL.len()],
}

impl fmt::Debug for Profiler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Profiler").field(&self.snapshot()).finish()
    }
}

impl Profiler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, category: Category, nanos: u64, ops: u64) {
        let slot = &self.slots[category as usize];
        slot.nanos.fetch_add(nanos, Ordering::Relaxed);
        slot.ops.fetch_add(ops, Ordering::Relaxed);
    }

    pub fn time<T>(&self, category: Category, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record(category, start.elapsed().as_nanos() as u64, 1);
        out
    }

    pub fn ops(&self, category: Category) -> u64 {
        self.slots[category as usize].ops.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> Profile {
        let mut entries = BTreeMap::new();
        for c in Category::ALL {
            let slot = &self.slots[c as usize];
            let stat = CategoryStat {
                nanos: slot.nanos.load(Ordering::Relaxed),
                ops: slot.ops.load(Ordering::Relaxed),
            };
            if stat.ops > 0 || stat.nanos > 0 {
                entries.insert(c, stat);
            }
        }
        Profile { entries }
    }

    pub fn reset(&self) {
        for slot in &self.slots {
            slot.nanos.store(0, Ordering::Relaxed);
            slot.ops.store(0, Ordering::Relaxed);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub nanos: u64,
    pub ops: u64,
}

/// Point-in-time copy of a [`Profiler`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile {
    pub entries: BTreeMap<Category, CategoryStat>,
}

impl Profile {
    pub fn get(&self, category: Category) -> CategoryStat {
        self.entries.get(&category).copied().unwrap_or_default()
    }

    pub fn ops(&self, category: Category) -> u64 {
        self.get(category).ops
    }

    /// Difference `self - earlier`, for measuring one operation in isolation.
    pub fn since(&self, earlier: &Profile) -> Profile {
        let mut entries = BTreeMap::new();
        for c in Category::ALL {
            let (a, b) = (self.get(c), earlier.get(c));
            let d = CategoryStat {
                nanos: a.nanos.saturating_sub(b.nanos),
                ops: a.ops.saturating_sub(b.ops),
            };
            if d.ops > 0 || d.nanos > 0 {
                entries.insert(c, d);
            }
        }
        Profile { entries }
    }

    pub fn merge(&mut self, other: &Profile) {
        for (c, s) in &other.entries {
            let e = self.entries.entry(*c).or_default();
            e.nanos += s.nanos;
            e.ops += s.ops;
        }
    }

    pub fn total_ops(&self) -> u64 {
        self.entries.values().map(|s| s.ops).sum()
    }

    pub fn timed_nanos(&self) -> u64 {
        self.entries.values().map(|s| s.nanos).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_diffs() {
        let p = Profiler::new();
        p.record(Category::KvGet, 10, 1);
        let before = p.snapshot();
        p.time(Category::KvGet, || ());
        p.record(Category::ArrayRead, 5, 1);
        let d = p.snapshot().since(&before);
        assert_eq!(d.ops(Category::KvGet), 1);
        assert_eq!(d.ops(Category::ArrayRead), 1);
        assert_eq!(d.total_ops(), 2);
        assert!(d.get(Category::KvPut) == CategoryStat::default());
    }
}
