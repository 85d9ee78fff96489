//! Catalogue over a directory tree:
//!
//! ```text
//! <root>/schema                       schema fingerprint
//! <root>/<dataset>/toc                append-only table of contents
//! <root>/<dataset>/<uuid>.<n>.index   index blobs, one per collocation per flush
//! ```
//!
//! Entries are buffered in memory until `flush`, which writes and syncs a blob
//! per collocation and then publishes each with one TOC record. A reader only
//! ever follows records it can parse, and a record is appended only after its
//! blob is durable, so every reachable blob is complete.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::file_store::{ensure_dataset_dir, sync_dir};
use super::toc::{self, TocRecord};
use super::{sort_entries, Catalogue, FieldLocation, ListEntry};
use crate::error::{Error, Result};
use crate::pathenc::{decode, encode_component};
use crate::profile::{Category, Profiler};
use crate::schema::{Key, Level, Schema};
use crate::Request;

const TOC_FILE: &str = "toc";
const SCHEMA_FILE: &str = "schema";

type Blob = Arc<HashMap<String, String>>;

pub struct TocCatalogue {
    root: PathBuf,
    schema: Schema,
    profiler: Arc<Profiler>,
    id: String,
    flushes: u64,
    pending: BTreeMap<(String, String), Vec<(String, String)>>,
    tocs: HashMap<String, File>,
    blobs: HashMap<PathBuf, Blob>,
}

/// Creates `path` holding exactly `content`, unless it already exists.
/// Returns whether this call created it.
fn create_once(path: &Path, content: &[u8]) -> io::Result<bool> {
    let dir = path.parent().expect("path has a parent");
    let tmp = dir.join(format!(".{}.tmp", uuid::Uuid::new_v4().simple()));
    let mut f = File::create(&tmp)?;
    f.write_all(content)?;
    f.sync_data()?;
    let linked = fs::hard_link(&tmp, path);
    fs::remove_file(&tmp)?;
    match linked {
        Ok(()) => {
            sync_dir(dir)?;
            Ok(true)
        }
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(e),
    }
}

impl TocCatalogue {
    pub fn new(root: impl AsRef<Path>, schema: Schema, profiler: Arc<Profiler>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(TocCatalogue {
            root,
            schema,
            profiler,
            id: uuid::Uuid::new_v4().simple().to_string(),
            flushes: 0,
            pending: BTreeMap::new(),
            tocs: HashMap::new(),
            blobs: HashMap::new(),
        })
    }

    fn dataset_dir(&self, ds: &str) -> PathBuf {
        self.root.join(encode_component(ds))
    }

    /// TOC of `ds` opened for appending, created with its init record if absent.
    fn toc_for_append(&mut self, ds: &str) -> Result<&mut File> {
        if !self.tocs.contains_key(ds) {
            let dir = ensure_dataset_dir(&self.root, ds)?;
            let path = dir.join(TOC_FILE);
            if !path.exists() {
                let init = TocRecord::Init { dataset: ds.to_string() }.encode()?;
                create_once(&path, &init)?;
            }
            let f = OpenOptions::new().append(true).open(&path)?;
            self.tocs.insert(ds.to_string(), f);
        }
        Ok(self.tocs.get_mut(ds).unwrap())
    }

    /// All parseable records of `ds`'s TOC; empty if there is none.
    fn read_toc(&self, ds: &str) -> Result<Vec<TocRecord>> {
        let path = self.dataset_dir(ds).join(TOC_FILE);
        let bytes = match self.profiler.time(Category::TocRead, || fs::read(&path)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let scan = toc::scan(&bytes);
        self.profiler
            .record(Category::TocRecord, 0, scan.records.len() as u64);
        Ok(scan.records)
    }

    fn load_blob(&mut self, ds: &str, name: &str, len: u64, crc: u32) -> Result<Blob> {
        let path = self.dataset_dir(ds).join(name);
        if let Some(b) = self.blobs.get(&path) {
            return Ok(b.clone());
        }
        let bytes = self.profiler.time(Category::IndexBlobRead, || fs::read(&path))?;
        if bytes.len() as u64 != len || crc32fast::hash(&bytes) != crc {
            return Err(Error::corrupt(
                format!("index blob {}", path.display()),
                "length or checksum differs from its toc record",
            ));
        }
        let entries = toc::decode_blob(&bytes)
            .ok_or_else(|| Error::corrupt(format!("index blob {}", path.display()), "malformed"))?;
        let blob: Blob = Arc::new(entries.into_iter().collect());
        self.blobs.insert(path, blob.clone());
        Ok(blob)
    }

    fn publish(&mut self, ds: &str, coll: &str, entries: &[(String, String)]) -> Result<()> {
        let dir = ensure_dataset_dir(&self.root, ds)?;
        let name = format!("{}.{}.index", self.id, self.flushes);
        self.flushes += 1;
        let bytes = toc::encode_blob(entries)?;
        let path = dir.join(&name);
        self.profiler.time(Category::FileWrite, || -> io::Result<()> {
            let mut f = OpenOptions::new().write(true).create_new(true).open(&path)?;
            f.write_all(&bytes)?;
            f.sync_data()?;
            sync_dir(&dir)
        })?;
        let record = TocRecord::Index {
            collocation: coll.to_string(),
            blob: name,
            blob_len: bytes.len() as u64,
            blob_crc: crc32fast::hash(&bytes),
        }
        .encode()?;
        let profiler = self.profiler.clone();
        let toc = self.toc_for_append(ds)?;
        profiler.time(Category::TocAppend, || -> io::Result<()> {
            // One write call per record keeps concurrent appends whole.
            let n = toc.write(&record)?;
            if n != record.len() {
                return Err(io::Error::other(format!("short toc append: {n} of {} bytes", record.len())));
            }
            toc.sync_data()
        })?;
        self.blobs
            .insert(path, Arc::new(entries.iter().cloned().collect()));
        Ok(())
    }

    fn dataset_names(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            if let Some(name) = entry.file_name().to_str().and_then(decode) {
                out.push(name);
            }
        }
        out.sort();
        Ok(out)
    }
}

impl Catalogue for TocCatalogue {
    fn check_schema(&mut self, fingerprint: &str) -> Result<()> {
        let path = self.root.join(SCHEMA_FILE);
        if !path.exists() {
            create_once(&path, fingerprint.as_bytes())?;
        }
        let stored = fs::read_to_string(&path)?;
        if stored != fingerprint {
            return Err(Error::SchemaMismatch {
                stored,
                session: fingerprint.to_string(),
            });
        }
        Ok(())
    }

    fn archive(&mut self, dataset: &Key, collocation: &Key, element: &Key, location: &FieldLocation) -> Result<()> {
        self.pending
            .entry((dataset.stringify(), collocation.stringify()))
            .or_default()
            .push((element.stringify(), location.to_string()));
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        while let Some(((ds, coll), entries)) = self.pending.pop_first() {
            if let Err(e) = self.publish(&ds, &coll, &entries) {
                self.pending.insert((ds, coll), entries);
                return Err(e);
            }
        }
        Ok(())
    }

    fn retrieve(&mut self, dataset: &Key, collocation: &Key, element: &Key) -> Result<Option<FieldLocation>> {
        let (ds, coll, elem) = (dataset.stringify(), collocation.stringify(), element.stringify());
        let records = self.read_toc(&ds)?;
        for rec in records.iter().rev() {
            let TocRecord::Index {
                collocation,
                blob,
                blob_len,
                blob_crc,
            } = rec
            else {
                continue;
            };
            if *collocation != coll {
                continue;
            }
            if let Some(loc) = self.load_blob(&ds, blob, *blob_len, *blob_crc)?.get(&elem) {
                return loc.parse().map(Some);
            }
        }
        Ok(None)
    }

    fn list(&mut self, request: &Request) -> Result<Vec<ListEntry>> {
        let mut out = Vec::new();
        for ds in self.dataset_names()? {
            let Ok(dataset) = Key::from_stringified(Level::Dataset, self.schema.dataset_keywords(), &ds) else {
                continue;
            };
            if !request.matches(&dataset) {
                continue;
            }
            // collocation -> element -> location, later records superseding
            let mut merged: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
            for rec in self.read_toc(&ds)? {
                let TocRecord::Index {
                    collocation,
                    blob,
                    blob_len,
                    blob_crc,
                } = rec
                else {
                    continue;
                };
                let coll = Key::from_stringified(Level::Collocation, self.schema.collocation_keywords(), &collocation)?;
                if !request.matches(&coll) {
                    continue;
                }
                let entries = self.load_blob(&ds, &blob, blob_len, blob_crc)?;
                let slot = merged.entry(collocation).or_default();
                for (e, l) in entries.iter() {
                    slot.insert(e.clone(), l.clone());
                }
            }
            for (coll, elems) in merged {
                let collocation = Key::from_stringified(Level::Collocation, self.schema.collocation_keywords(), &coll)?;
                for (elem, loc) in elems {
                    let element = Key::from_stringified(Level::Element, self.schema.element_keywords(), &elem)?;
                    if request.matches(&element) {
                        out.push(ListEntry {
                            dataset: dataset.clone(),
                            collocation: collocation.clone(),
                            element,
                            location: loc.parse()?,
                        });
                    }
                }
            }
        }
        sort_entries(&mut out);
        Ok(out)
    }
}
