use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{DataHandle, FieldLocation, Source, Store};
use crate::error::{Error, Result};
use crate::pathenc::encode_component;
use crate::profile::{Category, Profiler};
use crate::schema::Key;

struct DataFile {
    file: File,
    rel: String,
    end: u64,
    dirty: bool,
    /// Directory entry not yet synced.
    fresh: bool,
}

/// Appends fields to one data file per (process, dataset):
/// `<root>/<dataset>/<uuid>.data`.
pub struct FileStore {
    root: PathBuf,
    id: String,
    profiler: Arc<Profiler>,
    files: HashMap<String, DataFile>,
    readers: HashMap<String, Arc<File>>,
}

pub(crate) fn sync_dir(dir: &Path) -> std::io::Result<()> {
    File::open(dir)?.sync_all()
}

/// Creates `<root>/<dataset>` and makes both directory entries durable.
pub(crate) fn ensure_dataset_dir(root: &Path, dataset: &str) -> std::io::Result<PathBuf> {
    let dir = root.join(encode_component(dataset));
    if !dir.is_dir() {
        fs::create_dir_all(&dir)?;
        sync_dir(root)?;
    }
    Ok(dir)
}

impl FileStore {
    pub fn new(root: impl AsRef<Path>, profiler: Arc<Profiler>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(FileStore {
            root,
            id: uuid::Uuid::new_v4().simple().to_string(),
            profiler,
            files: HashMap::new(),
            readers: HashMap::new(),
        })
    }

    fn data_file(&mut self, dataset: &str) -> Result<&mut DataFile> {
        if !self.files.contains_key(dataset) {
            let dir = ensure_dataset_dir(&self.root, dataset)?;
            let name = format!("{}.data", self.id);
            let file = OpenOptions::new()
                .create_new(true)
                .append(true)
                .open(dir.join(&name))?;
            let rel = format!("{}/{name}", encode_component(dataset));
            self.files.insert(
                dataset.to_string(),
                DataFile {
                    file,
                    rel,
                    end: 0,
                    dirty: false,
                    fresh: true,
                },
            );
        }
        Ok(self.files.get_mut(dataset).unwrap())
    }
}

impl Store for FileStore {
    fn archive(&mut self, dataset: &Key, _collocation: &Key, data: &[u8]) -> Result<FieldLocation> {
        if data.is_empty() {
            return Err(Error::EmptyPayload);
        }
        let profiler = self.profiler.clone();
        let f = self.data_file(&dataset.stringify())?;
        profiler.time(Category::FileWrite, || f.file.write_all(data))?;
        let loc = FieldLocation::File {
            path: f.rel.clone(),
            offset: f.end,
            length: data.len() as u64,
        };
        f.end += data.len() as u64;
        f.dirty = true;
        Ok(loc)
    }

    fn flush(&mut self) -> Result<()> {
        for f in self.files.values_mut().filter(|f| f.dirty) {
            self.profiler.time(Category::FileSync, || -> std::io::Result<()> {
                f.file.sync_data()?;
                if f.fresh {
                    let path = self.root.join(&f.rel);
                    sync_dir(path.parent().expect("data files live in a dataset directory"))?;
                }
                Ok(())
            })?;
            f.dirty = false;
            f.fresh = false;
        }
        Ok(())
    }

    fn retrieve(&mut self, location: &FieldLocation) -> Result<DataHandle> {
        let FieldLocation::File { path, .. } = location else {
            return Err(Error::DanglingLocation {
                location: location.to_string(),
                reason: "not a file location".into(),
            });
        };
        let file = match self.readers.get(path) {
            Some(f) => f.clone(),
            None => {
                let f = File::open(self.root.join(path)).map_err(|e| Error::DanglingLocation {
                    location: location.to_string(),
                    reason: e.to_string(),
                })?;
                let f = Arc::new(f);
                self.readers.insert(path.clone(), f.clone());
                f
            }
        };
        Ok(DataHandle {
            location: location.clone(),
            source: Source::File {
                file,
                profiler: self.profiler.clone(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appends_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let profiler = Arc::new(Profiler::new());
        let mut store = FileStore::new(dir.path(), profiler.clone()).unwrap();
        let ds = Key::parse("a=x/y").unwrap();
        let a = store.archive(&ds, &ds, b"hello").unwrap();
        let b = store.archive(&ds, &ds, b"world!").unwrap();
        assert_eq!(a.offset(), 0);
        assert_eq!(b.offset(), 5);
        store.flush().unwrap();
        store.flush().unwrap();
        assert_eq!(profiler.ops(Category::FileSync), 1);
        let mut reader = FileStore::new(dir.path(), Arc::new(Profiler::new())).unwrap();
        assert_eq!(reader.retrieve(&b).unwrap().read_all().unwrap(), b"world!");
        assert_eq!(reader.retrieve(&a).unwrap().read_all().unwrap(), b"hello");
        // a second writer process never shares a file
        let mut other = FileStore::new(dir.path(), Arc::new(Profiler::new())).unwrap();
        let c = other.archive(&ds, &ds, b"zz").unwrap();
        assert_eq!(c.offset(), 0);
        assert_ne!(c, a);
    }

    #[test]
    fn dangling() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = FileStore::new(dir.path(), Arc::new(Profiler::new())).unwrap();
        let missing = FieldLocation::File {
            path: "nope/x.data".into(),
            offset: 0,
            length: 1,
        };
        assert!(matches!(store.retrieve(&missing), Err(Error::DanglingLocation { .. })));
        let ds = Key::parse("a=1").unwrap();
        let FieldLocation::File { path, .. } = store.archive(&ds, &ds, b"abc").unwrap() else {
            unreachable!()
        };
        let past = FieldLocation::File { path, offset: 2, length: 5 };
        assert!(matches!(
            store.retrieve(&past).unwrap().read_all(),
            Err(Error::DanglingLocation { .. })
        ));
    }
}
