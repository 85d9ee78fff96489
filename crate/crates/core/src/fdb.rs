//! The user-facing session: archive, flush, retrieve and list over a
//! (Store, Catalogue) pair.
//!
//! * `archive` returns once the store holds a copy of the data and the
//!   catalogue has recorded it; the field may or may not be visible yet.
//! * `flush` makes every field archived by this session durable and visible.
//! * Visible data is immutable; re-archiving an identifier supersedes it, and
//!   the old field stays readable until the new one is visible.
//! * Failing to find a field is not an error.

use std::sync::Arc;

use crate::backends::{
    Catalogue, FieldLocation, FileStore, KvCatalogue, KvCatalogueOptions, KvStore, Store, TocCatalogue,
};
use crate::config::{BackendKind, Config};
use crate::engine::{open_shared, ObjectEngine, Profiled};
use crate::error::{Error, Result};
use crate::profile::Profiler;
use crate::schema::{Key, Request, Schema};
use crate::wire::RemoteEngine;

/// A listed field: its full identifier (in schema order) and location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Listed {
    pub identifier: Key,
    pub location: FieldLocation,
}

pub struct Fdb {
    schema: Schema,
    store: Box<dyn Store>,
    catalogue: Box<dyn Catalogue>,
    pending: usize,
    profiler: Arc<Profiler>,
}

impl Fdb {
    /// Opens a session as described by `config`, with a fresh profiler.
    pub fn open(config: &Config, schema: Schema) -> Result<Self> {
        Self::open_profiled(config, schema, Arc::new(Profiler::new()))
    }

    pub fn open_profiled(config: &Config, schema: Schema, profiler: Arc<Profiler>) -> Result<Self> {
        config.validate()?;
        match config.backend {
            BackendKind::Kv => {
                let engine: Arc<dyn ObjectEngine> = match (&config.engine_address, &config.storage_root) {
                    (Some(addr), _) => Arc::new(RemoteEngine::connect(addr.as_str())?),
                    (None, Some(root)) => open_shared(root)?,
                    (None, None) => unreachable!("validated"),
                };
                let options = KvCatalogueOptions {
                    pool: config.pool.clone(),
                    root_container: config.root_container.clone(),
                    axis_pruning: config.axis_pruning,
                };
                Self::kv(engine, schema, options, config.oid_batch_size, profiler)
            }
            BackendKind::Toc => {
                let root = config.storage_root.as_ref().expect("validated");
                Self::toc(root, schema, profiler)
            }
        }
    }

    /// kv pair over `engine`; engine calls are timed into `profiler`.
    pub fn kv(
        engine: Arc<dyn ObjectEngine>,
        schema: Schema,
        options: KvCatalogueOptions,
        oid_batch: u64,
        profiler: Arc<Profiler>,
    ) -> Result<Self> {
        let engine: Arc<dyn ObjectEngine> = Arc::new(Profiled::new(engine, profiler.clone()));
        let store = KvStore::new(engine.clone(), &options.pool, oid_batch)?;
        let catalogue = KvCatalogue::new(engine, schema.clone(), options)?;
        Self::from_parts(schema, Box::new(store), Box::new(catalogue), profiler)
    }

    /// toc pair over the directory `root`.
    pub fn toc(root: impl AsRef<std::path::Path>, schema: Schema, profiler: Arc<Profiler>) -> Result<Self> {
        let store = FileStore::new(root.as_ref(), profiler.clone())?;
        let catalogue = TocCatalogue::new(root.as_ref(), schema.clone(), profiler.clone())?;
        Self::from_parts(schema, Box::new(store), Box::new(catalogue), profiler)
    }

    /// Assembles a session, rejecting storage created under another schema.
    pub fn from_parts(
        schema: Schema,
        store: Box<dyn Store>,
        mut catalogue: Box<dyn Catalogue>,
        profiler: Arc<Profiler>,
    ) -> Result<Self> {
        catalogue.check_schema(&schema.fingerprint())?;
        Ok(Fdb {
            schema,
            store,
            catalogue,
            pending: 0,
            profiler,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn profiler(&self) -> &Arc<Profiler> {
        &self.profiler
    }

    /// Fields archived since the last flush.
    pub fn pending(&self) -> usize {
        self.pending
    }

    pub fn archive(&mut self, identifier: &Key, data: &[u8]) -> Result<()> {
        let (dataset, collocation, element) = self.schema.split(identifier)?;
        if data.is_empty() {
            return Err(Error::EmptyPayload);
        }
        let location = self.store.archive(&dataset, &collocation, data)?;
        self.catalogue
            .archive(&dataset, &collocation, &element, &location)?;
        self.pending += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        // Data durable before the index that points at it becomes visible.
        self.store.flush()?;
        self.catalogue.flush()?;
        self.pending = 0;
        Ok(())
    }

    pub fn locate(&mut self, identifier: &Key) -> Result<Option<FieldLocation>> {
        let (dataset, collocation, element) = self.schema.split(identifier)?;
        self.catalogue.retrieve(&dataset, &collocation, &element)
    }

    pub fn retrieve(&mut self, identifier: &Key) -> Result<Option<Vec<u8>>> {
        let Some(location) = self.locate(identifier)? else {
            return Ok(None);
        };
        self.store.retrieve(&location)?.read_all().map(Some)
    }

    pub fn list(&mut self, request: &Request) -> Result<Vec<Listed>> {
        self.catalogue
            .list(request)?
            .into_iter()
            .map(|e| {
                Ok(Listed {
                    identifier: self.schema.merge(&e.dataset, &e.collocation, &e.element)?,
                    location: e.location,
                })
            })
            .collect()
    }

    /// Reads the bytes at a listed location.
    pub fn read(&mut self, location: &FieldLocation) -> Result<Vec<u8>> {
        self.store.retrieve(location)?.read_all()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{DataHandle, ListEntry};
    use std::sync::Mutex;

    /// Records every backend call, to check ordering and that bad
    /// identifiers never reach a backend.
    #[derive(Clone, Default)]
    struct Log(Arc<Mutex<Vec<&'static str>>>);

    impl Log {
        fn push(&self, s: &'static str) {
            self.0.lock().unwrap().push(s);
        }
        fn take(&self) -> Vec<&'static str> {
            std::mem::take(&mut *self.0.lock().unwrap())
        }
    }

    struct NullStore(Log);
    struct NullCat(Log);

    impl Store for NullStore {
        fn archive(&mut self, _: &Key, _: &Key, data: &[u8]) -> Result<FieldLocation> {
            self.0.push("store.archive");
            Ok(FieldLocation::File {
                path: "a/b".into(),
                offset: 0,
                length: data.len() as u64,
            })
        }
        fn flush(&mut self) -> Result<()> {
            self.0.push("store.flush");
            Ok(())
        }
        fn retrieve(&mut self, _: &FieldLocation) -> Result<DataHandle> {
            unimplemented!()
        }
    }

    impl Catalogue for NullCat {
        fn check_schema(&mut self, _: &str) -> Result<()> {
            Ok(())
        }
        fn archive(&mut self, _: &Key, _: &Key, _: &Key, _: &FieldLocation) -> Result<()> {
            self.0.push("cat.archive");
            Ok(())
        }
        fn flush(&mut self) -> Result<()> {
            self.0.push("cat.flush");
            Ok(())
        }
        fn retrieve(&mut self, _: &Key, _: &Key, _: &Key) -> Result<Option<FieldLocation>> {
            self.0.push("cat.retrieve");
            Ok(None)
        }
        fn list(&mut self, _: &Request) -> Result<Vec<ListEntry>> {
            Ok(Vec::new())
        }
    }

    #[test]
    fn call_order_and_pending() {
        let log = Log::default();
        let schema = Schema::parse("dataset: a\ncollocation: b\nelement: c").unwrap();
        let mut fdb = Fdb::from_parts(
            schema,
            Box::new(NullStore(log.clone())),
            Box::new(NullCat(log.clone())),
            Arc::new(Profiler::new()),
        )
        .unwrap();
        let id = Key::parse("a=1,b=2,c=3").unwrap();
        fdb.archive(&id, b"x").unwrap();
        fdb.archive(&id, b"y").unwrap();
        assert_eq!(fdb.pending(), 2);
        assert_eq!(log.take(), ["store.archive", "cat.archive", "store.archive", "cat.archive"]);
        fdb.flush().unwrap();
        assert_eq!(fdb.pending(), 0);
        assert_eq!(log.take(), ["store.flush", "cat.flush"]);

        assert!(matches!(fdb.archive(&Key::parse("a=1,b=2").unwrap(), b"x"), Err(Error::Schema(_))));
        assert!(matches!(fdb.archive(&id, b""), Err(Error::EmptyPayload)));
        assert!(log.take().is_empty());
        assert_eq!(fdb.pending(), 0);

        assert_eq!(fdb.retrieve(&id).unwrap(), None);
        assert_eq!(log.take(), ["cat.retrieve"]);
    }
}
