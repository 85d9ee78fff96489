use std::collections::HashMap;
use std::sync::Arc;

use super::{DataHandle, FieldLocation, Source, Store};
use crate::engine::{ContainerHandle, EngineError, ObjectEngine, Oid, PoolHandle};
use crate::error::{Error, Result};
use crate::schema::Key;

pub const DEFAULT_OID_BATCH: u64 = 64;

/// One array object per field, in a container per dataset.
pub struct KvStore {
    engine: Arc<dyn ObjectEngine>,
    pool: PoolHandle,
    batch: u64,
    containers: HashMap<String, ContainerHandle>,
    /// Pre-allocated OIDs per container: (next, remaining).
    oids: HashMap<String, (Oid, u64)>,
}

impl KvStore {
    pub fn new(engine: Arc<dyn ObjectEngine>, pool: &str, oid_batch: u64) -> Result<Self> {
        if oid_batch == 0 {
            return Err(Error::Config("oid batch size must be positive".into()));
        }
        let pool = engine.pool_connect(pool, true)?;
        Ok(KvStore {
            engine,
            pool,
            batch: oid_batch,
            containers: HashMap::new(),
            oids: HashMap::new(),
        })
    }

    fn container(&mut self, label: &str, create: bool) -> Result<ContainerHandle> {
        if let Some(h) = self.containers.get(label) {
            return Ok(h.clone());
        }
        let h = self.engine.cont_open(&self.pool, label, create)?;
        self.containers.insert(label.to_string(), h.clone());
        Ok(h)
    }

    fn next_oid(&mut self, label: &str, cont: &ContainerHandle) -> Result<Oid> {
        let slot = match self.oids.get_mut(label) {
            Some(slot) if slot.1 > 0 => slot,
            _ => {
                let first = self.engine.alloc_oids(cont, self.batch)?;
                self.oids.insert(label.to_string(), (first, self.batch));
                self.oids.get_mut(label).unwrap()
            }
        };
        let oid = slot.0;
        slot.1 -= 1;
        if slot.1 > 0 {
            slot.0 = oid.offset(1).ok_or(EngineError::OidsExhausted)?;
        }
        Ok(oid)
    }
}

impl Store for KvStore {
    fn archive(&mut self, dataset: &Key, _collocation: &Key, data: &[u8]) -> Result<FieldLocation> {
        if data.is_empty() {
            return Err(Error::EmptyPayload);
        }
        let label = dataset.stringify();
        let cont = self.container(&label, true)?;
        let oid = self.next_oid(&label, &cont)?;
        self.engine.array_write(&cont, oid, 0, data)?;
        Ok(FieldLocation::Kv {
            pool: self.pool.pool.clone(),
            container: label,
            oid,
            offset: 0,
            length: data.len() as u64,
        })
    }

    /// Array writes are durable when they return.
    fn flush(&mut self) -> Result<()> {
        Ok(())
    }

    fn retrieve(&mut self, location: &FieldLocation) -> Result<DataHandle> {
        let dangling = |reason: String| Error::DanglingLocation {
            location: location.to_string(),
            reason,
        };
        let FieldLocation::Kv { pool, container, oid, .. } = location else {
            return Err(dangling("not an object-store location".into()));
        };
        if *pool != self.pool.pool {
            return Err(dangling(format!("store is connected to pool `{}`", self.pool.pool)));
        }
        let cont = match self.container(container, false) {
            Err(Error::Engine(EngineError::ContainerNotFound(_))) => {
                return Err(dangling("container does not exist".into()))
            }
            other => other?,
        };
        Ok(DataHandle {
            location: location.clone(),
            source: Source::Array {
                engine: self.engine.clone(),
                cont,
                oid: *oid,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{LocalEngine, Profiled};
    use crate::profile::{Category, Profiler};

    fn setup(batch: u64) -> (tempfile::TempDir, KvStore, Arc<Profiler>) {
        let dir = tempfile::tempdir().unwrap();
        let profiler = Arc::new(Profiler::new());
        let engine = Arc::new(LocalEngine::open(dir.path()).unwrap());
        let engine = Arc::new(Profiled::new(engine, profiler.clone()));
        (dir, KvStore::new(engine, "default", batch).unwrap(), profiler)
    }

    #[test]
    fn archive_layout_and_round_trip() {
        let (_d, mut store, _) = setup(64);
        let ds = Key::parse("class=od,stream=oper,expver=0001,date=20231201,time=1200").unwrap();
        let coll = Key::parse("type=ef,levtype=sfc,number=13,levelist=1").unwrap();
        let data = vec![7u8; 1 << 20];
        let loc = store.archive(&ds, &coll, &data).unwrap();
        match &loc {
            FieldLocation::Kv { container, offset, length, .. } => {
                assert_eq!(container, "od:oper:0001:20231201:1200");
                assert_eq!(*offset, 0);
                assert_eq!(*length, 1 << 20);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(store.retrieve(&loc).unwrap().read_all().unwrap(), data);
        let again = store.archive(&ds, &coll, &data).unwrap();
        assert_ne!(again, loc);
    }

    #[test]
    fn oid_batches_and_no_size_query() {
        let (_d, mut store, profiler) = setup(4);
        let ds = Key::parse("a=1").unwrap();
        let coll = Key::parse("b=1").unwrap();
        let locs: Vec<_> = (0..10).map(|i| store.archive(&ds, &coll, &[i as u8 + 1]).unwrap()).collect();
        assert_eq!(profiler.ops(Category::OidAlloc), 3);
        let before = profiler.snapshot();
        store.flush().unwrap();
        assert_eq!(profiler.snapshot().since(&before).total_ops(), 0);
        for (i, loc) in locs.iter().enumerate() {
            assert_eq!(store.retrieve(loc).unwrap().read_all().unwrap(), vec![i as u8 + 1]);
        }
        assert_eq!(profiler.ops(Category::Other), 0, "array size must never be queried");
    }

    #[test]
    fn dangling_locations() {
        let (_d, mut store, _) = setup(4);
        let stale = FieldLocation::Kv {
            pool: "default".into(),
            container: "nope".into(),
            oid: Oid::new(0, 1),
            offset: 0,
            length: 3,
        };
        assert!(matches!(store.retrieve(&stale), Err(Error::DanglingLocation { .. })));
        let ds = Key::parse("a=1").unwrap();
        let loc = store.archive(&ds, &ds, b"abc").unwrap();
        let FieldLocation::Kv { pool, container, oid, .. } = loc else { unreachable!() };
        let long = FieldLocation::Kv { pool, container, oid, offset: 0, length: 9 };
        assert!(store.retrieve(&long).unwrap().read_all().is_err());
        assert!(matches!(store.archive(&ds, &ds, b""), Err(Error::EmptyPayload)));
    }
}
