//! Catalogue as a tree of key-value objects.
//!
//! ```text
//! root container, KV 0.0:     <dataset string>     -> dataset container label
//!                             "=schema"            -> schema fingerprint
//! dataset container, KV 0.0:  <collocation string> -> index KV oid ("hi.lo")
//! index KV (oid b):           <element string>     -> field location URI
//! axis KV  (oid b+1+i):       <value of element keyword i> -> ""
//! ```
//!
//! The index KV and its axis KVs are allocated as one contiguous OID block, so
//! axis addresses follow from the index OID. A racing creator of the same
//! collocation loses the conditional insert and adopts the winner's index.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use super::{sort_entries, Catalogue, FieldLocation, ListEntry};
use crate::engine::{ContainerHandle, EngineError, Insert, ObjectEngine, Oid, PoolHandle};
use crate::error::{Error, Result};
use crate::schema::{Key, Level, Schema};
use crate::Request;

pub const DEFAULT_POOL: &str = "default";
pub const DEFAULT_ROOT_CONTAINER: &str = "root";
const SCHEMA_KEY: &str = "=schema";

#[derive(Debug, Clone)]
pub struct KvCatalogueOptions {
    pub pool: String,
    pub root_container: String,
    /// Consult axis KVs to skip indexes during `list`.
    pub axis_pruning: bool,
}

impl Default for KvCatalogueOptions {
    fn default() -> Self {
        KvCatalogueOptions {
            pool: DEFAULT_POOL.into(),
            root_container: DEFAULT_ROOT_CONTAINER.into(),
            axis_pruning: true,
        }
    }
}

struct Index {
    oid: Oid,
    /// Values known to be present in each axis, by element keyword position.
    axes: Vec<BTreeSet<String>>,
}

pub struct KvCatalogue {
    engine: Arc<dyn ObjectEngine>,
    schema: Schema,
    options: KvCatalogueOptions,
    pool: PoolHandle,
    root: Option<ContainerHandle>,
    datasets: HashMap<String, ContainerHandle>,
    indexes: HashMap<(String, String), Index>,
}

fn parse_oid(bytes: &[u8]) -> Result<Oid> {
    std::str::from_utf8(bytes)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::corrupt("index reference", String::from_utf8_lossy(bytes)))
}

fn parse_location(bytes: &[u8]) -> Result<FieldLocation> {
    std::str::from_utf8(bytes)
        .map_err(|_| Error::InvalidLocation(String::from_utf8_lossy(bytes).into_owned()))?
        .parse()
}

impl KvCatalogue {
    pub fn new(engine: Arc<dyn ObjectEngine>, schema: Schema, options: KvCatalogueOptions) -> Result<Self> {
        let pool = engine.pool_connect(&options.pool, true)?;
        Ok(KvCatalogue {
            engine,
            schema,
            options,
            pool,
            root: None,
            datasets: HashMap::new(),
            indexes: HashMap::new(),
        })
    }

    fn root(&mut self) -> Result<ContainerHandle> {
        if let Some(h) = &self.root {
            return Ok(h.clone());
        }
        let h = self
            .engine
            .cont_open(&self.pool, &self.options.root_container, true)?;
        self.root = Some(h.clone());
        Ok(h)
    }

    /// Dataset container, registering it in the root KV when `create` is set.
    fn dataset(&mut self, ds: &str, create: bool) -> Result<Option<ContainerHandle>> {
        if let Some(h) = self.datasets.get(ds) {
            return Ok(Some(h.clone()));
        }
        let root = self.root()?;
        let h = match self.engine.kv_get(&root, Oid::ENTRY, ds)? {
            Some(v) => {
                let label = String::from_utf8(v).map_err(|_| Error::corrupt("root key-value", ds))?;
                self.engine.cont_open(&self.pool, &label, false)?
            }
            None if create => {
                // Container first, so the root entry never points at nothing.
                let h = self.engine.cont_open(&self.pool, ds, true)?;
                self.engine.kv_put(&root, Oid::ENTRY, ds, ds.as_bytes())?;
                h
            }
            None => return Ok(None),
        };
        self.datasets.insert(ds.to_string(), h.clone());
        Ok(Some(h))
    }

    fn index_oid(&mut self, cont: &ContainerHandle, ds: &str, coll: &str, create: bool) -> Result<Option<Oid>> {
        let key = (ds.to_string(), coll.to_string());
        if let Some(ix) = self.indexes.get(&key) {
            return Ok(Some(ix.oid));
        }
        let oid = match self.engine.kv_get(cont, Oid::ENTRY, coll)? {
            Some(v) => parse_oid(&v)?,
            None if create => {
                let naxes = self.schema.element_keywords().len() as u64;
                let base = self.engine.alloc_oids(cont, 1 + naxes)?;
                match self
                    .engine
                    .kv_insert(cont, Oid::ENTRY, coll, base.to_string().as_bytes())?
                {
                    Insert::Inserted(_) => base,
                    Insert::Exists(v) => parse_oid(&v)?,
                }
            }
            None => return Ok(None),
        };
        let naxes = self.schema.element_keywords().len();
        self.indexes.insert(
            key,
            Index {
                oid,
                axes: vec![BTreeSet::new(); naxes],
            },
        );
        Ok(Some(oid))
    }

    fn axis_oid(index: Oid, i: usize) -> Result<Oid> {
        index
            .offset(1 + i as u64)
            .ok_or_else(|| EngineError::OidsExhausted.into())
    }

    /// Whether index (ds, coll) may hold an entry matching `request`. The
    /// cached axes are refreshed from the engine before ruling an index out.
    fn may_match(&mut self, cont: &ContainerHandle, ds: &str, coll: &str, request: &Request) -> Result<bool> {
        let key = (ds.to_string(), coll.to_string());
        let keywords = self.schema.element_keywords().to_vec();
        for (i, kw) in keywords.iter().enumerate() {
            if request.span(kw).is_none() {
                continue;
            }
            let ix = self.indexes.get(&key).expect("index resolved before pruning");
            if request.admits_any(kw, ix.axes[i].iter().map(String::as_str)) {
                continue;
            }
            let fresh = self.engine.kv_list(cont, Self::axis_oid(ix.oid, i)?)?;
            let ix = self.indexes.get_mut(&key).unwrap();
            ix.axes[i].extend(fresh);
            if !request.admits_any(kw, ix.axes[i].iter().map(String::as_str)) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn list_keys(&self, cont: &ContainerHandle, oid: Oid) -> Result<Vec<String>> {
        let mut keys = self.engine.kv_list(cont, oid)?;
        keys.retain(|k| !k.starts_with('='));
        keys.sort();
        Ok(keys)
    }
}

impl Catalogue for KvCatalogue {
    fn check_schema(&mut self, fingerprint: &str) -> Result<()> {
        let root = self.root()?;
        match self
            .engine
            .kv_insert(&root, Oid::ENTRY, SCHEMA_KEY, fingerprint.as_bytes())?
        {
            Insert::Inserted(_) => Ok(()),
            Insert::Exists(v) if v == fingerprint.as_bytes() => Ok(()),
            Insert::Exists(v) => Err(Error::SchemaMismatch {
                stored: String::from_utf8_lossy(&v).into_owned(),
                session: fingerprint.to_string(),
            }),
        }
    }

    fn archive(&mut self, dataset: &Key, collocation: &Key, element: &Key, location: &FieldLocation) -> Result<()> {
        let (ds, coll) = (dataset.stringify(), collocation.stringify());
        let cont = self.dataset(&ds, true)?.expect("created on demand");
        let oid = self.index_oid(&cont, &ds, &coll, true)?.expect("created on demand");
        // Axes before the index entry: an entry is never visible without its axis values.
        for (i, value) in element.values().enumerate() {
            let known = &self.indexes[&(ds.clone(), coll.clone())].axes[i];
            if known.contains(value) {
                continue;
            }
            self.engine.kv_put(&cont, Self::axis_oid(oid, i)?, value, b"")?;
            self.indexes
                .get_mut(&(ds.clone(), coll.clone()))
                .unwrap()
                .axes[i]
                .insert(value.to_string());
        }
        self.engine
            .kv_put(&cont, oid, &element.stringify(), location.to_string().as_bytes())?;
        Ok(())
    }

    /// Index entries are visible when `archive` returns.
    fn flush(&mut self) -> Result<()> {
        Ok(())
    }

    fn retrieve(&mut self, dataset: &Key, collocation: &Key, element: &Key) -> Result<Option<FieldLocation>> {
        let (ds, coll) = (dataset.stringify(), collocation.stringify());
        let Some(cont) = self.dataset(&ds, false)? else {
            return Ok(None);
        };
        let Some(oid) = self.index_oid(&cont, &ds, &coll, false)? else {
            return Ok(None);
        };
        self.engine
            .kv_get(&cont, oid, &element.stringify())?
            .map(|v| parse_location(&v))
            .transpose()
    }

    fn list(&mut self, request: &Request) -> Result<Vec<ListEntry>> {
        let root = self.root()?;
        let mut out = Vec::new();
        for ds in self.list_keys(&root, Oid::ENTRY)? {
            let dataset = Key::from_stringified(Level::Dataset, self.schema.dataset_keywords(), &ds)?;
            if !request.matches(&dataset) {
                continue;
            }
            let Some(cont) = self.dataset(&ds, false)? else {
                continue;
            };
            for coll in self.list_keys(&cont, Oid::ENTRY)? {
                let collocation =
                    Key::from_stringified(Level::Collocation, self.schema.collocation_keywords(), &coll)?;
                if !request.matches(&collocation) {
                    continue;
                }
                let Some(oid) = self.index_oid(&cont, &ds, &coll, false)? else {
                    continue;
                };
                if self.options.axis_pruning && !self.may_match(&cont, &ds, &coll, request)? {
                    continue;
                }
                for elem in self.list_keys(&cont, oid)? {
                    let element = Key::from_stringified(Level::Element, self.schema.element_keywords(), &elem)?;
                    if !request.matches(&element) {
                        continue;
                    }
                    // Listed keys are never removed, so the value is present.
                    let Some(v) = self.engine.kv_get(&cont, oid, &elem)? else {
                        continue;
                    };
                    out.push(ListEntry {
                        dataset: dataset.clone(),
                        collocation: collocation.clone(),
                        element,
                        location: parse_location(&v)?,
                    });
                }
            }
        }
        sort_entries(&mut out);
        Ok(out)
    }
}
