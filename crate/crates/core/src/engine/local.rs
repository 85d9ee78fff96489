use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Read;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, OnceLock, RwLock, Weak};

use super::log::{CommitRecord, Decoded, RecordBody, ValueExtent};
use super::{
    CommitSeq, ContainerHandle, EngineError, EngineResult, Insert, ObjectEngine, Oid, PoolHandle,
    MAX_KEY_LEN, OID_SPACE,
};
use crate::pathenc::encode_component;

const VALUES_LOG: &str = "values.log";
const COMMITS_LOG: &str = "commits.log";
const LOCK_FILE: &str = "engine.lock";

#[derive(Debug, Clone, Copy)]
pub struct EngineOptions {
    /// fdatasync value and commit logs before a write returns.
    pub sync: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { sync: true }
    }
}

/// Engine over a storage root laid out as `<root>/<pool>/<container>/{values,commits}.log`.
///
/// A storage root is owned by one `LocalEngine` at a time (enforced with a
/// file lock); share it across threads with `Arc`, or across processes by
/// serving it over the wire protocol.
pub struct LocalEngine {
    root: PathBuf,
    _lock: File,
    options: EngineOptions,
    pools: Mutex<HashMap<String, Arc<Pool>>>,
    pool_handles: RwLock<HashMap<u64, Arc<Pool>>>,
    cont_handles: RwLock<HashMap<u64, Arc<Container>>>,
    next_token: AtomicU64,
}

struct Pool {
    name: String,
    dir: PathBuf,
    containers: Mutex<HashMap<String, Arc<Container>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl LocalEngine {
    pub fn open(root: impl AsRef<Path>) -> EngineResult<Self> {
        Self::open_with(root, EngineOptions::default())
    }

    pub fn open_with(root: impl AsRef<Path>, options: EngineOptions) -> EngineResult<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let lock_file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(root.join(LOCK_FILE))?;
        lock_file.try_lock().map_err(|_| {
            EngineError::Storage(format!("storage root {} is in use by another engine", root.display()))
        })?;
        Ok(LocalEngine {
            root,
            _lock: lock_file,
            options,
            pools: Mutex::new(HashMap::new()),
            pool_handles: RwLock::new(HashMap::new()),
            cont_handles: RwLock::new(HashMap::new()),
            next_token: AtomicU64::new(1),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn token(&self) -> u64 {
        self.next_token.fetch_add(1, Ordering::Relaxed)
    }

    fn container(&self, h: &ContainerHandle) -> EngineResult<Arc<Container>> {
        self.cont_handles
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(&h.token)
            .cloned()
            .ok_or(EngineError::InvalidHandle(h.token))
    }

    /// End of the container's value log. Committed extents all lie below it and
    /// it only ever grows.
    pub fn value_log_watermark(&self, h: &ContainerHandle) -> EngineResult<u64> {
        Ok(self.container(h)?.values_end.load(Ordering::SeqCst))
    }

    /// Highest committed sequence number of the container.
    pub fn last_commit(&self, h: &ContainerHandle) -> EngineResult<CommitSeq> {
        Ok(lock(&self.container(h)?.log).last_seq)
    }

    /// On-disk directory of a container.
    pub fn container_dir(&self, pool: &str, label: &str) -> PathBuf {
        self.root
            .join(encode_component(pool))
            .join(encode_component(label))
    }
}

static SHARED: OnceLock<Mutex<HashMap<PathBuf, Weak<LocalEngine>>>> = OnceLock::new();

/// Process-wide engine for `root`, opened on first use and shared afterwards.
pub fn open_shared(root: impl AsRef<Path>) -> EngineResult<Arc<LocalEngine>> {
    fs::create_dir_all(root.as_ref())?;
    let key = fs::canonicalize(root.as_ref())?;
    let mut map = lock(SHARED.get_or_init(Default::default));
    if let Some(engine) = map.get(&key).and_then(Weak::upgrade) {
        return Ok(engine);
    }
    let engine = Arc::new(LocalEngine::open(&key)?);
    map.insert(key, Arc::downgrade(&engine));
    Ok(engine)
}

impl ObjectEngine for LocalEngine {
    fn pool_connect(&self, name: &str, create: bool) -> EngineResult<PoolHandle> {
        if name.is_empty() {
            return Err(EngineError::InvalidArgument("empty pool name".into()));
        }
        let pool = {
            let mut pools = lock(&self.pools);
            match pools.get(name) {
                Some(p) => p.clone(),
                None => {
                    let dir = self.root.join(encode_component(name));
                    if !dir.is_dir() {
                        if !create {
                            return Err(EngineError::UnknownPool(name.to_string()));
                        }
                        fs::create_dir_all(&dir)?;
                        sync_dir(&self.root, self.options.sync)?;
                    }
                    let p = Arc::new(Pool {
                        name: name.to_string(),
                        dir,
                        containers: Mutex::new(HashMap::new()),
                    });
                    pools.insert(name.to_string(), p.clone());
                    p
                }
            }
        };
        let token = self.token();
        self.pool_handles
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(token, pool);
        Ok(PoolHandle {
            pool: name.to_string(),
            token,
        })
    }

    fn cont_open(&self, pool: &PoolHandle, label: &str, create: bool) -> EngineResult<ContainerHandle> {
        if label.is_empty() {
            return Err(EngineError::InvalidArgument("empty container label".into()));
        }
        let p = self
            .pool_handles
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(&pool.token)
            .cloned()
            .ok_or(EngineError::InvalidHandle(pool.token))?;
        let cont = {
            let mut conts = lock(&p.containers);
            match conts.get(label) {
                Some(c) => c.clone(),
                None => {
                    let dir = p.dir.join(encode_component(label));
                    let c = if dir.join(COMMITS_LOG).is_file() {
                        Container::open(label, dir, self.options)?
                    } else if create {
                        Container::create(label, &p.dir, dir, self.options)?
                    } else {
                        return Err(EngineError::ContainerNotFound(label.to_string()));
                    };
                    let c = Arc::new(c);
                    conts.insert(label.to_string(), c.clone());
                    c
                }
            }
        };
        let token = self.token();
        self.cont_handles
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(token, cont);
        Ok(ContainerHandle {
            pool: p.name.clone(),
            label: label.to_string(),
            token,
        })
    }

    fn cont_close(&self, cont: &ContainerHandle) -> EngineResult<()> {
        self.cont_handles
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .remove(&cont.token)
            .map(|_| ())
            .ok_or(EngineError::InvalidHandle(cont.token))
    }

    fn alloc_oids(&self, cont: &ContainerHandle, count: u64) -> EngineResult<Oid> {
        if count == 0 {
            return Err(EngineError::InvalidArgument("alloc_oids count must be at least 1".into()));
        }
        self.container(cont)?.alloc_oids(count)
    }

    fn kv_put(&self, cont: &ContainerHandle, oid: Oid, key: &str, value: &[u8]) -> EngineResult<CommitSeq> {
        check_key(key)?;
        self.container(cont)?.kv_put(oid, key, value)
    }

    fn kv_insert(&self, cont: &ContainerHandle, oid: Oid, key: &str, value: &[u8]) -> EngineResult<Insert> {
        check_key(key)?;
        self.container(cont)?.kv_insert(oid, key, value)
    }

    fn kv_get(&self, cont: &ContainerHandle, oid: Oid, key: &str) -> EngineResult<Option<Vec<u8>>> {
        self.container(cont)?.kv_get(oid, key)
    }

    fn kv_list(&self, cont: &ContainerHandle, oid: Oid) -> EngineResult<Vec<String>> {
        self.container(cont)?.kv_list(oid)
    }

    fn array_write(&self, cont: &ContainerHandle, oid: Oid, offset: u64, data: &[u8]) -> EngineResult<CommitSeq> {
        if data.is_empty() {
            return Err(EngineError::InvalidArgument("empty array write".into()));
        }
        offset
            .checked_add(data.len() as u64)
            .ok_or_else(|| EngineError::InvalidArgument("array range overflows".into()))?;
        self.container(cont)?.array_write(oid, offset, data)
    }

    fn array_read(&self, cont: &ContainerHandle, oid: Oid, offset: u64, len: u64) -> EngineResult<Vec<u8>> {
        self.container(cont)?.array_read(oid, offset, len)
    }

    fn array_get_size(&self, cont: &ContainerHandle, oid: Oid) -> EngineResult<u64> {
        self.container(cont)?.array_size(oid)
    }
}

fn check_key(key: &str) -> EngineResult<()> {
    if key.is_empty() {
        return Err(EngineError::InvalidArgument("empty key".into()));
    }
    if key.len() > MAX_KEY_LEN {
        return Err(EngineError::KeyTooLong(key.len()));
    }
    Ok(())
}

fn sync_dir(dir: &Path, enabled: bool) -> EngineResult<()> {
    if enabled {
        File::open(dir)?.sync_all()?;
    }
    Ok(())
}

/// Group commit for fdatasync: a caller whose write completed before some
/// sync started can piggy-back on that sync instead of issuing its own.
#[derive(Default)]
struct SyncGate {
    started: AtomicU64,
    /// Index of the most recent completed sync; guarded for serialisation.
    done: Mutex<u64>,
}

impl SyncGate {
    fn sync(&self, file: &File) -> EngineResult<()> {
        let ticket = self.started.load(Ordering::SeqCst);
        let mut done = lock(&self.done);
        if *done > ticket {
            return Ok(());
        }
        let me = self.started.fetch_add(1, Ordering::SeqCst) + 1;
        file.sync_data()?;
        *done = me;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Kv,
    Array,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Kv => "key-value object",
            Kind::Array => "array",
        }
    }
}

/// Commit-order state, mutated only while holding the log mutex.
struct CommitLog {
    file: File,
    len: u64,
    last_seq: u64,
    next_oid: u128,
    kinds: HashMap<Oid, Kind>,
    poisoned: bool,
}

impl CommitLog {
    fn check_object(&self, oid: Oid, kind: Kind) -> EngineResult<()> {
        if oid.is_entry() {
            if kind != Kind::Kv {
                return Err(EngineError::WrongObjectType {
                    oid,
                    expected: kind.name().into(),
                });
            }
            return Ok(());
        }
        if oid.as_u128() >= self.next_oid {
            return Err(EngineError::InvalidArgument(format!("oid {oid} was never allocated")));
        }
        match self.kinds.get(&oid) {
            Some(k) if *k != kind => Err(EngineError::WrongObjectType {
                oid,
                expected: kind.name().into(),
            }),
            _ => Ok(()),
        }
    }

    /// Appends one record with the next sequence number.
    fn append(&mut self, body: RecordBody) -> EngineResult<CommitSeq> {
        if self.poisoned {
            return Err(EngineError::Storage("commit log is unusable after an earlier write failure".into()));
        }
        let seq = self.last_seq + 1;
        let bytes = CommitRecord { seq, body }.encode()?;
        if let Err(e) = self.file.write_all_at(&bytes, self.len) {
            if self.file.set_len(self.len).is_err() {
                self.poisoned = true;
            }
            return Err(e.into());
        }
        self.len += bytes.len() as u64;
        self.last_seq = seq;
        Ok(seq)
    }

    fn apply_meta(&mut self, body: &RecordBody) {
        match body {
            RecordBody::KvPut { oid, .. } => {
                self.kinds.entry(*oid).or_insert(Kind::Kv);
            }
            RecordBody::ArrayWrite { oid, .. } => {
                self.kinds.entry(*oid).or_insert(Kind::Array);
            }
            RecordBody::AllocOids { first, count } => {
                self.next_oid = self.next_oid.max(first.as_u128() + *count as u128);
            }
            RecordBody::Init { .. } => {}
        }
    }
}

#[derive(Clone, Copy)]
struct Version {
    extent: ValueExtent,
    seq: CommitSeq,
}

#[derive(Clone, Copy)]
struct ArrayExtent {
    offset: u64,
    version: Version,
}

impl ArrayExtent {
    fn end(&self) -> u64 {
        self.offset + self.version.extent.len
    }
}

#[derive(Default)]
struct ArrayObject {
    size: u64,
    /// Sorted by commit sequence; later extents shadow earlier ones.
    extents: Vec<ArrayExtent>,
}

enum Object {
    Kv(HashMap<String, Version>),
    Array(ArrayObject),
}

#[derive(Default)]
struct State {
    objects: HashMap<Oid, Object>,
}

impl State {
    fn publish(&mut self, body: &RecordBody, seq: CommitSeq) {
        match body {
            RecordBody::KvPut { oid, key, extent } => {
                if let Object::Kv(map) = self
                    .objects
                    .entry(*oid)
                    .or_insert_with(|| Object::Kv(HashMap::new()))
                {
                    let v = Version { extent: *extent, seq };
                    match map.get_mut(key) {
                        Some(cur) if cur.seq > seq => {}
                        Some(cur) => *cur = v,
                        None => {
                            map.insert(key.clone(), v);
                        }
                    }
                }
            }
            RecordBody::ArrayWrite { oid, offset, extent } => {
                if let Object::Array(arr) = self
                    .objects
                    .entry(*oid)
                    .or_insert_with(|| Object::Array(ArrayObject::default()))
                {
                    let new = ArrayExtent {
                        offset: *offset,
                        version: Version { extent: *extent, seq },
                    };
                    arr.size = arr.size.max(new.end());
                    // drop older extents fully shadowed by this one
                    arr.extents.retain(|e| {
                        !(e.version.seq < seq && e.offset >= new.offset && e.end() <= new.end())
                    });
                    let pos = arr.extents.partition_point(|e| e.version.seq < seq);
                    arr.extents.insert(pos, new);
                }
            }
            RecordBody::Init { .. } | RecordBody::AllocOids { .. } => {}
        }
    }
}

struct Container {
    values: File,
    values_end: AtomicU64,
    values_gate: SyncGate,
    log: Mutex<CommitLog>,
    /// Second descriptor of the commit log so syncs need not hold the log mutex.
    log_sync: File,
    log_gate: SyncGate,
    state: RwLock<State>,
    sync: bool,
}

impl Container {
    fn create(label: &str, pool_dir: &Path, dir: PathBuf, options: EngineOptions) -> EngineResult<Self> {
        fs::create_dir_all(&dir)?;
        let values = open_rw(&dir.join(VALUES_LOG))?;
        // The commit log appears under its final name only once it holds the
        // init record, so a crash mid-creation leaves no half-made container.
        let tmp = dir.join(format!("{COMMITS_LOG}.tmp"));
        let log_file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(&tmp)?;
        let mut log = CommitLog {
            file: log_file,
            len: 0,
            last_seq: 0,
            next_oid: 1,
            kinds: HashMap::new(),
            poisoned: false,
        };
        let bytes = CommitRecord {
            seq: 0,
            body: RecordBody::Init {
                label: label.to_string(),
            },
        }
        .encode()?;
        log.file.write_all_at(&bytes, 0)?;
        log.len = bytes.len() as u64;
        if options.sync {
            log.file.sync_all()?;
            values.sync_all()?;
        }
        fs::rename(&tmp, dir.join(COMMITS_LOG))?;
        sync_dir(&dir, options.sync)?;
        sync_dir(pool_dir, options.sync)?;
        Ok(Container {
            values,
            values_end: AtomicU64::new(0),
            values_gate: SyncGate::default(),
            log_sync: log.file.try_clone()?,
            log: Mutex::new(log),
            log_gate: SyncGate::default(),
            state: RwLock::new(State::default()),
            sync: options.sync,
        })
    }

    /// Rebuilds the index from the commit log, discarding any torn or corrupt tail.
    fn open(label: &str, dir: PathBuf, options: EngineOptions) -> EngineResult<Self> {
        let values = open_rw(&dir.join(VALUES_LOG))?;
        let values_len = values.metadata()?.len();
        let mut log_file = open_rw(&dir.join(COMMITS_LOG))?;
        let mut bytes = Vec::new();
        log_file.read_to_end(&mut bytes)?;

        let mut log = CommitLog {
            file: log_file,
            len: 0,
            last_seq: 0,
            next_oid: 1,
            kinds: HashMap::new(),
            poisoned: false,
        };
        let mut state = State::default();
        let mut pos = 0usize;
        let mut first = true;
        while let Decoded::Record(rec, used) = CommitRecord::decode(&bytes[pos..]) {
            if first {
                match &rec.body {
                    RecordBody::Init { label: l } if l == label && rec.seq == 0 => {}
                    _ => {
                        return Err(EngineError::Corrupt(format!(
                            "container {label}: commit log does not start with its init record"
                        )))
                    }
                }
                first = false;
                pos += used;
                continue;
            }
            if rec.seq != log.last_seq + 1 {
                break;
            }
            let extent_ok = match &rec.body {
                RecordBody::KvPut { extent, .. } | RecordBody::ArrayWrite { extent, .. } => {
                    extent.end() <= values_len
                }
                RecordBody::AllocOids { first, count } => first.as_u128() + (*count as u128) <= OID_SPACE,
                RecordBody::Init { .. } => false,
            };
            if !extent_ok {
                break;
            }
            let kind_ok = match &rec.body {
                RecordBody::KvPut { oid, .. } => log.check_object(*oid, Kind::Kv).is_ok(),
                RecordBody::ArrayWrite { oid, .. } => log.check_object(*oid, Kind::Array).is_ok(),
                _ => true,
            };
            if !kind_ok {
                break;
            }
            log.apply_meta(&rec.body);
            state.publish(&rec.body, rec.seq);
            log.last_seq = rec.seq;
            pos += used;
        }
        if first {
            return Err(EngineError::Corrupt(format!("container {label}: missing init record")));
        }
        if (pos as u64) < bytes.len() as u64 {
            log.file.set_len(pos as u64)?;
            if options.sync {
                log.file.sync_all()?;
            }
        }
        log.len = pos as u64;
        Ok(Container {
            values,
            values_end: AtomicU64::new(values_len),
            values_gate: SyncGate::default(),
            log_sync: log.file.try_clone()?,
            log: Mutex::new(log),
            log_gate: SyncGate::default(),
            state: RwLock::new(state),
            sync: options.sync,
        })
    }

    /// Writes `data` into a fresh region of the value log and makes it durable.
    fn append_value(&self, data: &[u8]) -> EngineResult<ValueExtent> {
        let len = data.len() as u64;
        let log_offset = self.values_end.fetch_add(len, Ordering::SeqCst);
        if !data.is_empty() {
            self.values.write_all_at(data, log_offset)?;
            if self.sync {
                self.values_gate.sync(&self.values)?;
            }
        }
        Ok(ValueExtent {
            log_offset,
            len,
            crc: crc32fast::hash(data),
        })
    }

    fn sync_log(&self) -> EngineResult<()> {
        if self.sync {
            self.log_gate.sync(&self.log_sync)?;
        }
        Ok(())
    }

    fn commit(&self, body: RecordBody, kind: Option<(Oid, Kind)>) -> EngineResult<CommitSeq> {
        let seq = {
            let mut log = lock(&self.log);
            if let Some((oid, kind)) = kind {
                log.check_object(oid, kind)?;
            }
            let seq = log.append(body.clone())?;
            log.apply_meta(&body);
            seq
        };
        self.sync_log()?;
        self.state
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .publish(&body, seq);
        Ok(seq)
    }

    fn alloc_oids(&self, count: u64) -> EngineResult<Oid> {
        let first = {
            let mut log = lock(&self.log);
            let first = log.next_oid;
            if first + count as u128 > OID_SPACE {
                return Err(EngineError::OidsExhausted);
            }
            let body = RecordBody::AllocOids {
                first: Oid::from_u128(first),
                count,
            };
            log.append(body.clone())?;
            log.apply_meta(&body);
            Oid::from_u128(first)
        };
        self.sync_log()?;
        Ok(first)
    }

    fn kv_put(&self, oid: Oid, key: &str, value: &[u8]) -> EngineResult<CommitSeq> {
        lock(&self.log).check_object(oid, Kind::Kv)?;
        let extent = self.append_value(value)?;
        self.commit(
            RecordBody::KvPut {
                oid,
                key: key.to_string(),
                extent,
            },
            Some((oid, Kind::Kv)),
        )
    }

    fn kv_insert(&self, oid: Oid, key: &str, value: &[u8]) -> EngineResult<Insert> {
        lock(&self.log).check_object(oid, Kind::Kv)?;
        if let Some(existing) = self.kv_get(oid, key)? {
            return Ok(Insert::Exists(existing));
        }
        let extent = self.append_value(value)?;
        // The log mutex is held across check, append, sync and publish so that
        // concurrent inserts on the same key serialise.
        let mut log = lock(&self.log);
        if let Some(v) = self.lookup(oid, key) {
            drop(log);
            return Ok(Insert::Exists(self.read_extent(&v.extent)?));
        }
        log.check_object(oid, Kind::Kv)?;
        let body = RecordBody::KvPut {
            oid,
            key: key.to_string(),
            extent,
        };
        let seq = log.append(body.clone())?;
        log.apply_meta(&body);
        if self.sync {
            self.log_gate.sync(&self.log_sync)?;
        }
        self.state
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .publish(&body, seq);
        Ok(Insert::Inserted(seq))
    }

    fn lookup(&self, oid: Oid, key: &str) -> Option<Version> {
        let state = self.state.read().unwrap_or_else(|p| p.into_inner());
        match state.objects.get(&oid) {
            Some(Object::Kv(map)) => map.get(key).copied(),
            _ => None,
        }
    }

    fn read_extent(&self, extent: &ValueExtent) -> EngineResult<Vec<u8>> {
        let mut buf = vec![0u8; extent.len as usize];
        self.values.read_exact_at(&mut buf, extent.log_offset)?;
        if crc32fast::hash(&buf) != extent.crc {
            return Err(EngineError::Corrupt(format!(
                "value extent at {} failed its checksum",
                extent.log_offset
            )));
        }
        Ok(buf)
    }

    fn kv_get(&self, oid: Oid, key: &str) -> EngineResult<Option<Vec<u8>>> {
        let version = {
            let state = self.state.read().unwrap_or_else(|p| p.into_inner());
            match state.objects.get(&oid) {
                Some(Object::Kv(map)) => map.get(key).copied(),
                Some(Object::Array(_)) => {
                    return Err(EngineError::WrongObjectType {
                        oid,
                        expected: Kind::Kv.name().into(),
                    })
                }
                None => None,
            }
        };
        version.map(|v| self.read_extent(&v.extent)).transpose()
    }

    fn kv_list(&self, oid: Oid) -> EngineResult<Vec<String>> {
        let state = self.state.read().unwrap_or_else(|p| p.into_inner());
        match state.objects.get(&oid) {
            Some(Object::Kv(map)) => {
                let mut keys: Vec<String> = map.keys().cloned().collect();
                keys.sort();
                Ok(keys)
            }
            Some(Object::Array(_)) => Err(EngineError::WrongObjectType {
                oid,
                expected: Kind::Kv.name().into(),
            }),
            None => Ok(Vec::new()),
        }
    }

    fn array_write(&self, oid: Oid, offset: u64, data: &[u8]) -> EngineResult<CommitSeq> {
        lock(&self.log).check_object(oid, Kind::Array)?;
        let extent = self.append_value(data)?;
        self.commit(
            RecordBody::ArrayWrite { oid, offset, extent },
            Some((oid, Kind::Array)),
        )
    }

    fn array_snapshot(&self, oid: Oid) -> EngineResult<(u64, Vec<ArrayExtent>)> {
        let state = self.state.read().unwrap_or_else(|p| p.into_inner());
        match state.objects.get(&oid) {
            Some(Object::Array(arr)) => Ok((arr.size, arr.extents.clone())),
            Some(Object::Kv(_)) => Err(EngineError::WrongObjectType {
                oid,
                expected: Kind::Array.name().into(),
            }),
            None => Ok((0, Vec::new())),
        }
    }

    fn array_read(&self, oid: Oid, offset: u64, len: u64) -> EngineResult<Vec<u8>> {
        let (size, extents) = self.array_snapshot(oid)?;
        let end = offset.saturating_add(len).min(size);
        if end <= offset {
            return Ok(Vec::new());
        }
        let mut buf = vec![0u8; (end - offset) as usize];
        for ext in &extents {
            let lo = ext.offset.max(offset);
            let hi = ext.end().min(end);
            if lo >= hi {
                continue;
            }
            let dst = &mut buf[(lo - offset) as usize..(hi - offset) as usize];
            if lo == ext.offset && hi == ext.end() {
                dst.copy_from_slice(&self.read_extent(&ext.version.extent)?);
            } else {
                self.values
                    .read_exact_at(dst, ext.version.extent.log_offset + (lo - ext.offset))?;
            }
        }
        Ok(buf)
    }

    fn array_size(&self, oid: Oid) -> EngineResult<u64> {
        Ok(self.array_snapshot(oid)?.0)
    }
}

fn open_rw(path: &Path) -> EngineResult<File> {
    Ok(OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)?)
}
