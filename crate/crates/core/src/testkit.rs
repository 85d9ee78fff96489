//! Conformance suites shared by every engine and every backend pair.
//!
//! The same functions run against the embedded engine, the remote engine,
//! and both (Store, Catalogue) pairs; a failure panics with context.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier};
use std::thread;

use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};

use crate::backends::KvCatalogueOptions;
use crate::config::{BackendKind, Config};
use crate::engine::{open_shared, EngineError, Insert, LocalEngine, ObjectEngine, Oid, MAX_KEY_LEN};
use crate::error::{Error, Result};
use crate::profile::Profiler;
use crate::schema::{Key, Request, Schema};
use crate::wire::{serve, Server};
use crate::Fdb;

pub const MARS_SCHEMA: &str = "dataset: class, stream, expver, date, time\n\
                                   collocation: type, levtype, number, levelist\n\
                                   element: step, param";

pub const SAMPLE_ID: &str = "class=od,stream=oper,expver=0001,date=20231201,time=1200,\
                            type=ef,levtype=sfc,number=13,levelist=1,step=1,param=v";

fn unique(prefix: &str) -> String {
    format!("{prefix}-{}", uuid::Uuid::new_v4().simple())
}

/// Self-checking payload: `version u64 | seeded bytes | crc32`.
pub fn payload(id: &str, version: u64, len: usize) -> Vec<u8> {
    assert!(len >= 12);
    let seed = crc32fast::hash(id.as_bytes()) as u64 ^ version.rotate_left(32);
    let mut out = version.to_le_bytes().to_vec();
    let mut body = vec![0u8; len - 12];
    StdRng::seed_from_u64(seed).fill_bytes(&mut body);
    out.extend(body);
    let crc = crc32fast::hash(&out);
    out.extend(crc.to_le_bytes());
    out
}

/// Version carried by `bytes` if they are an intact payload for `id`.
pub fn verify(id: &str, bytes: &[u8]) -> Option<u64> {
    if bytes.len() < 12 {
        return None;
    }
    let version = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    (payload(id, version, bytes.len()) == bytes).then_some(version)
}

// ---------------------------------------------------------------------------
// Engine contract

fn pool_and_cont(e: &dyn ObjectEngine) -> crate::engine::ContainerHandle {
    let pool = e.pool_connect(&unique("pool"), true).unwrap();
    e.cont_open(&pool, &unique("cont"), true).unwrap()
}

/// Every single-client postcondition of the engine operations.
pub fn engine_contract(engine: Arc<dyn ObjectEngine>) {
    let e = engine.as_ref();

    // pools
    let name = unique("pool");
    assert!(matches!(e.pool_connect(&name, false), Err(EngineError::UnknownPool(_))));
    let p1 = e.pool_connect(&name, true).unwrap();
    let p2 = e.pool_connect(&name, false).unwrap();
    assert_ne!(p1.token, p2.token);

    // containers
    assert!(matches!(e.cont_open(&p1, "x", false), Err(EngineError::ContainerNotFound(_))));
    assert!(matches!(e.cont_open(&p1, "", true), Err(EngineError::InvalidArgument(_))));
    let label = "od:oper:0001:20231201:1200";
    let c = e.cont_open(&p1, label, true).unwrap();
    assert_eq!(e.kv_list(&c, Oid::ENTRY).unwrap(), Vec::<String>::new());
    e.kv_put(&c, Oid::ENTRY, "k", b"v").unwrap();
    let c2 = e.cont_open(&p2, label, false).unwrap();
    assert_eq!(e.kv_get(&c2, Oid::ENTRY, "k").unwrap().as_deref(), Some(&b"v"[..]));
    e.cont_close(&c2).unwrap();
    assert!(matches!(e.kv_get(&c2, Oid::ENTRY, "k"), Err(EngineError::InvalidHandle(_))));
    assert!(matches!(e.alloc_oids(&c2, 1), Err(EngineError::InvalidHandle(_))));

    // oid allocation
    assert!(matches!(e.alloc_oids(&c, 0), Err(EngineError::InvalidArgument(_))));
    let a = e.alloc_oids(&c, 64).unwrap();
    let b = e.alloc_oids(&c, 64).unwrap();
    assert!(!a.is_entry() && !b.is_entry());
    let (a, b) = (a.as_u128(), b.as_u128());
    assert!(a + 64 <= b || b + 64 <= a, "ranges overlap");

    // key-value objects
    let kv = e.alloc_oids(&c, 1).unwrap();
    assert_eq!(e.kv_get(&c, kv, "1:sfc:13").unwrap(), None);
    assert_eq!(e.kv_list(&c, kv).unwrap(), Vec::<String>::new());
    let s1 = e.kv_put(&c, kv, "1:sfc:13", b"A").unwrap();
    let s2 = e.kv_put(&c, kv, "1:sfc:13", b"B").unwrap();
    assert!(s2 > s1 && s1 > 0);
    assert_eq!(e.kv_get(&c, kv, "1:sfc:13").unwrap().as_deref(), Some(&b"B"[..]));
    e.kv_put(&c, kv, "empty", b"").unwrap();
    assert_eq!(e.kv_get(&c, kv, "empty").unwrap().as_deref(), Some(&b""[..]));
    let mut keys = e.kv_list(&c, kv).unwrap();
    keys.sort();
    assert_eq!(keys, ["1:sfc:13", "empty"]);
    let long = "k".repeat(MAX_KEY_LEN);
    e.kv_put(&c, kv, &long, b"x").unwrap();
    assert!(matches!(
        e.kv_put(&c, kv, &format!("{long}k"), b"x"),
        Err(EngineError::KeyTooLong(_))
    ));
    assert!(matches!(e.kv_put(&c, kv, "", b"x"), Err(EngineError::InvalidArgument(_))));
    assert!(matches!(
        e.kv_insert(&c, kv, "1:sfc:13", b"C").unwrap(),
        Insert::Exists(v) if v == b"B"
    ));
    assert!(matches!(e.kv_insert(&c, kv, "fresh", b"C").unwrap(), Insert::Inserted(_)));

    // arrays
    let arr = e.alloc_oids(&c, 1).unwrap();
    assert_eq!(e.array_get_size(&c, arr).unwrap(), 0);
    assert_eq!(e.array_read(&c, arr, 0, 100).unwrap(), Vec::<u8>::new());
    let mib: Vec<u8> = (0..1 << 20).map(|i| (i * 7 % 251) as u8).collect();
    e.array_write(&c, arr, 0, &mib).unwrap();
    assert_eq!(e.array_get_size(&c, arr).unwrap(), 1 << 20);
    assert_eq!(e.array_read(&c, arr, 0, 1 << 20).unwrap(), mib);
    let holey = e.alloc_oids(&c, 1).unwrap();
    e.array_write(&c, holey, 10, b"abc").unwrap();
    assert_eq!(e.array_get_size(&c, holey).unwrap(), 13);
    let mut want = vec![0u8; 10];
    want.extend(b"abc");
    assert_eq!(e.array_read(&c, holey, 0, 100).unwrap(), want, "holes read as zeros, short read at end");
    e.array_write(&c, holey, 11, b"Z").unwrap();
    assert_eq!(e.array_read(&c, holey, 9, 4).unwrap(), b"\0aZc");
    assert_eq!(e.array_read(&c, holey, 50, 4).unwrap(), Vec::<u8>::new());

    // object kinds are fixed and objects must be allocated
    assert!(matches!(e.kv_put(&c, arr, "k", b"v"), Err(EngineError::WrongObjectType { .. })));
    assert!(matches!(e.array_write(&c, kv, 0, b"v"), Err(EngineError::WrongObjectType { .. })));
    assert!(matches!(e.array_write(&c, Oid::ENTRY, 0, b"v"), Err(EngineError::WrongObjectType { .. })));
    let never = Oid::new(0, u32::MAX as u64 * 1000);
    assert!(e.kv_put(&c, never, "k", b"v").is_err());
    assert!(e.array_write(&c, never, 0, b"v").is_err());
}

/// Racing clients: puts on one key, disjoint array ranges, OID allocation and
/// checksummed reads while writers overwrite. `ops` scales the torn-read phase.
pub fn engine_concurrency(engine: Arc<dyn ObjectEngine>, writers: usize, readers: usize, ops: usize) {
    let cont = pool_and_cont(engine.as_ref());
    let kv = engine.alloc_oids(&cont, 1).unwrap();
    let arr = engine.alloc_oids(&cont, 1).unwrap();

    // last-writer-wins leaves exactly one intact candidate
    let candidates: Vec<Vec<u8>> = (0..8).map(|i| payload("race", i, 256)).collect();
    thread::scope(|s| {
        for v in &candidates {
            let (engine, cont) = (&engine, &cont);
            s.spawn(move || engine.kv_put(cont, kv, "k", v).unwrap());
        }
    });
    let got = engine.kv_get(&cont, kv, "k").unwrap().unwrap();
    assert!(candidates.contains(&got));

    // disjoint ranges survive each other
    thread::scope(|s| {
        for i in 0..8u64 {
            let (engine, cont) = (&engine, &cont);
            s.spawn(move || engine.array_write(cont, arr, i * 1000, &payload(&format!("r{i}"), i, 1000)).unwrap());
        }
    });
    for i in 0..8u64 {
        let bytes = engine.array_read(&cont, arr, i * 1000, 1000).unwrap();
        assert_eq!(verify(&format!("r{i}"), &bytes), Some(i));
    }

    // allocation is unique across clients
    let ranges: Vec<Oid> = thread::scope(|s| {
        let hs: Vec<_> = (0..16)
            .map(|_| {
                let (engine, cont) = (&engine, &cont);
                s.spawn(move || engine.alloc_oids(cont, 1000).unwrap())
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut seen = HashSet::new();
    for first in ranges {
        for i in 0..1000 {
            assert!(seen.insert(first.offset(i).unwrap()));
        }
    }
    assert_eq!(seen.len(), 16000);
    assert!(!seen.contains(&Oid::ENTRY));

    // no torn reads under overwrite
    let keys = 4usize;
    let field = engine.alloc_oids(&cont, keys as u64).unwrap();
    for k in 0..keys {
        let id = format!("t{k}");
        engine.kv_put(&cont, kv, &id, &payload(&id, 0, 512)).unwrap();
        engine
            .array_write(&cont, field.offset(k as u64).unwrap(), 0, &payload(&id, 0, 4096))
            .unwrap();
    }
    let per_thread = ops.div_ceil(writers + readers).max(1);
    let barrier = Barrier::new(writers + readers);
    thread::scope(|s| {
        for w in 0..writers {
            let (engine, cont, barrier) = (&engine, &cont, &barrier);
            s.spawn(move || {
                barrier.wait();
                for n in 0..per_thread {
                    let k = (w + n) % keys;
                    let id = format!("t{k}");
                    let version = (w * per_thread + n + 1) as u64;
                    if n % 2 == 0 {
                        engine.kv_put(cont, kv, &id, &payload(&id, version, 512)).unwrap();
                    } else {
                        let oid = field.offset(k as u64).unwrap();
                        engine.array_write(cont, oid, 0, &payload(&id, version, 4096)).unwrap();
                    }
                }
            });
        }
        for r in 0..readers {
            let (engine, cont, barrier) = (&engine, &cont, &barrier);
            s.spawn(move || {
                barrier.wait();
                for n in 0..per_thread {
                    let k = (r + n) % keys;
                    let id = format!("t{k}");
                    let bytes = if n % 2 == 0 {
                        engine.kv_get(cont, kv, &id).unwrap().unwrap()
                    } else {
                        engine.array_read(cont, field.offset(k as u64).unwrap(), 0, 4096).unwrap()
                    };
                    assert!(verify(&id, &bytes).is_some(), "torn read of {id}");
                }
            });
        }
    });
}

// ---------------------------------------------------------------------------
// FDB semantics

/// A way of opening sessions over one shared storage system.
pub trait Backend: Sync {
    fn name(&self) -> String;
    fn open(&self, schema: &Schema) -> Result<Fdb>;
    fn open_profiled(&self, schema: &Schema, profiler: Arc<Profiler>) -> Result<Fdb>;
}

pub struct TocBackend {
    pub root: PathBuf,
}

impl Backend for TocBackend {
    fn name(&self) -> String {
        "toc".into()
    }
    fn open(&self, schema: &Schema) -> Result<Fdb> {
        self.open_profiled(schema, Arc::new(Profiler::new()))
    }
    fn open_profiled(&self, schema: &Schema, profiler: Arc<Profiler>) -> Result<Fdb> {
        Fdb::toc(&self.root, schema.clone(), profiler)
    }
}

/// kv pair over an in-process engine.
pub struct EmbeddedKv {
    pub engine: Arc<LocalEngine>,
    pub options: KvCatalogueOptions,
}

impl EmbeddedKv {
    pub fn new(root: &Path) -> Self {
        EmbeddedKv {
            engine: open_shared(root).unwrap(),
            options: KvCatalogueOptions::default(),
        }
    }
}

impl Backend for EmbeddedKv {
    fn name(&self) -> String {
        format!("kv-embedded{}", if self.options.axis_pruning { "" } else { "-unpruned" })
    }
    fn open(&self, schema: &Schema) -> Result<Fdb> {
        self.open_profiled(schema, Arc::new(Profiler::new()))
    }
    fn open_profiled(&self, schema: &Schema, profiler: Arc<Profiler>) -> Result<Fdb> {
        Fdb::kv(self.engine.clone(), schema.clone(), self.options.clone(), 64, profiler)
    }
}

/// kv pair through a wire server; each session has its own connection.
pub struct RemoteKv {
    server: Server,
}

impl RemoteKv {
    pub fn new(root: &Path) -> Self {
        let engine = Arc::new(LocalEngine::open(root).unwrap());
        RemoteKv {
            server: serve(engine, "127.0.0.1:0").unwrap(),
        }
    }

    pub fn config(&self) -> Config {
        let mut c = Config::new(BackendKind::Kv, "unused");
        c.storage_root = None;
        c.engine_address = Some(self.server.local_addr().to_string());
        c
    }
}

impl Backend for RemoteKv {
    fn name(&self) -> String {
        "kv-remote".into()
    }
    fn open(&self, schema: &Schema) -> Result<Fdb> {
        self.open_profiled(schema, Arc::new(Profiler::new()))
    }
    fn open_profiled(&self, schema: &Schema, profiler: Arc<Profiler>) -> Result<Fdb> {
        Fdb::open_profiled(&self.config(), schema.clone(), profiler)
    }
}

/// The three configurations the semantics suite must pass under, each over
/// its own subdirectory of `dir`.
pub fn all_backends(dir: &Path) -> Vec<Box<dyn Backend>> {
    vec![
        Box::new(EmbeddedKv::new(&dir.join("kv-embedded"))),
        Box::new(RemoteKv::new(&dir.join("kv-remote"))),
        Box::new(TocBackend { root: dir.join("toc") }),
    ]
}

fn ids(nsteps: usize, nparams: usize, nlevels: usize, member: usize) -> Vec<Key> {
    let mut out = Vec::new();
    for step in 0..nsteps {
        for level in 1..=nlevels {
            for p in 0..nparams {
                out.push(
                    Key::parse(&format!(
                        "class=od,stream=oper,expver=0001,date=20231201,time=1200,\
                         type=ef,levtype=ml,number={member},levelist={level},step={step},param=p{p}"
                    ))
                    .unwrap(),
                );
            }
        }
    }
    out
}

/// The full session-level semantics, checked against `backend`.
pub fn fdb_semantics(backend: &dyn Backend) {
    let name = backend.name();
    let schema = Schema::parse(MARS_SCHEMA).unwrap();
    let sample = Key::parse(SAMPLE_ID).unwrap();
    let open = || backend.open(&schema).unwrap();

    // empty system
    let mut reader = open();
    assert!(reader.list(&Request::all()).unwrap().is_empty(), "{name}: empty list");
    assert_eq!(reader.retrieve(&sample).unwrap(), None, "{name}");

    // archive / flush / retrieve from another session
    let mut writer = open();
    let v1 = payload(SAMPLE_ID, 1, 4096);
    writer.archive(&sample, &v1).unwrap();
    assert_eq!(writer.pending(), 1);
    writer.flush().unwrap();
    assert_eq!(writer.pending(), 0);
    writer.flush().unwrap();
    assert_eq!(open().retrieve(&sample).unwrap().as_deref(), Some(&v1[..]), "{name}: flush barrier");

    // identifier keyword order is irrelevant; schema violations reach no backend
    let mut reordered: Vec<(&str, &str)> = sample.iter().collect();
    reordered.reverse();
    assert_eq!(open().retrieve(&Key::new(reordered).unwrap()).unwrap().as_deref(), Some(&v1[..]));
    let missing = Key::parse(&SAMPLE_ID.replace(",param=v", "")).unwrap();
    assert!(matches!(writer.archive(&missing, b"xxxx"), Err(Error::Schema(_))), "{name}");
    let extra = Key::parse(&format!("{SAMPLE_ID},foo=1")).unwrap();
    assert!(matches!(writer.archive(&extra, b"xxxx"), Err(Error::Schema(_))), "{name}");
    assert_eq!(writer.pending(), 0);

    // replacement; the superseded location stays readable and unchanged
    let old_loc = open().locate(&sample).unwrap().unwrap();
    let v2 = payload(SAMPLE_ID, 2, 4096);
    writer.archive(&sample, &v2).unwrap();
    writer.flush().unwrap();
    assert_eq!(open().retrieve(&sample).unwrap().as_deref(), Some(&v2[..]), "{name}: replacement");
    assert_eq!(open().read(&old_loc).unwrap(), v1, "{name}: immutability");
    let listed = open().list(&Request::all()).unwrap();
    assert_eq!(listed.len(), 1, "{name}: replaced field listed once");
    assert_eq!(listed[0].identifier, sample, "{name}: identifier in schema order");
    assert_eq!(open().read(&listed[0].location).unwrap(), v2);

    // many fields, per-step flushes, visible to sessions started after each flush
    let fields = ids(3, 4, 5, 7);
    let mut per_step = fields.chunks(20);
    for (step, chunk) in per_step.by_ref().enumerate() {
        for id in chunk {
            writer.archive(id, &payload(&id.to_string(), step as u64, 64)).unwrap();
        }
        writer.flush().unwrap();
        let mut r = open();
        for id in &fields[..(step + 1) * 20] {
            let got = r.retrieve(id).unwrap().unwrap_or_else(|| panic!("{name}: {id} missing"));
            assert!(verify(&id.to_string(), &got).is_some());
        }
    }
    let mut r = open();
    assert_eq!(r.list(&Request::all()).unwrap().len(), 61);
    let step0 = r.list(&Request::parse("step=0,number=7").unwrap()).unwrap();
    assert_eq!(step0.len(), 4 * 5, "{name}: step slice = nparams × nlevels");
    let mut want: Vec<Key> = fields[..20].iter().map(Key::canonical).collect();
    let mut got: Vec<Key> = step0.iter().map(|l| l.identifier.canonical()).collect();
    want.sort_by_key(|k| k.to_string());
    got.sort_by_key(|k| k.to_string());
    assert_eq!(got, want, "{name}: listed identifiers");
    assert_eq!(
        r.list(&Request::parse("param=p1/p3,levelist=2,step=1/2").unwrap()).unwrap().len(),
        2 * 2
    );
    assert!(r.list(&Request::parse("param=nope").unwrap()).unwrap().is_empty());
    assert!(r.list(&Request::parse("class=rd").unwrap()).unwrap().is_empty());
    let absent = Key::parse(&fields[0].to_string().replace("step=0", "step=99")).unwrap();
    assert_eq!(r.retrieve(&absent).unwrap(), None);

    // a different schema is refused on the same storage
    let other = Schema::parse("dataset: class\ncollocation: stream\nelement: step").unwrap();
    assert!(
        matches!(backend.open(&other), Err(Error::SchemaMismatch { .. })),
        "{name}: schema mismatch"
    );

    concurrent_overwrite(backend, &schema);
}

/// A reader racing a writer that keeps replacing one field sees whole
/// payloads only, and never goes back to an older version once it has seen
/// a newer one.
fn concurrent_overwrite(backend: &dyn Backend, schema: &Schema) {
    let id = Key::parse(&SAMPLE_ID.replace("param=v", "param=race")).unwrap();
    let text = id.to_string();
    let mut w = backend.open(schema).unwrap();
    w.archive(&id, &payload(&text, 0, 2048)).unwrap();
    w.flush().unwrap();
    let rounds = 60u64;
    thread::scope(|s| {
        s.spawn(|| {
            for v in 1..=rounds {
                w.archive(&id, &payload(&text, v, 2048)).unwrap();
                w.flush().unwrap();
            }
        });
        s.spawn(|| {
            let mut r = backend.open(schema).unwrap();
            let mut last = 0;
            while last < rounds {
                let got = r.retrieve(&id).unwrap().expect("flushed field disappeared");
                let v = verify(&text, &got).expect("torn payload");
                assert!(v >= last, "went back from version {last} to {v}");
                last = v;
            }
        });
    });
}

// ---------------------------------------------------------------------------
// List oracle

/// A random schema with 1–3 keywords per level and values drawn from small
/// alphabets, plus up to `max_fields` distinct identifiers.
pub fn random_instance(rng: &mut impl Rng, max_fields: usize) -> (Schema, Vec<Key>, BTreeMap<String, Vec<String>>) {
    let mut n = 0;
    let mut level = |rng: &mut dyn RngCore| {
        let k = rng.random_range(1..=3);
        (0..k)
            .map(|_| {
                n += 1;
                format!("k{n}")
            })
            .collect::<Vec<_>>()
    };
    let schema = Schema::new(level(rng), level(rng), level(rng)).unwrap();
    let mut domains = BTreeMap::new();
    for kw in schema.all_keywords() {
        let size = rng.random_range(1..=4);
        domains.insert(kw.to_string(), (0..size).map(|i| format!("{kw}v{i}")).collect::<Vec<_>>());
    }
    let mut seen = HashSet::new();
    let mut fields = Vec::new();
    let target = rng.random_range(1..=max_fields);
    for _ in 0..target * 2 {
        if fields.len() == target {
            break;
        }
        let pairs: Vec<(String, String)> = schema
            .all_keywords()
            .map(|kw| {
                let d = &domains[kw];
                (kw.to_string(), d[rng.random_range(0..d.len())].clone())
            })
            .collect();
        let key = Key::new(pairs).unwrap();
        if seen.insert(key.to_string()) {
            fields.push(key);
        }
    }
    (schema, fields, domains)
}

/// A random request over the instance's keywords; values may fall outside
/// the populated domain.
pub fn random_request(rng: &mut impl Rng, domains: &BTreeMap<String, Vec<String>>) -> Request {
    let mut req = Request::all();
    for (kw, values) in domains {
        if rng.random_bool(0.35) {
            let mut span: Vec<String> = values.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
            if span.is_empty() || rng.random_bool(0.1) {
                span.push(format!("{kw}-absent"));
            }
            req = req.with(kw.clone(), span).unwrap();
        }
    }
    req
}

/// Brute-force filter: the identifiers whose every constrained keyword has an
/// accepted value.
pub fn brute_force(fields: &[Key], request: &Request) -> Vec<String> {
    let mut out: Vec<String> = fields
        .iter()
        .filter(|k| k.iter().all(|(kw, v)| request.span(kw).is_none_or(|s| s.contains(v))))
        .map(|k| k.canonical().to_string())
        .collect();
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Crash consistency

type Observed = (Vec<BTreeMap<String, Vec<u8>>>, Vec<Vec<u8>>);

#[derive(Debug, Clone, Default)]
pub struct CrashReport {
    /// Truncated copies recovered and compared.
    pub checked: usize,
    /// Distinct commit prefixes the recoveries landed on.
    pub distinct_prefixes: usize,
}

fn observe(e: &dyn ObjectEngine, c: &crate::engine::ContainerHandle, kvs: &[Oid], arrays: &[Oid]) -> Observed {
    let kv = kvs
        .iter()
        .map(|&o| {
            e.kv_list(c, o)
                .unwrap()
                .into_iter()
                .map(|k| {
                    let v = e.kv_get(c, o, &k).unwrap().unwrap();
                    (k, v)
                })
                .collect()
        })
        .collect();
    let arr = arrays
        .iter()
        .map(|&o| e.array_read(c, o, 0, u32::MAX as u64).unwrap())
        .collect();
    (kv, arr)
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else if entry.file_name() != "engine.lock" {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Applies `ops` random writes from one client while keeping an in-memory
/// model of the state after every commit, then truncates copies of the
/// commit log (and, alternately, the value log) at `truncations` random
/// points. Each recovered state must equal the model after some prefix of
/// the commit order: for a commit-log cut, exactly the longest prefix whose
/// records fit below the cut.
pub fn crash_consistency(dir: &Path, ops: usize, truncations: usize, seed: u64) -> std::result::Result<CrashReport, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let live = dir.join("live");
    let (kvs, arrays, commit_lens, value_lens, models) = {
        let engine = LocalEngine::open(&live).map_err(|e| e.to_string())?;
        let pool = engine.pool_connect("p", true).unwrap();
        let c = engine.cont_open(&pool, "c", true).unwrap();
        let cdir = engine.container_dir("p", "c");
        let lens = |name: &str| std::fs::metadata(cdir.join(name)).unwrap().len();
        let base = engine.alloc_oids(&c, 6).unwrap();
        let kvs: Vec<Oid> = (0..3).map(|i| base.offset(i).unwrap()).collect();
        let arrays: Vec<Oid> = (3..6).map(|i| base.offset(i).unwrap()).collect();

        let mut model: Observed = (vec![BTreeMap::new(); 3], vec![Vec::new(); 3]);
        let mut commit_lens = vec![lens("commits.log")];
        let mut value_lens = vec![lens("values.log")];
        let mut models = vec![model.clone()];
        for n in 0..ops {
            if rng.random_bool(0.5) {
                let i = rng.random_range(0..3);
                let key = format!("key{}", rng.random_range(0..6));
                let value = payload(&key, n as u64, rng.random_range(12..300));
                engine.kv_put(&c, kvs[i], &key, &value).unwrap();
                model.0[i].insert(key, value);
            } else {
                let i = rng.random_range(0..3);
                let offset = rng.random_range(0..2000usize);
                let mut data = vec![0u8; rng.random_range(1..1500)];
                rng.fill_bytes(&mut data);
                engine.array_write(&c, arrays[i], offset as u64, &data).unwrap();
                let a = &mut model.1[i];
                if a.len() < offset + data.len() {
                    a.resize(offset + data.len(), 0);
                }
                a[offset..offset + data.len()].copy_from_slice(&data);
            }
            commit_lens.push(lens("commits.log"));
            value_lens.push(lens("values.log"));
            models.push(model.clone());
        }
        if observe(&engine, &c, &kvs, &arrays) != model {
            return Err("live engine disagrees with the model".into());
        }
        (kvs, arrays, commit_lens, value_lens, models)
    };

    let mut prefixes = HashSet::new();
    for t in 0..truncations {
        let copy = dir.join(format!("cut{t}"));
        copy_tree(&live, &copy).map_err(|e| e.to_string())?;
        let cdir = copy.join("p").join("c");
        let (file, lens) = if t % 2 == 0 {
            ("commits.log", &commit_lens)
        } else {
            ("values.log", &value_lens)
        };
        let lo = lens[0];
        let hi = *lens.last().unwrap();
        let cut = rng.random_range(lo..=hi);
        std::fs::OpenOptions::new()
            .write(true)
            .open(cdir.join(file))
            .and_then(|f| f.set_len(cut))
            .map_err(|e| e.to_string())?;
        let engine = LocalEngine::open(&copy).map_err(|e| e.to_string())?;
        let pool = engine.pool_connect("p", false).map_err(|e| e.to_string())?;
        let c = engine.cont_open(&pool, "c", false).map_err(|e| format!("cut {cut} of {file}: {e}"))?;
        let got = observe(&engine, &c, &kvs, &arrays);
        let expected = lens.iter().rposition(|&l| l <= cut).unwrap();
        if got != models[expected] {
            let any = models.iter().position(|m| *m == got);
            return Err(format!(
                "{file} cut at {cut}: recovered state is prefix {any:?}, expected prefix {expected}"
            ));
        }
        prefixes.insert(expected);
        drop(engine);
        let _ = std::fs::remove_dir_all(&copy);
    }
    Ok(CrashReport {
        checked: truncations,
        distinct_prefixes: prefixes.len(),
    })
}

// ---------------------------------------------------------------------------
// TOC under concurrent flushers

#[derive(Debug, Clone, Default)]
pub struct TocReport {
    /// Index records found in the TOC.
    pub records: usize,
    /// Truncated copies whose parseable prefix was checked.
    pub truncations: usize,
}

fn find_tocs(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let p = entry.path();
        if p.is_dir() {
            find_tocs(&p, out);
        } else if entry.file_name() == "toc" {
            out.push(p);
        }
    }
}

/// Parses `toc` and checks every index record points at a complete blob
/// whose entries point at readable data. Returns the number of index
/// records, or the first problem found.
fn check_toc(root: &Path, toc: &Path, expect_clean_end: bool) -> std::result::Result<usize, String> {
    use crate::backends::{toc, FieldLocation};
    let bytes = std::fs::read(toc).map_err(|e| e.to_string())?;
    let scan = toc::scan(&bytes);
    if scan.skipped != 0 {
        return Err(format!("{} bytes skipped in {}", scan.skipped, toc.display()));
    }
    if expect_clean_end && scan.partial_tail != 0 {
        return Err(format!("{} stray bytes at the end of {}", scan.partial_tail, toc.display()));
    }
    let dsdir = toc.parent().unwrap();
    let mut n = 0;
    for (i, rec) in scan.records.iter().enumerate() {
        match rec {
            toc::TocRecord::Init { .. } if i == 0 => {}
            toc::TocRecord::Init { .. } => return Err(format!("init record at position {i}")),
            toc::TocRecord::Index {
                blob,
                blob_len,
                blob_crc,
                ..
            } => {
                if i == 0 {
                    return Err("toc does not start with an init record".into());
                }
                let data = std::fs::read(dsdir.join(blob)).map_err(|e| format!("blob {blob}: {e}"))?;
                if data.len() as u64 != *blob_len || crc32fast::hash(&data) != *blob_crc {
                    return Err(format!("blob {blob} does not match its record"));
                }
                let entries = toc::decode_blob(&data).ok_or_else(|| format!("blob {blob} malformed"))?;
                for (_, loc) in entries {
                    let loc: FieldLocation = loc.parse().map_err(|e: Error| e.to_string())?;
                    let FieldLocation::File { path, offset, length } = &loc else {
                        return Err(format!("unexpected location {loc}"));
                    };
                    let size = std::fs::metadata(root.join(path)).map_err(|e| e.to_string())?.len();
                    if offset + length > size {
                        return Err(format!("{loc} points past the end of its data file"));
                    }
                }
                n += 1;
            }
        }
    }
    Ok(n)
}

/// `writers` threads, each with its own session over one toc root, flush
/// `records` fields one at a time into the same dataset. Afterwards the TOC
/// must hold exactly `writers × records` well-formed index records, every
/// field must be retrievable, and copies of the TOC truncated at
/// `truncations` random points must still parse into a prefix that only
/// references complete blobs.
pub fn toc_concurrent_flushers(
    dir: &Path,
    writers: usize,
    records: usize,
    truncations: usize,
    seed: u64,
) -> std::result::Result<TocReport, String> {
    let root = dir.join("live");
    let schema = Schema::parse(MARS_SCHEMA).unwrap();
    let backend = TocBackend { root: root.clone() };
    let id = |w: usize, i: usize| {
        Key::parse(&SAMPLE_ID.replace("number=13", &format!("number={w}")).replace("step=1", &format!("step={i}")))
            .unwrap()
    };
    let barrier = Barrier::new(writers);
    let failures: Vec<String> = thread::scope(|s| {
        let handles: Vec<_> = (0..writers)
            .map(|w| {
                let (backend, schema, barrier, id) = (&backend, &schema, &barrier, &id);
                s.spawn(move || -> std::result::Result<(), String> {
                    let mut fdb = backend.open(schema).map_err(|e| e.to_string())?;
                    barrier.wait();
                    for i in 0..records {
                        let k = id(w, i);
                        fdb.archive(&k, &payload(&k.to_string(), 0, 256)).map_err(|e| e.to_string())?;
                        fdb.flush().map_err(|e| e.to_string())?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().filter_map(|h| h.join().unwrap().err()).collect()
    });
    if let Some(f) = failures.first() {
        return Err(format!("writer failed: {f}"));
    }

    let mut tocs = Vec::new();
    find_tocs(&root, &mut tocs);
    let [toc] = tocs.as_slice() else {
        return Err(format!("expected one toc, found {}", tocs.len()));
    };
    let found = check_toc(&root, toc, true)?;
    if found != writers * records {
        return Err(format!("{found} index records, expected {}", writers * records));
    }
    let mut reader = backend.open(&schema).map_err(|e| e.to_string())?;
    let listed = reader.list(&Request::all()).map_err(|e| e.to_string())?;
    if listed.len() != writers * records {
        return Err(format!("{} fields listed, expected {}", listed.len(), writers * records));
    }
    for w in 0..writers {
        for i in 0..records {
            let k = id(w, i);
            let got = reader.retrieve(&k).map_err(|e| e.to_string())?;
            if got.and_then(|b| verify(&k.to_string(), &b)) != Some(0) {
                return Err(format!("{k} not retrievable"));
            }
        }
    }

    // Each index record is followed by exactly one new field, so a cut keeping
    // n index records must list n fields.
    let full = std::fs::read(toc).map_err(|e| e.to_string())?;
    let rel = toc.strip_prefix(&root).unwrap();
    let mut rng = StdRng::seed_from_u64(seed);
    for t in 0..truncations {
        let copy = dir.join(format!("cut{t}"));
        copy_tree(&root, &copy).map_err(|e| e.to_string())?;
        let cut = rng.random_range(0..=full.len() as u64);
        let toc_copy = copy.join(rel);
        std::fs::OpenOptions::new()
            .write(true)
            .open(&toc_copy)
            .and_then(|f| f.set_len(cut))
            .map_err(|e| e.to_string())?;
        let n = check_toc(&copy, &toc_copy, false).map_err(|e| format!("cut at {cut}: {e}"))?;
        let listed = TocBackend { root: copy.clone() }
            .open(&schema)
            .and_then(|mut f| f.list(&Request::all()))
            .map_err(|e| format!("cut at {cut}: {e}"))?;
        if listed.len() != n {
            return Err(format!("cut at {cut}: {n} index records but {} fields", listed.len()));
        }
        let _ = std::fs::remove_dir_all(&copy);
    }
    Ok(TocReport {
        records: found,
        truncations,
    })
}

// ---------------------------------------------------------------------------
// List against brute force

/// For `instances` random schemas with up to `max_fields` fields each,
/// archives everything through `open`, then compares `list` on
/// `requests` random requests with a brute-force filter. Returns the number
/// of requests compared.
pub fn list_oracle(
    open: &dyn Fn(&Schema, usize) -> Result<Fdb>,
    instances: usize,
    max_fields: usize,
    requests: usize,
    seed: u64,
) -> std::result::Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut compared = 0;
    for inst in 0..instances {
        let (schema, fields, domains) = random_instance(&mut rng, max_fields);
        let mut fdb = open(&schema, inst).map_err(|e| e.to_string())?;
        for (i, k) in fields.iter().enumerate() {
            fdb.archive(k, &payload(&k.to_string(), 0, 16)).map_err(|e| e.to_string())?;
            if i % 50 == 49 {
                fdb.flush().map_err(|e| e.to_string())?;
            }
        }
        fdb.flush().map_err(|e| e.to_string())?;
        let mut reader = open(&schema, inst).map_err(|e| e.to_string())?;
        for _ in 0..requests {
            let req = random_request(&mut rng, &domains);
            let mut got: Vec<String> = reader
                .list(&req)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|l| l.identifier.canonical().to_string())
                .collect();
            got.sort();
            let want = brute_force(&fields, &req);
            if got != want {
                return Err(format!(
                    "instance {inst}, schema {:?}, request {req:?}: listed {} fields, expected {}",
                    schema.canonical_text(),
                    got.len(),
                    want.len()
                ));
            }
            compared += 1;
        }
    }
    Ok(compared)
}
