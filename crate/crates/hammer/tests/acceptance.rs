//! Exit gate: one PASS/FAIL line per acceptance criterion. Thresholds are
//! the constants below; a failing criterion fails the target.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fdb_core::backends::KvCatalogueOptions;
use fdb_core::config::{BackendKind, Config};
use fdb_core::profile::{Category, Profile, Profiler};
use fdb_core::testkit::{self, Backend, EmbeddedKv, TocBackend};
use fdb_core::wire::frame::Decoded;
use fdb_core::wire::proto::{self, Status};
use fdb_core::wire::{read_frame, serve_root, Frame, RemoteEngine, MAX_FRAME_LEN};
use fdb_core::{Fdb, Request};
use fdb_hammer::aggregate::{aggregate, format_mib_s, roles_overlap};
use fdb_hammer::ids::{default_schema, DatasetValues};
use fdb_hammer::orchestrate::Orchestrator;
use fdb_hammer::payload;
use fdb_hammer::record::{BenchRecord, Role};
use fdb_hammer::spec::{Pattern, PatternSpec, RunSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;

const HAMMER: &str = env!("CARGO_BIN_EXE_fdb-hammer");
const FDB: &str = env!("CARGO_BIN_EXE_fdb");

const C1_TIME_LIMIT: Duration = Duration::from_secs(60);
const C1_FIELD_SIZE: usize = 4096;
const C2_STEPS: u32 = 50;
const C2_FIELDS_PER_STEP: u32 = 20;
const C3_PROCESSES: u32 = 8;
const C3_MIN_OPS: u64 = 10_000;
const C4_INSTANCES: usize = 20;
const C4_MAX_FIELDS: usize = 500;
const C4_REQUESTS: usize = 100;
const C5_FLUSHERS: usize = 8;
const C5_RECORDS: usize = 100;
const C5_TRUNCATIONS: usize = 100;
const C6_COMMIT_LOG_CUTS: usize = 100;
const C7_ALLOCATORS: usize = 16;
const C7_OIDS: usize = 1000;
const C9_EXPECTED: &str = "363.64";
const C11_FRAMES: u32 = 10_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("tempdir")
}

fn orchestrate(dir: &Path, backend: BackendKind, pattern: PatternSpec, template: RunSpec) -> Result<Vec<BenchRecord>, String> {
    Orchestrator {
        exe: HAMMER.into(),
        config: Config::new(backend, dir.join("store")),
        template,
        pattern,
        output_dir: dir.join("out"),
        repetitions: 1,
    }
    .run()
    .map_err(|e| e.to_string())
}

/// One writer process at the 10 × 10 × 20 shape, then one reader process
/// retrieving all 2000 fields; on both backend pairs.
fn c1() -> Outcome {
    let mut details = Vec::new();
    for backend in [BackendKind::Kv, BackendKind::Toc] {
        let dir = tempdir();
        let started = Instant::now();
        let pattern = PatternSpec {
            pattern: Pattern::NoContention,
            writers: 1,
            readers: 1,
            overwrite: false,
        };
        let template = RunSpec {
            field_size: C1_FIELD_SIZE,
            ..Default::default()
        };
        let records = orchestrate(dir.path(), backend, pattern, template)?;
        let elapsed = started.elapsed();
        let w = records.iter().find(|r| r.role == Role::Writer).ok_or("no writer record")?;
        let r = records.iter().find(|r| r.role == Role::Reader).ok_or("no reader record")?;
        ensure(w.fields == 2000 && w.flushes == 10, || format!("{backend}: writer {} fields {} flushes", w.fields, w.flushes))?;
        ensure(r.ok && r.fields == 2000 && r.invalid == 0, || format!("{backend}: reader {r:?}"))?;
        ensure(elapsed < C1_TIME_LIMIT, || format!("{backend}: took {elapsed:?}"))?;
        details.push(format!("{backend} 2000/2000 valid in {:.2}s", elapsed.as_secs_f64()));
    }
    Ok(details.join(", "))
}

/// A reader opened after each step's flush finds every field of every step so far.
fn c2() -> Outcome {
    let dir = tempdir();
    let backends: Vec<Box<dyn Backend>> = vec![
        Box::new(EmbeddedKv::new(&dir.path().join("kv"))),
        Box::new(TocBackend { root: dir.path().join("toc") }),
    ];
    let schema = default_schema();
    let ds = DatasetValues::default();
    let mut details = Vec::new();
    for b in &backends {
        let mut writer = b.open(&schema).map_err(|e| e.to_string())?;
        let (mut reads, mut misses) = (0u64, 0u64);
        for step in 0..C2_STEPS {
            for f in 0..C2_FIELDS_PER_STEP {
                let id = ds.identifier(1, f / 4 + 1, step, f % 4);
                writer
                    .archive(&id, &payload::generate(&id.to_string(), 0, 256))
                    .map_err(|e| e.to_string())?;
            }
            writer.flush().map_err(|e| e.to_string())?;
            let mut reader = b.open(&schema).map_err(|e| e.to_string())?;
            for s in 0..=step {
                for f in 0..C2_FIELDS_PER_STEP {
                    let id = ds.identifier(1, f / 4 + 1, s, f % 4);
                    reads += 1;
                    match reader.retrieve(&id).map_err(|e| e.to_string())? {
                        Some(bytes) if payload::verify(&id.to_string(), &bytes).is_ok() => {}
                        _ => misses += 1,
                    }
                }
            }
        }
        ensure(misses == 0, || format!("{}: {misses} misses of {reads}", b.name()))?;
        details.push(format!("{} 0/{reads} misses", b.name()));
    }
    Ok(details.join(", "))
}

/// 8 writers overwriting the identifiers 8 readers are reading.
fn c3() -> Outcome {
    let mut details = Vec::new();
    for backend in [BackendKind::Kv, BackendKind::Toc] {
        let dir = tempdir();
        let pattern = PatternSpec {
            pattern: Pattern::Contention,
            writers: C3_PROCESSES,
            readers: C3_PROCESSES,
            overwrite: true,
        };
        let template = RunSpec {
            nsteps: 5,
            nparams: 5,
            nlevels: 20,
            field_size: C1_FIELD_SIZE,
            passes: 2,
            ..Default::default()
        };
        let records = orchestrate(dir.path(), backend, pattern, template)?;
        let ops: u64 = records.iter().map(|r| r.fields).sum();
        let readers: Vec<&BenchRecord> = records.iter().filter(|r| r.role == Role::Reader).collect();
        ensure(readers.len() == C3_PROCESSES as usize, || format!("{backend}: {} readers", readers.len()))?;
        for r in &readers {
            ensure(r.ok && r.invalid == 0 && r.not_found == 0, || format!("{backend}: reader {} {:?}", r.process, r.error))?;
            ensure(r.versions.keys().all(|v| *v <= 1), || format!("{backend}: unknown versions {:?}", r.versions))?;
        }
        ensure(ops >= C3_MIN_OPS, || format!("{backend}: only {ops} ops"))?;
        let overlap = roles_overlap(&records, "contention", 0);
        ensure(overlap == Some(true), || format!("{backend}: writers and readers did not overlap"))?;
        let new: u64 = readers.iter().map(|r| r.versions.get(&1).copied().unwrap_or(0)).sum();
        details.push(format!("{backend} {ops} ops, 0 torn, {new} reads saw the overwrite"));
    }
    Ok(details.join(", "))
}

/// list against a brute-force filter, kv with and without pruning, and toc.
fn c4() -> Outcome {
    let dir = tempdir();
    let mut details = Vec::new();
    for pruning in [true, false] {
        let kv = EmbeddedKv::new(&dir.path().join("kv"));
        let open = |schema: &fdb_core::Schema, inst: usize| {
            let options = KvCatalogueOptions {
                pool: format!("pool-{pruning}-{inst}"),
                axis_pruning: pruning,
                ..Default::default()
            };
            Fdb::kv(kv.engine.clone(), schema.clone(), options, 64, Arc::new(Profiler::new()))
        };
        let n = testkit::list_oracle(&open, C4_INSTANCES, C4_MAX_FIELDS, C4_REQUESTS, 4)?;
        details.push(format!("kv pruning={pruning} {n} requests"));
    }
    let toc_root = dir.path().join("toc");
    let open = |schema: &fdb_core::Schema, inst: usize| TocBackend { root: toc_root.join(inst.to_string()) }.open(schema);
    let n = testkit::list_oracle(&open, C4_INSTANCES, C4_MAX_FIELDS, C4_REQUESTS, 4)?;
    details.push(format!("toc {n} requests"));
    Ok(details.join(", "))
}

fn c5() -> Outcome {
    let dir = tempdir();
    let report = testkit::toc_concurrent_flushers(dir.path(), C5_FLUSHERS, C5_RECORDS, C5_TRUNCATIONS, 5)?;
    ensure(report.records == C5_FLUSHERS * C5_RECORDS, || format!("{} records", report.records))?;
    Ok(format!(
        "{} records parsed, {} truncations left parseable prefixes",
        report.records, report.truncations
    ))
}

/// Cuts alternate between the commit log and the value log, so twice as
/// many trials give the required number of commit-log cuts.
fn c6() -> Outcome {
    let dir = tempdir();
    let report = testkit::crash_consistency(dir.path(), 400, 2 * C6_COMMIT_LOG_CUTS, 6)?;
    Ok(format!(
        "{} commit-log + {} value-log cuts recovered to a commit prefix ({} distinct prefixes)",
        C6_COMMIT_LOG_CUTS, C6_COMMIT_LOG_CUTS, report.distinct_prefixes
    ))
}

/// 16 `fdb alloc-oids` processes against one server.
fn c7() -> Outcome {
    let dir = tempdir();
    let server = serve_root(dir.path(), "127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = server.local_addr().to_string();
    let children: Vec<_> = (0..C7_ALLOCATORS)
        .map(|_| {
            Command::new(FDB)
                .args(["alloc-oids", "--engine", &addr, "--count", &C7_OIDS.to_string(), "--batch", "1"])
                .stdout(Stdio::piped())
                .spawn()
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut all = BTreeSet::new();
    let mut total = 0;
    for c in children {
        let out = c.wait_with_output().map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("allocator exited {}", out.status))?;
        for line in String::from_utf8_lossy(&out.stdout).lines() {
            total += 1;
            all.insert(line.to_string());
        }
    }
    ensure(total == C7_ALLOCATORS * C7_OIDS, || format!("{total} oids printed"))?;
    ensure(all.len() == total, || format!("{} distinct of {total}", all.len()))?;
    ensure(!all.contains("0.0"), || "entry oid handed out".into())?;
    Ok(format!("{} distinct, (0,0) absent", all.len()))
}

fn count_files(dir: &Path, suffix: &str) -> usize {
    let mut n = 0;
    for e in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let p = e.path();
        if p.is_dir() {
            n += count_files(&p, suffix);
        } else if p.to_string_lossy().ends_with(suffix) {
            n += 1;
        }
    }
    n
}

fn populate(fdb: &mut Fdb, nsteps: u32, nparams: u32, nlevels: u32) -> Result<u64, String> {
    let spec = RunSpec {
        nsteps,
        nparams,
        nlevels,
        field_size: 64,
        ..Default::default()
    };
    let per_step = (nparams * nlevels) as usize;
    for (i, (s, m, l, p)) in spec.sequence().enumerate() {
        let id = spec.dataset.identifier(m, l, s, p);
        fdb.archive(&id, &payload::generate(&id.to_string(), 0, 64)).map_err(|e| e.to_string())?;
        if (i + 1) % per_step == 0 {
            fdb.flush().map_err(|e| e.to_string())?;
        }
    }
    Ok(spec.fields())
}

fn measure(profiler: &Profiler, f: impl FnOnce() -> Result<(), String>) -> Result<Profile, String> {
    let before = profiler.snapshot();
    f()?;
    Ok(profiler.snapshot().since(&before))
}

fn c8() -> Outcome {
    let dir = tempdir();
    let schema = default_schema();
    let ds = DatasetValues::default();
    let id = ds.identifier(1, 1, 0, 0);

    // warm kv retrieve
    let kv = EmbeddedKv::new(&dir.path().join("kv"));
    let prof = Arc::new(Profiler::new());
    let mut fdb = kv.open_profiled(&schema, prof.clone()).map_err(|e| e.to_string())?;
    let n = populate(&mut fdb, 3, 4, 5)?;
    fdb.retrieve(&id).map_err(|e| e.to_string())?;
    let warm = measure(&prof, || fdb.retrieve(&id).map(drop).map_err(|e| e.to_string()))?;
    ensure(
        warm.ops(Category::KvGet) == 1 && warm.ops(Category::ArrayRead) == 1 && warm.total_ops() == 2,
        || format!("warm kv retrieve ops {warm:?}"),
    )?;

    // kv list: at least one get per entry
    let mut lister = kv.open_profiled(&schema, prof.clone()).map_err(|e| e.to_string())?;
    let mut listed = 0;
    let kv_list = measure(&prof, || {
        listed = lister.list(&Request::all()).map_err(|e| e.to_string())?.len() as u64;
        Ok(())
    })?;
    ensure(listed == n && kv_list.ops(Category::KvGet) >= n, || format!("kv list {listed} entries, {kv_list:?}"))?;

    // toc: record parses grow with the TOC, list reads at most one read per blob
    let toc_root = dir.path().join("toc");
    let toc = TocBackend { root: toc_root.clone() };
    let mut writer = toc.open(&schema).map_err(|e| e.to_string())?;
    let mut parses = Vec::new();
    for round in 1..=4u32 {
        for _ in 0..5 {
            writer
                .archive(&id, &payload::generate(&id.to_string(), round as u64, 64))
                .map_err(|e| e.to_string())?;
            writer.flush().map_err(|e| e.to_string())?;
        }
        let prof = Arc::new(Profiler::new());
        let mut reader = toc.open_profiled(&schema, prof.clone()).map_err(|e| e.to_string())?;
        let p = measure(&prof, || reader.retrieve(&id).map(drop).map_err(|e| e.to_string()))?;
        let records = 1 + 5 * round as u64;
        ensure(p.ops(Category::TocRecord) >= records, || format!("{} parses for {records} records", p.ops(Category::TocRecord)))?;
        parses.push(p.ops(Category::TocRecord));
    }
    ensure(parses.windows(2).all(|w| w[1] > w[0]), || format!("parses not growing: {parses:?}"))?;

    let toc2 = TocBackend { root: dir.path().join("toc2") };
    let mut w = toc2.open(&schema).map_err(|e| e.to_string())?;
    populate(&mut w, 3, 4, 5)?;
    let blobs = count_files(&toc2.root, ".index") as u64;
    let prof = Arc::new(Profiler::new());
    let mut lister = toc2.open_profiled(&schema, prof.clone()).map_err(|e| e.to_string())?;
    let mut listed = 0;
    let toc_list = measure(&prof, || {
        listed = lister.list(&Request::all()).map_err(|e| e.to_string())?.len() as u64;
        Ok(())
    })?;
    ensure(listed == n && toc_list.ops(Category::IndexBlobRead) <= blobs, || {
        format!("toc list {listed} entries, {} blob reads, {blobs} blobs", toc_list.ops(Category::IndexBlobRead))
    })?;
    Ok(format!(
        "kv warm retrieve 1 get + 1 read; toc parses {parses:?} for 6/11/16/21 records; list {n} entries: kv {} gets, toc {} blob reads of {blobs} blobs",
        kv_list.ops(Category::KvGet),
        toc_list.ops(Category::IndexBlobRead)
    ))
}

fn synthetic(process: u32, start_s: u64, end_s: u64, bytes: u64) -> BenchRecord {
    BenchRecord {
        process,
        role: Role::Writer,
        phase: "write".into(),
        repetition: 0,
        backend: "kv".into(),
        pattern: "no_contention".into(),
        start_ns: start_s * 1_000_000_000,
        end_ns: end_s * 1_000_000_000,
        bytes,
        fields: 0,
        flushes: 0,
        not_found: 0,
        invalid: 0,
        versions: Default::default(),
        ok: true,
        error: None,
        profile: Default::default(),
    }
}

fn c9() -> Outcome {
    let mib = 1u64 << 20;
    let mut records = vec![synthetic(0, 0, 10, 2000 * mib), synthetic(1, 1, 11, 2000 * mib)];
    let s = aggregate(&records).map_err(|e| e.to_string())?;
    let got = format_mib_s(s[0].bandwidth);
    ensure(got == C9_EXPECTED, || format!("{got} MiB/s"))?;
    let one = aggregate(&[synthetic(0, 0, 1, 1)]).map_err(|e| e.to_string())?;
    ensure(one[0].bandwidth == 1.0, || format!("{} B/s", one[0].bandwidth))?;
    let mut rng = rand::rngs::StdRng::seed_from_u64(9);
    records.extend((2..10).map(|i| synthetic(i, i as u64, 20 + i as u64, i as u64 * mib)));
    let base = aggregate(&records).map_err(|e| e.to_string())?;
    for _ in 0..20 {
        records.shuffle(&mut rng);
        ensure(aggregate(&records).map_err(|e| e.to_string())? == base, || "order dependent".into())?;
    }
    Ok(format!("4000 MiB / 11 s = {got} MiB/s; 1 B / 1 s = 1 B/s; shuffle-invariant"))
}

fn c10() -> Outcome {
    let dir = tempdir();
    let mut names = Vec::new();
    for b in testkit::all_backends(dir.path()) {
        testkit::fdb_semantics(b.as_ref());
        names.push(b.name());
    }
    Ok(format!("suite passed on {}", names.join(", ")))
}

fn c11() -> Outcome {
    use proptest::prelude::*;
    use proptest::test_runner::{Config as PtConfig, TestRunner};
    let mut runner = TestRunner::new(PtConfig {
        cases: C11_FRAMES,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let strategy = (any::<u8>(), any::<u64>(), proptest::collection::vec(any::<u8>(), 0..512));
    runner
        .run(&strategy, |(opcode, rid, payload)| {
            let f = Frame::new(opcode, rid, payload);
            let bytes = f.encode();
            let n = bytes.len();
            prop_assert_eq!(Frame::decode(&bytes).unwrap(), Decoded::Complete { frame: f.clone(), consumed: n });
            let cut = n / 2;
            let partial = matches!(Frame::decode(&bytes[..cut]), Ok(Decoded::Incomplete { .. }));
            prop_assert!(partial, "prefix of {} bytes not incomplete", cut);
            prop_assert_eq!(read_frame(&mut &bytes[..]).unwrap(), Some(f));
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let dir = tempdir();
    let server = serve_root(dir.path(), "127.0.0.1:0").map_err(|e| e.to_string())?;
    let connect = || {
        let s = TcpStream::connect(server.local_addr()).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        s
    };
    // oversized length prefix: bad-request with request id 0, then close
    let mut c = connect();
    c.write_all(&(MAX_FRAME_LEN + 1).to_le_bytes()).map_err(|e| e.to_string())?;
    let resp = read_frame(&mut c).map_err(|e| e.to_string())?.ok_or("no response")?;
    ensure(
        resp.request_id == 0 && Status::from_u8(resp.payload[0]) == Some(Status::BadRequest),
        || format!("oversized frame answered with {resp:?}"),
    )?;
    let mut rest = Vec::new();
    ensure(c.read_to_end(&mut rest).map(|n| n == 0).unwrap_or(false), || "connection left open".into())?;
    // truncated frame then hang-up; the server keeps serving
    {
        let mut c = connect();
        let bytes = Frame::new(proto::PING, 1, vec![0; 32]).encode();
        c.write_all(&bytes[..bytes.len() - 5]).map_err(|e| e.to_string())?;
    }
    RemoteEngine::connect(server.local_addr()).and_then(|r| r.ping()).map_err(|e| e.to_string())?;
    Ok(format!("{C11_FRAMES} random frames round-trip; oversized -> bad request + close; truncated -> server healthy"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("C1", "round trip, 1 writer x 2000 fields", c1),
        ("C2", "flush visibility barrier", c2),
        ("C3", "contention consistency", c3),
        ("C4", "list oracle", c4),
        ("C5", "toc append atomicity", c5),
        ("C6", "engine crash consistency", c6),
        ("C7", "oid uniqueness across processes", c7),
        ("C8", "read-path asymmetry", c8),
        ("C9", "bandwidth arithmetic", c9),
        ("C10", "backend interchangeability", c10),
        ("C11", "wire robustness", c11),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('C')).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("{id:<4} PASS  {name} ({secs:.1}s): {d}"),
            Err(e) => {
                failed += 1;
                println!("{id:<4} FAIL  {name} ({secs:.1}s): {e}");
            }
        }
        let _ = std::io::stdout().flush();
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all criteria passed");
        ExitCode::SUCCESS
    }
}
