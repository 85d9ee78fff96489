use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use fdb_core::config::{BackendKind, Config};
use fdb_core::engine::open_shared;
use fdb_core::profile::Category;
use fdb_core::testkit::{Backend, TocBackend};
use fdb_core::Fdb;
use fdb_hammer::aggregate::{self, bandwidth};
use fdb_hammer::ids::default_schema;
use fdb_hammer::orchestrate::Orchestrator;
use fdb_hammer::record::Role;
use fdb_hammer::spec::{Mode, Pattern, PatternSpec, RunSpec};
use fdb_hammer::worker::{run_list_bench, run_worker, Labels};

const HAMMER: &str = env!("CARGO_BIN_EXE_fdb-hammer");
const FDB: &str = env!("CARGO_BIN_EXE_fdb");

fn toc(root: &Path) -> impl Fn(Arc<fdb_core::profile::Profiler>) -> fdb_core::Result<Fdb> + '_ {
    move |p| TocBackend { root: root.to_owned() }.open_profiled(&default_schema(), p)
}

fn shape(mode: Mode, nsteps: u32, nparams: u32, nlevels: u32, field_size: usize) -> RunSpec {
    RunSpec {
        mode,
        nsteps,
        nparams,
        nlevels,
        field_size,
        ..Default::default()
    }
}

#[test]
fn worker_counts_follow_the_loops() {
    let dir = tempfile::tempdir().unwrap();
    let labels = Labels::default();
    let rec = run_worker(&shape(Mode::Archive, 10, 10, 20, 64), &labels, toc(dir.path()));
    assert!(rec.ok, "{:?}", rec.error);
    assert_eq!((rec.fields, rec.flushes, rec.bytes), (2000, 10, 2000 * 64));
    assert!(rec.end_ns >= rec.start_ns);
    assert!(rec.profile.timed_nanos() <= rec.wall_ns(), "category time exceeds wall time");

    let rec = run_worker(&shape(Mode::Archive, 100, 10, 10, 16), &labels, toc(&dir.path().join("big")));
    assert_eq!((rec.fields, rec.flushes), (10000, 100));

    let rec = run_worker(&shape(Mode::Retrieve, 10, 10, 20, 64), &labels, toc(dir.path()));
    assert!(rec.ok);
    assert_eq!(rec.fields, 2000);
    assert_eq!(rec.versions.get(&0), Some(&2000));
}

#[test]
fn retrieve_from_empty_store_fails_with_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run_worker(&shape(Mode::Retrieve, 1, 1, 1, 64), &Labels::default(), toc(dir.path()));
    assert!(!rec.ok);
    assert_eq!(rec.not_found, 1);
    assert!(rec.error.unwrap().contains("not found"));
}

#[test]
fn kv_worker_category_time_fits_in_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let engine = open_shared(dir.path()).unwrap();
    let open = |p| Fdb::kv(engine.clone(), default_schema(), Default::default(), 64, p);
    let rec = run_worker(&shape(Mode::Archive, 2, 5, 5, 256), &Labels::default(), open);
    assert!(rec.ok);
    assert!(rec.profile.timed_nanos() <= rec.wall_ns());
    assert_eq!(rec.profile.ops(Category::ArrayWrite), 50);
}

#[test]
fn list_bench_counts_first_step_across_members() {
    let dir = tempfile::tempdir().unwrap();
    let labels = Labels::default();
    let empty = run_list_bench(&RunSpec::default(), &labels, toc(dir.path()));
    assert!(empty.ok);
    assert_eq!(empty.fields, 0);
    for m in 0..4 {
        let spec = RunSpec {
            member: m,
            field_size: 16,
            ..Default::default()
        };
        assert!(run_worker(&spec, &labels, toc(dir.path())).ok);
    }
    let listed = run_list_bench(&RunSpec::default(), &labels, toc(dir.path()));
    assert_eq!(listed.fields, 4 * 200);
}

fn orchestrator(dir: &Path, backend: BackendKind, pattern: PatternSpec, template: RunSpec) -> Orchestrator {
    Orchestrator {
        exe: HAMMER.into(),
        config: Config::new(backend, dir.join("store")),
        template,
        pattern,
        output_dir: dir.join("out"),
        repetitions: 1,
    }
}

#[test]
fn no_contention_phases_do_not_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = PatternSpec {
        pattern: Pattern::NoContention,
        writers: 4,
        readers: 4,
        overwrite: false,
    };
    let records = orchestrator(dir.path(), BackendKind::Toc, pattern, shape(Mode::Archive, 2, 3, 4, 128))
        .run()
        .unwrap();
    assert_eq!(records.len(), 8);
    assert!(records.iter().all(|r| r.ok && r.fields == 24));
    assert!(aggregate::phases_ordered(&records, "write", "read"));
    let summaries = aggregate::aggregate(&records).unwrap();
    let writers = summaries.iter().find(|s| s.role == Role::Writer).unwrap();
    let (bytes, nanos) = aggregate::global_timing(&records[..4]).unwrap();
    assert_eq!(writers.bytes, 4 * 24 * 128);
    assert_eq!(writers.bandwidth, bandwidth(bytes, nanos));
    assert!(dir.path().join("out/records.jsonl").exists());
}

#[test]
fn contention_readers_see_whole_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = PatternSpec {
        pattern: Pattern::Contention,
        writers: 2,
        readers: 2,
        overwrite: true,
    };
    let records = orchestrator(dir.path(), BackendKind::Kv, pattern, shape(Mode::Archive, 3, 4, 5, 512))
        .run()
        .unwrap();
    assert_eq!(records.len(), 6);
    for r in records.iter().filter(|r| r.role == Role::Reader) {
        assert!(r.ok, "{:?}", r.error);
        assert_eq!(r.invalid, 0);
        assert!(r.versions.keys().all(|v| *v <= 1));
        assert_eq!(r.versions.values().sum::<u64>(), 60);
    }
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(HAMMER)
        .args(["--backend", "toc", "--pattern", "no-contention", "--processes", "2", "--repeat", "1"])
        .args(["--nsteps", "2", "--nparams", "2", "--nlevels", "2", "--field-size", "64"])
        .arg("--root")
        .arg(dir.path().join("store"))
        .arg("--output-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("out/bandwidth-writer.svg").exists());
    assert!(dir.path().join("out/profile.svg").exists());

    let bad = Command::new(HAMMER)
        .args(["--backend", "toc", "--pattern", "contention", "--processes", "0", "--readers", "0"])
        .arg("--root")
        .arg(dir.path().join("store"))
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("usage"));
}

#[test]
fn fdb_put_get_list() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("store");
    let id = "class=od,stream=oper,expver=0001,date=20231201,time=1200,type=ef,levtype=ml,number=1,levelist=1,step=0,param=129";
    let fdb = |args: &[&str]| {
        Command::new(FDB)
            .args(["--backend", "toc", "--root"])
            .arg(&root)
            .args(args)
            .output()
            .unwrap()
    };
    let payload = dir.path().join("payload");
    std::fs::write(&payload, b"hello field").unwrap();
    assert!(fdb(&["put", id, "--file", payload.to_str().unwrap()]).status.success());
    let got = fdb(&["get", id]);
    assert!(got.status.success());
    assert_eq!(got.stdout, b"hello field");
    let listed = fdb(&["list", "step=0"]);
    let text = String::from_utf8(listed.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with(id));
    assert!(!fdb(&["get", &id.replace("step=0", "step=1")]).status.success());
}

#[test]
fn fdb_serve_and_alloc_oids() {
    use std::io::{BufRead, BufReader};
    let dir = tempfile::tempdir().unwrap();
    let mut server = Command::new(FDB)
        .args(["serve", "--bind", "127.0.0.1:0", "--root"])
        .arg(dir.path())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let out = Command::new(FDB)
        .args(["alloc-oids", "--engine", &addr, "--count", "50", "--batch", "7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let oids: std::collections::BTreeSet<String> = String::from_utf8(out.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(oids.len(), 50);
    assert!(!oids.contains("0.0"));
    fdb_core::wire::RemoteEngine::connect(addr.as_str())
        .unwrap()
        .shutdown_server()
        .unwrap();
    assert!(server.wait().unwrap().success());
}
