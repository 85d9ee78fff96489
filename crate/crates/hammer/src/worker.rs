//! One benchmark process: archive, retrieve or list, timed end to end.

use std::collections::BTreeMap;
use std::sync::Arc;

use fdb_core::profile::Profiler;
use fdb_core::Fdb;

use crate::ids::step_request;
use crate::payload;
use crate::record::{monotonic_ns, BenchRecord, Role};
use crate::spec::{Mode, RunSpec};

/// Labels copied into the record; they do not affect what the worker does.
#[derive(Debug, Clone, Default)]
pub struct Labels {
    pub backend: String,
    pub pattern: String,
    pub phase: String,
}

/// Runs `spec` against the session `open` returns. Opening counts as I/O, so
/// the timed interval starts before it. Any failure stops the run and yields
/// a record with `ok == false` and the counts reached so far.
pub fn run_worker(
    spec: &RunSpec,
    labels: &Labels,
    open: impl FnOnce(Arc<Profiler>) -> fdb_core::Result<Fdb>,
) -> BenchRecord {
    let profiler = Arc::new(Profiler::new());
    let mut rec = BenchRecord {
        process: spec.process,
        role: Role::of(spec.mode),
        phase: labels.phase.clone(),
        repetition: 0,
        backend: labels.backend.clone(),
        pattern: labels.pattern.clone(),
        start_ns: monotonic_ns(),
        end_ns: 0,
        bytes: 0,
        fields: 0,
        flushes: 0,
        not_found: 0,
        invalid: 0,
        versions: BTreeMap::new(),
        ok: true,
        error: None,
        profile: Default::default(),
    };
    let outcome = spec
        .validate()
        .map_err(|e| e.to_string())
        .and_then(|()| open(profiler.clone()).map_err(|e| format!("open: {e}")))
        .and_then(|mut fdb| match spec.mode {
            Mode::Archive => archive(spec, &mut fdb, &mut rec),
            Mode::Retrieve => retrieve(spec, &mut fdb, &mut rec),
            Mode::List => list(spec, &mut fdb, &mut rec),
        });
    rec.end_ns = monotonic_ns();
    rec.profile = profiler.snapshot();
    if let Err(e) = outcome {
        rec.ok = false;
        rec.error = Some(e);
    }
    rec
}

fn archive(spec: &RunSpec, fdb: &mut Fdb, rec: &mut BenchRecord) -> Result<(), String> {
    let per_step = (spec.nparams * spec.nlevels) as usize;
    for (i, (step, member, level, param)) in spec.sequence().enumerate() {
        let id = spec.dataset.identifier(member, level, step, param);
        let text = id.to_string();
        let data = payload::generate(&text, spec.version, spec.field_size);
        fdb.archive(&id, &data).map_err(|e| format!("archive {text}: {e}"))?;
        rec.fields += 1;
        rec.bytes += data.len() as u64;
        if (i + 1) % per_step == 0 {
            fdb.flush().map_err(|e| format!("flush after step {step}: {e}"))?;
            rec.flushes += 1;
        }
    }
    Ok(())
}

fn retrieve(spec: &RunSpec, fdb: &mut Fdb, rec: &mut BenchRecord) -> Result<(), String> {
    for _ in 0..spec.passes {
        for (step, member, level, param) in spec.sequence() {
            let id = spec.dataset.identifier(member, level, step, param);
            let text = id.to_string();
            let Some(data) = fdb.retrieve(&id).map_err(|e| format!("retrieve {text}: {e}"))? else {
                rec.not_found += 1;
                return Err(format!("not found: {text}"));
            };
            match payload::verify(&text, &data) {
                Ok(v) => *rec.versions.entry(v).or_default() += 1,
                Err(e) => {
                    rec.invalid += 1;
                    return Err(format!("invalid payload for {text}: {e}"));
                }
            }
            rec.fields += 1;
            rec.bytes += data.len() as u64;
        }
    }
    Ok(())
}

/// Lists every field of the first step, across all members.
fn list(spec: &RunSpec, fdb: &mut Fdb, rec: &mut BenchRecord) -> Result<(), String> {
    let entries = fdb
        .list(&step_request(spec.first_step))
        .map_err(|e| format!("list: {e}"))?;
    rec.fields = entries.len() as u64;
    Ok(())
}

/// The list benchmark: a worker in list mode.
pub fn run_list_bench(
    spec: &RunSpec,
    labels: &Labels,
    open: impl FnOnce(Arc<Profiler>) -> fdb_core::Result<Fdb>,
) -> BenchRecord {
    let spec = RunSpec {
        mode: Mode::List,
        ..spec.clone()
    };
    run_worker(&spec, labels, open)
}
