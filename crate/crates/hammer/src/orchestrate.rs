//! Runs access patterns as independent worker processes on one host.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use fdb_core::config::{BackendKind, Config};
use fdb_core::wire::{serve_root, Server};

use crate::error::{HammerError, Result};
use crate::record::{self, BenchRecord, Role};
use crate::spec::{Mode, Pattern, PatternSpec, RunSpec};

/// Name of the JSON-lines file collecting every worker's record.
pub const RECORDS_FILE: &str = "records.jsonl";

pub struct Orchestrator {
    /// The `fdb-hammer` executable, run once per worker.
    pub exe: PathBuf,
    pub config: Config,
    /// Shape of every worker; member, process, mode and version are set per worker.
    pub template: RunSpec,
    pub pattern: PatternSpec,
    pub output_dir: PathBuf,
    /// Each repetition writes its own dataset (distinct `expver`).
    pub repetitions: u32,
}

/// One group of workers started together.
struct Phase {
    name: &'static str,
    workers: Vec<RunSpec>,
}

impl Orchestrator {
    fn phases(&self, repetition: u32) -> Vec<Phase> {
        let t = &self.template;
        let (w, r) = (self.pattern.writers, self.pattern.readers);
        let mut dataset = t.dataset.clone();
        if self.repetitions > 1 {
            dataset.expver = format!("{:04}", repetition + 1);
        }
        let worker = |process: u32, mode: Mode, member: u32, version: u64| RunSpec {
            mode,
            process,
            member,
            version,
            transpose: if mode == Mode::Retrieve { t.transpose } else { 0 },
            dataset: dataset.clone(),
            ..t.clone()
        };
        match self.pattern.pattern {
            Pattern::NoContention => vec![
                Phase {
                    name: "write",
                    workers: (0..w).map(|i| worker(i, Mode::Archive, t.member + i, t.version)).collect(),
                },
                Phase {
                    name: "read",
                    workers: (0..r)
                        .map(|i| worker(w + i, Mode::Retrieve, t.member + i % w, t.version))
                        .collect(),
                },
            ],
            Pattern::Contention => {
                let target = |i: u32| match self.pattern.overwrite {
                    true => t.member + i % r,
                    false => t.member + r + i,
                };
                vec![
                    Phase {
                        name: "prepopulate",
                        workers: (0..r).map(|i| worker(i, Mode::Archive, t.member + i, t.version)).collect(),
                    },
                    Phase {
                        name: "contention",
                        workers: (0..w)
                            .map(|i| worker(r + i, Mode::Archive, target(i), t.version + 1))
                            .chain((0..r).map(|i| worker(r + w + i, Mode::Retrieve, t.member + i, t.version)))
                            .collect(),
                    },
                ]
            }
        }
    }

    /// Runs every phase of every repetition and returns all records, which
    /// also replace the contents of `<output_dir>/records.jsonl`. A failed worker
    /// stops the run after its phase; records gathered so far are kept.
    pub fn run(&self) -> Result<Vec<BenchRecord>> {
        self.pattern.validate()?;
        self.template.validate()?;
        if self.repetitions == 0 {
            return Err(HammerError::Usage("repetitions must be positive".into()));
        }
        std::fs::create_dir_all(&self.output_dir)
            .map_err(HammerError::io(format!("create {}", self.output_dir.display())))?;
        let (config, _server) = self.worker_config()?;
        let config_path = self.output_dir.join("worker.toml");
        std::fs::write(&config_path, config.to_toml())
            .map_err(HammerError::io(format!("write {}", config_path.display())))?;
        let records_path = self.output_dir.join(RECORDS_FILE);
        match std::fs::remove_file(&records_path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
                return Err(HammerError::io(format!("remove {}", records_path.display()))(e))
            }
            _ => {}
        }

        let mut all = Vec::new();
        for repetition in 0..self.repetitions {
            for phase in self.phases(repetition) {
                if phase.workers.is_empty() {
                    continue;
                }
                let mut records = self.run_phase(&phase, &config_path);
                for r in &mut records {
                    r.phase = phase.name.to_string();
                    r.pattern = self.pattern.pattern.as_str().to_string();
                    r.backend = self.config.backend.to_string();
                    r.repetition = repetition;
                }
                record::append(&records_path, &records)?;
                let failed: Vec<&BenchRecord> = records.iter().filter(|r| !r.ok).collect();
                let total = records.len();
                if let Some(first) = failed.first() {
                    return Err(HammerError::WorkerFailed {
                        phase: phase.name.to_string(),
                        failed: failed.len(),
                        total,
                        first: first.error.clone().unwrap_or_default(),
                    });
                }
                all.extend(records);
            }
        }
        Ok(all)
    }

    /// The configuration workers load. kv workers cannot share an embedded
    /// engine across processes, so without an `engine_address` one is served
    /// from here for the duration of the run.
    fn worker_config(&self) -> Result<(Config, Option<Server>)> {
        let mut config = self.config.clone();
        config.validate()?;
        if let Some(root) = &mut config.storage_root {
            *root = std::path::absolute(&*root).map_err(HammerError::io("resolve storage root"))?;
        }
        if let Some(schema) = &mut config.schema {
            *schema = std::path::absolute(&*schema).map_err(HammerError::io("resolve schema path"))?;
        }
        if config.backend == BackendKind::Kv && config.engine_address.is_none() {
            let root = config.storage_root.take().expect("validated");
            let server = serve_root(&root, "127.0.0.1:0")?;
            config.engine_address = Some(server.local_addr().to_string());
            return Ok((config, Some(server)));
        }
        Ok((config, None))
    }

    fn run_phase(&self, phase: &Phase, config_path: &Path) -> Vec<BenchRecord> {
        let children: Vec<_> = phase
            .workers
            .iter()
            .map(|spec| {
                let child = Command::new(&self.exe)
                    .arg("--config")
                    .arg(config_path)
                    .arg("--run-spec")
                    .arg(serde_json::to_string(spec).expect("spec serialises"))
                    .stdin(Stdio::null())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::piped())
                    .spawn();
                (spec, child)
            })
            .collect();
        children
            .into_iter()
            .map(|(spec, child)| {
                let output = child.and_then(|c| c.wait_with_output());
                let (line, detail) = match &output {
                    Ok(o) => (
                        String::from_utf8_lossy(&o.stdout).lines().last().map(str::to_string),
                        format!("{}: {}", o.status, String::from_utf8_lossy(&o.stderr).trim()),
                    ),
                    Err(e) => (None, format!("spawn {}: {e}", self.exe.display())),
                };
                match line.as_deref().map(record::parse_line) {
                    Some(Ok(r)) => r,
                    _ => failed_record(spec, detail),
                }
            })
            .collect()
    }
}

/// Stand-in for a worker that died without reporting.
fn failed_record(spec: &RunSpec, detail: String) -> BenchRecord {
    let now = record::monotonic_ns();
    BenchRecord {
        process: spec.process,
        role: Role::of(spec.mode),
        phase: String::new(),
        repetition: 0,
        backend: String::new(),
        pattern: String::new(),
        start_ns: now,
        end_ns: now,
        bytes: 0,
        fields: 0,
        flushes: 0,
        not_found: 0,
        invalid: 0,
        versions: Default::default(),
        ok: false,
        error: Some(format!("worker produced no record ({detail})")),
        profile: Default::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orch(pattern: Pattern, writers: u32, readers: u32, overwrite: bool) -> Orchestrator {
        Orchestrator {
            exe: "unused".into(),
            config: Config::new(BackendKind::Toc, "unused"),
            template: RunSpec::default(),
            pattern: PatternSpec {
                pattern,
                writers,
                readers,
                overwrite,
            },
            output_dir: "unused".into(),
            repetitions: 1,
        }
    }

    #[test]
    fn no_contention_readers_follow_writers() {
        let phases = orch(Pattern::NoContention, 2, 3, false).phases(0);
        let members = |p: &Phase| p.workers.iter().map(|w| (w.mode, w.member, w.process)).collect::<Vec<_>>();
        assert_eq!(members(&phases[0]), [(Mode::Archive, 1, 0), (Mode::Archive, 2, 1)]);
        assert_eq!(
            members(&phases[1]),
            [(Mode::Retrieve, 1, 2), (Mode::Retrieve, 2, 3), (Mode::Retrieve, 1, 4)]
        );
    }

    #[test]
    fn contention_ranges() {
        let fresh = orch(Pattern::Contention, 2, 2, false).phases(0);
        assert_eq!(fresh[0].name, "prepopulate");
        let c: Vec<_> = fresh[1].workers.iter().map(|w| (w.mode, w.member, w.version)).collect();
        assert_eq!(
            c,
            [
                (Mode::Archive, 3, 1),
                (Mode::Archive, 4, 1),
                (Mode::Retrieve, 1, 0),
                (Mode::Retrieve, 2, 0)
            ]
        );
        let over = orch(Pattern::Contention, 2, 2, true).phases(0);
        assert_eq!(over[1].workers[0].member, 1);
        assert_eq!(over[1].workers[1].member, 2);
        let procs: std::collections::BTreeSet<u32> = over[1].workers.iter().map(|w| w.process).collect();
        assert_eq!(procs.len(), 4);
    }

    #[test]
    fn zero_processes_is_a_usage_error() {
        assert!(matches!(
            orch(Pattern::NoContention, 0, 0, false).run(),
            Err(HammerError::Usage(_))
        ));
    }
}
