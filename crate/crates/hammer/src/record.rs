//! Per-process timing records, one JSON object per line.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use fdb_core::profile::Profile;
use serde::{Deserialize, Serialize};

use crate::error::{HammerError, Result};
use crate::spec::Mode;

/// Nanoseconds on the host-wide monotonic clock, comparable across processes.
pub fn monotonic_ns() -> u64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid out-pointer and CLOCK_MONOTONIC always exists on Linux.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_MONOTONIC, &mut ts) };
    assert_eq!(rc, 0, "clock_gettime(CLOCK_MONOTONIC) failed");
    ts.tv_sec as u64 * 1_000_000_000 + ts.tv_nsec as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Writer,
    Reader,
    Lister,
}

impl Role {
    pub fn of(mode: Mode) -> Self {
        match mode {
            Mode::Archive => Role::Writer,
            Mode::Retrieve => Role::Reader,
            Mode::List => Role::Lister,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Writer => "writer",
            Role::Reader => "reader",
            Role::Lister => "lister",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub process: u32,
    pub role: Role,
    /// Orchestration phase the process ran in ("write", "read", ...).
    pub phase: String,
    /// Which repetition of an orchestrated run this belongs to.
    #[serde(default)]
    pub repetition: u32,
    pub backend: String,
    pub pattern: String,
    pub start_ns: u64,
    pub end_ns: u64,
    /// Payload bytes archived or retrieved.
    pub bytes: u64,
    /// Fields archived or retrieved, or entries listed.
    pub fields: u64,
    pub flushes: u64,
    pub not_found: u64,
    pub invalid: u64,
    /// Retrieved payload count per version.
    #[serde(default)]
    pub versions: BTreeMap<u64, u64>,
    pub ok: bool,
    #[serde(default)]
    pub error: Option<String>,
    pub profile: Profile,
}

impl BenchRecord {
    pub fn wall_ns(&self) -> u64 {
        self.end_ns.saturating_sub(self.start_ns)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialise")
    }
}

pub fn append(path: &Path, records: &[BenchRecord]) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(HammerError::io(format!("open {}", path.display())))?;
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    f.write_all(text.as_bytes())
        .map_err(HammerError::io(format!("write {}", path.display())))
}

pub fn read_all(path: &Path) -> Result<Vec<BenchRecord>> {
    let f = std::fs::File::open(path).map_err(HammerError::io(format!("open {}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(HammerError::io(format!("read {}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line).map_err(|reason| HammerError::BadRecord {
            path: path.to_owned(),
            reason: format!("line {}: {reason}", n + 1),
        })?);
    }
    Ok(out)
}

pub fn parse_line(line: &str) -> std::result::Result<BenchRecord, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_moves_forward() {
        let a = monotonic_ns();
        let b = monotonic_ns();
        assert!(b >= a && a > 0);
    }

    #[test]
    fn json_line_round_trip() {
        let mut r = BenchRecord {
            process: 3,
            role: Role::Reader,
            phase: "read".into(),
            repetition: 0,
            backend: "toc".into(),
            pattern: "no_contention".into(),
            start_ns: 1,
            end_ns: 5,
            bytes: 10,
            fields: 2,
            flushes: 0,
            not_found: 0,
            invalid: 0,
            versions: BTreeMap::new(),
            ok: true,
            error: None,
            profile: Profile::default(),
        };
        r.versions.insert(1, 2);
        let line = r.to_line();
        assert!(!line.contains('\n'));
        assert_eq!(parse_line(&line).unwrap(), r);
    }
}
