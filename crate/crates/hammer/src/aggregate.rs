//! Global timing bandwidth and profile totals over worker records.

use std::collections::BTreeMap;

use fdb_core::profile::{CategoryStat, Profile};

use crate::error::{HammerError, Result};
use crate::record::{BenchRecord, Role};

pub const MIB: f64 = 1024.0 * 1024.0;

/// Totals for one (backend, pattern, phase, role) group, averaged over
/// repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub backend: String,
    pub pattern: String,
    pub phase: String,
    pub role: Role,
    pub repetitions: u32,
    /// Per repetition.
    pub processes: u64,
    pub fields: u64,
    pub bytes: u64,
    /// Mean global-timing interval, first start to last end.
    pub seconds: f64,
    /// Mean of the per-repetition `bytes / seconds`.
    pub bandwidth: f64,
    /// Summed over processes, averaged over repetitions.
    pub profile: Profile,
}

impl Summary {
    /// Label for the role column; prepopulation writers are kept apart from
    /// measured writers.
    pub fn role_label(&self) -> String {
        match self.phase.as_str() {
            "prepopulate" => "prepopulate".to_string(),
            _ => self.role.as_str().to_string(),
        }
    }

    pub fn bandwidth_mib_s(&self) -> f64 {
        self.bandwidth / MIB
    }
}

/// Global timing over `records`: total bytes, and the interval from the
/// earliest start to the latest end.
pub fn global_timing(records: &[BenchRecord]) -> Result<(u64, u64)> {
    let start = records.iter().map(|r| r.start_ns).min().ok_or(HammerError::NoRecords)?;
    let end = records.iter().map(|r| r.end_ns).max().ok_or(HammerError::NoRecords)?;
    Ok((records.iter().map(|r| r.bytes).sum(), end.saturating_sub(start)))
}

/// Bytes per second; zero when no time elapsed.
pub fn bandwidth(bytes: u64, nanos: u64) -> f64 {
    if nanos == 0 {
        return 0.0;
    }
    bytes as f64 / (nanos as f64 / 1e9)
}

/// MiB/s with two decimals, the way reports print it.
pub fn format_mib_s(bytes_per_s: f64) -> String {
    format!("{:.2}", bytes_per_s / MIB)
}

/// One summary per (backend, pattern, phase, role), in that order. Input
/// order does not matter.
pub fn aggregate(records: &[BenchRecord]) -> Result<Vec<Summary>> {
    if records.is_empty() {
        return Err(HammerError::NoRecords);
    }
    type GroupKey<'a> = (&'a str, &'a str, &'a str, Role);
    let mut groups: BTreeMap<GroupKey, BTreeMap<u32, Vec<BenchRecord>>> = BTreeMap::new();
    for r in records {
        groups
            .entry((&r.backend, &r.pattern, &r.phase, r.role))
            .or_default()
            .entry(r.repetition)
            .or_default()
            .push(r.clone());
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((backend, pattern, phase, role), reps) in groups {
        let n = reps.len() as u64;
        let (mut processes, mut fields, mut bytes) = (0u64, 0u64, 0u64);
        let (mut seconds, mut bw) = (0.0, 0.0);
        let mut profile = Profile::default();
        for rep in reps.values() {
            let (b, ns) = global_timing(rep)?;
            processes += rep.len() as u64;
            fields += rep.iter().map(|r| r.fields).sum::<u64>();
            bytes += b;
            seconds += ns as f64 / 1e9;
            bw += bandwidth(b, ns);
            for r in rep {
                profile.merge(&r.profile);
            }
        }
        for stat in profile.entries.values_mut() {
            *stat = CategoryStat {
                nanos: stat.nanos / n,
                ops: stat.ops / n,
            };
        }
        out.push(Summary {
            backend: backend.to_string(),
            pattern: pattern.to_string(),
            phase: phase.to_string(),
            role,
            repetitions: n as u32,
            processes: processes / n,
            fields: fields / n,
            bytes: bytes / n,
            seconds: seconds / n as f64,
            bandwidth: bw / n as f64,
            profile,
        });
    }
    Ok(out)
}

/// Whether the writers' and readers' I/O intervals within one phase and
/// repetition intersect. `None` if either role is absent.
pub fn roles_overlap(records: &[BenchRecord], phase: &str, repetition: u32) -> Option<bool> {
    let span = |role: Role| {
        let rs: Vec<&BenchRecord> = records
            .iter()
            .filter(|r| r.phase == phase && r.repetition == repetition && r.role == role)
            .collect();
        let start = rs.iter().map(|r| r.start_ns).min()?;
        let end = rs.iter().map(|r| r.end_ns).max()?;
        Some((start, end))
    };
    let (w, r) = (span(Role::Writer)?, span(Role::Reader)?);
    Some(w.0 < r.1 && r.0 < w.1)
}

/// Whether every record of `first` ended before any record of `then` began.
pub fn phases_ordered(records: &[BenchRecord], first: &str, then: &str) -> bool {
    let end = records.iter().filter(|r| r.phase == first).map(|r| r.end_ns).max();
    let start = records.iter().filter(|r| r.phase == then).map(|r| r.start_ns).min();
    match (end, start) {
        (Some(e), Some(s)) => e <= s,
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(process: u32, start_s: f64, end_s: f64, bytes: u64) -> BenchRecord {
        BenchRecord {
            process,
            role: Role::Writer,
            phase: "write".into(),
            repetition: 0,
            backend: "kv".into(),
            pattern: "no_contention".into(),
            start_ns: (start_s * 1e9) as u64,
            end_ns: (end_s * 1e9) as u64,
            bytes,
            fields: 1,
            flushes: 0,
            not_found: 0,
            invalid: 0,
            versions: Default::default(),
            ok: true,
            error: None,
            profile: Profile::default(),
        }
    }

    #[test]
    fn hand_computed_bandwidths() {
        let mib = 1 << 20;
        let s = aggregate(&[rec(0, 0.0, 10.0, 2000 * mib), rec(1, 1.0, 11.0, 2000 * mib)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].seconds, 11.0);
        assert_eq!(format_mib_s(s[0].bandwidth), "363.64");
        let one = aggregate(&[rec(0, 0.0, 1.0, 1)]).unwrap();
        assert_eq!(one[0].bandwidth, 1.0);
    }

    #[test]
    fn order_independent() {
        let mut rs: Vec<BenchRecord> = (0..6).map(|i| rec(i, i as f64, 10.0 + i as f64, 100 + i as u64)).collect();
        rs[4].role = Role::Reader;
        rs[5].phase = "read".into();
        let a = aggregate(&rs).unwrap();
        rs.reverse();
        rs.swap(0, 3);
        assert_eq!(aggregate(&rs).unwrap(), a);
    }

    #[test]
    fn repetitions_average() {
        let mut b = rec(0, 0.0, 2.0, 100);
        b.repetition = 1;
        let s = aggregate(&[rec(0, 0.0, 1.0, 100), b]).unwrap();
        assert_eq!(s[0].repetitions, 2);
        assert_eq!(s[0].processes, 1);
        assert_eq!(s[0].seconds, 1.5);
        assert_eq!(s[0].bandwidth, 75.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(aggregate(&[]), Err(HammerError::NoRecords)));
    }

    #[test]
    fn overlap_and_ordering() {
        let w = rec(0, 0.0, 5.0, 1);
        let mut r = rec(1, 4.0, 6.0, 1);
        r.role = Role::Reader;
        assert_eq!(roles_overlap(&[w.clone(), r.clone()], "write", 0), Some(true));
        r.start_ns = 5_000_000_000;
        assert_eq!(roles_overlap(&[w.clone(), r.clone()], "write", 0), Some(false));
        assert_eq!(roles_overlap(std::slice::from_ref(&w), "write", 0), None);
        r.phase = "read".into();
        assert!(phases_ordered(&[w.clone(), r.clone()], "write", "read"));
        r.start_ns = 1;
        assert!(!phases_ordered(&[w, r], "write", "read"));
    }
}
