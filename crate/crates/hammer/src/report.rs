//! CSV and static SVG renderings of summaries.
//!
//! CSV columns: `backend, pattern, role, processes, fields, bytes, seconds,
//! bandwidth_bytes_per_s`, then one column per profiling category holding
//! the seconds spent in it, summed over processes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fdb_core::profile::Category;

use crate::aggregate::{Summary, MIB};
use crate::error::{HammerError, Result};

pub const CSV_FILE: &str = "summary.csv";
pub const PROFILE_SVG: &str = "profile.svg";

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const CATEGORY_PALETTE: [&str; 15] = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896", "#9467bd",
    "#c5b0d5", "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f",
];

pub fn csv(summaries: &[Summary]) -> Result<String> {
    if summaries.is_empty() {
        return Err(HammerError::EmptyReport);
    }
    let mut out = String::from("backend,pattern,role,processes,fields,bytes,seconds,bandwidth_bytes_per_s");
    for c in Category::ALL {
        out.push(',');
        out.push_str(c.name());
    }
    out.push('\n');
    for s in summaries {
        write!(
            out,
            "{},{},{},{},{},{},{:.6},{:.2}",
            s.backend,
            s.pattern,
            s.role_label(),
            s.processes,
            s.fields,
            s.bytes,
            s.seconds,
            s.bandwidth
        )
        .unwrap();
        for c in Category::ALL {
            write!(out, ",{:.6}", s.profile.get(c).nanos as f64 / 1e9).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bandwidth against process count, one series per (backend, pattern).
pub fn bandwidth_svg(summaries: &[Summary], title: &str) -> Result<String> {
    if summaries.is_empty() {
        return Err(HammerError::EmptyReport);
    }
    let mut series: BTreeMap<(String, String), Vec<(u64, f64)>> = BTreeMap::new();
    for s in summaries {
        series
            .entry((s.backend.clone(), s.pattern.clone()))
            .or_default()
            .push((s.processes, s.bandwidth / MIB));
    }
    let (w, h, m) = (640.0, 400.0, 60.0);
    let xmin = summaries.iter().map(|s| s.processes).min().unwrap() as f64;
    let xmax = summaries.iter().map(|s| s.processes).max().unwrap() as f64;
    let ymax = summaries.iter().map(|s| s.bandwidth / MIB).fold(0.0, f64::max).max(1e-9);
    let x = |p: u64| match xmax > xmin {
        true => m + (p as f64 - xmin) / (xmax - xmin) * (w - 2.0 * m),
        false => w / 2.0,
    };
    let y = |v: f64| h - m - v / ymax * (h - 2.0 * m);

    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, w / 2.0, esc(title)).unwrap();
    writeln!(out, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m).unwrap();
    writeln!(out, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m).unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">processes</text>"#, w / 2.0, h - 20.0).unwrap();
    writeln!(out, r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">MiB/s</text>"#, h / 2.0, h / 2.0).unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{ymax:.2}</text>"#, m - 4.0, m + 4.0).unwrap();
    for (i, ((backend, pattern), mut pts)) in series.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let color = PALETTE[i % PALETTE.len()];
        let name = esc(&format!("{backend} / {pattern}"));
        writeln!(out, r#"<g class="series" data-series="{name}">"#).unwrap();
        let path: Vec<String> = pts.iter().map(|&(p, v)| format!("{:.1},{:.1}", x(p), y(v))).collect();
        writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" ")).unwrap();
        for &(p, v) in &pts {
            writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"><title>{p}: {v:.2} MiB/s</title></circle>"#, x(p), y(v)).unwrap();
        }
        let ly = m + 16.0 * i as f64;
        writeln!(out, r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{name}</text>"#, w - m - 150.0).unwrap();
        writeln!(out, "</g>").unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Stacked bars of the share of profiled time per category, one bar per summary.
pub fn profile_svg(summaries: &[Summary]) -> Result<String> {
    if summaries.is_empty() {
        return Err(HammerError::EmptyReport);
    }
    let bar_h = 22.0;
    let (w, left, top) = (760.0, 260.0, 40.0);
    let h = top + bar_h * 1.5 * summaries.len() as f64 + 30.0 + 14.0 * Category::ALL.len() as f64;
    let span = w - left - 20.0;
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">time per category</text>"#, w / 2.0).unwrap();
    for (i, s) in summaries.iter().enumerate() {
        let y = top + bar_h * 1.5 * i as f64;
        let label = esc(&format!("{} / {} / {}", s.backend, s.pattern, s.role_label()));
        writeln!(out, r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{label}</text>"#, left - 6.0, y + 15.0).unwrap();
        let total = s.profile.timed_nanos();
        let mut x = left;
        for (ci, c) in Category::ALL.iter().enumerate() {
            let ns = s.profile.get(*c).nanos;
            if ns == 0 || total == 0 {
                continue;
            }
            let frac = ns as f64 / total as f64;
            writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{bar_h}" fill="{}"><title>{}: {:.1}%</title></rect>"#,
                frac * span,
                CATEGORY_PALETTE[ci],
                c.name(),
                frac * 100.0
            )
            .unwrap();
            x += frac * span;
        }
    }
    let legend = top + bar_h * 1.5 * summaries.len() as f64 + 20.0;
    for (ci, c) in Category::ALL.iter().enumerate() {
        let y = legend + 14.0 * ci as f64;
        writeln!(out, r#"<rect x="{left}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, CATEGORY_PALETTE[ci]).unwrap();
        writeln!(out, r#"<text x="{}" y="{y}" font-size="10">{}</text>"#, left + 14.0, c.name()).unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes `summary.csv`, one `bandwidth-<role>.svg` per role and
/// `profile.svg` into `dir`; returns the paths written.
pub fn write_report(summaries: &[Summary], dir: &Path) -> Result<Vec<PathBuf>> {
    let csv = csv(summaries)?;
    std::fs::create_dir_all(dir).map_err(HammerError::io(format!("create {}", dir.display())))?;
    let mut files = vec![(dir.join(CSV_FILE), csv)];
    let mut by_role: BTreeMap<String, Vec<Summary>> = BTreeMap::new();
    for s in summaries {
        by_role.entry(s.role_label()).or_default().push(s.clone());
    }
    for (role, group) in by_role {
        let svg = bandwidth_svg(&group, &format!("{role} bandwidth"))?;
        files.push((dir.join(format!("bandwidth-{role}.svg")), svg));
    }
    files.push((dir.join(PROFILE_SVG), profile_svg(summaries)?));
    let mut written = Vec::new();
    for (path, text) in files {
        std::fs::write(&path, text).map_err(HammerError::io(format!("write {}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Role;
    use fdb_core::profile::{CategoryStat, Profile};

    fn summary(backend: &str, pattern: &str, processes: u64) -> Summary {
        let mut profile = Profile::default();
        profile.entries.insert(Category::KvPut, CategoryStat { nanos: 3_000_000, ops: 3 });
        profile.entries.insert(Category::ArrayWrite, CategoryStat { nanos: 1_000_000, ops: 1 });
        Summary {
            backend: backend.into(),
            pattern: pattern.into(),
            phase: "write".into(),
            role: Role::Writer,
            repetitions: 1,
            processes,
            fields: 10,
            bytes: 40960,
            seconds: 0.5,
            bandwidth: 81920.0,
            profile,
        }
    }

    #[test]
    fn one_summary_one_row() {
        let text = csv(&[summary("kv", "no_contention", 1)]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("backend,pattern,role,processes,fields,bytes,seconds,bandwidth_bytes_per_s,array_write"));
        assert_eq!(lines[0].split(',').count(), 8 + Category::ALL.len());
        assert!(lines[1].starts_with("kv,no_contention,writer,1,10,40960,0.500000,81920.00,0.001000"));
    }

    #[test]
    fn four_series() {
        let mut all = Vec::new();
        for b in ["kv", "toc"] {
            for p in ["no_contention", "contention"] {
                all.push(summary(b, p, 1));
                all.push(summary(b, p, 4));
            }
        }
        let svg = bandwidth_svg(&all, "t").unwrap();
        assert_eq!(svg.matches(r#"class="series""#).count(), 4);
        assert_eq!(svg, bandwidth_svg(&all, "t").unwrap(), "deterministic");
        assert!(profile_svg(&all).unwrap().contains("kv_put: 75.0%"));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(csv(&[]), Err(HammerError::EmptyReport)));
        assert!(matches!(bandwidth_svg(&[], "t"), Err(HammerError::EmptyReport)));
        assert!(matches!(write_report(&[], Path::new("/nonexistent")), Err(HammerError::EmptyReport)));
    }
}
