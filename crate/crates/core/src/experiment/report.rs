//! Merging report files into one table, with Markdown side-by-side and
//! convergence views.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::risk::REPORT_HEADER;

/// Header of the merged report.
pub const MERGED_HEADER: &str = "preset,seed,strategy,N_rebalance,mean,variance,var95,es95,es99,semivariance,n_paths,excluded";

/// One report line tagged with the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedRow {
    pub preset: String,
    pub seed: u64,
    pub strategy: String,
    pub n_rebalance: usize,
    pub mean: f64,
    pub variance: f64,
    pub var95: f64,
    pub es95: f64,
    pub es99: f64,
    pub semivariance: f64,
    pub n_paths: usize,
    pub excluded: usize,
}

fn schema(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {msg}", path.display()))
}

fn normalize(header: &str) -> String {
    header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect::<Vec<_>>().join(",")
}

/// Parses one report file written by the hedge stage.
pub fn read_report(path: &Path) -> Result<Vec<MergedRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let meta = lines.next().ok_or_else(|| schema(path, "empty file"))?;
    let meta = meta.strip_prefix('#').ok_or_else(|| schema(path, "missing `# seed=… preset=…` line"))?;
    let (mut seed, mut preset) = (None, None);
    for field in meta.split_whitespace() {
        match field.split_once('=') {
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            Some(("preset", v)) => preset = Some(v.to_string()),
            _ => {}
        }
    }
    let (seed, preset) = match (seed, preset) {
        (Some(s), Some(p)) => (s, p),
        _ => return Err(schema(path, "metadata line lacks seed or preset")),
    };
    let header = lines.next().ok_or_else(|| schema(path, "missing header"))?;
    if normalize(header) != normalize(REPORT_HEADER) {
        return Err(schema(path, format!("unexpected columns {header:?}")));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 10 {
            return Err(schema(path, format!("data line {} has {} fields", k + 1, f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| schema(path, format!("bad number {:?} on data line {}", f[i], k + 1)));
        let int = |i: usize| f[i].parse::<usize>().map_err(|_| schema(path, format!("bad count {:?} on data line {}", f[i], k + 1)));
        rows.push(MergedRow {
            preset: preset.clone(),
            seed,
            strategy: f[0].to_string(),
            n_rebalance: int(1)?,
            mean: num(2)?,
            variance: num(3)?,
            var95: num(4)?,
            es95: num(5)?,
            es99: num(6)?,
            semivariance: num(7)?,
            n_paths: int(8)?,
            excluded: int(9)?,
        });
    }
    Ok(rows)
}

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "report.csv") {
            out.push(p);
        }
    }
    Ok(())
}

/// Report files named by `inputs`: files as given, directories searched
/// recursively for `report.csv`.
pub fn collect_reports(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let before = files.len();
            find_reports(input, &mut files)?;
            if files.len() == before {
                return Err(Error::NoReports(input.display().to_string()));
            }
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::NoReports("the given inputs".into()));
    }
    Ok(files)
}

/// All rows of all reports under `inputs`, sorted by preset, strategy and `N`.
pub fn merge_reports(inputs: &[PathBuf]) -> Result<Vec<MergedRow>> {
    let mut rows = Vec::new();
    for f in collect_reports(inputs)? {
        rows.extend(read_report(&f)?);
    }
    rows.sort_by(|a, b| (&a.preset, &a.strategy, a.n_rebalance).cmp(&(&b.preset, &b.strategy, b.n_rebalance)));
    Ok(rows)
}

pub fn write_merged_csv<W: Write>(rows: &[MergedRow], mut w: W) -> Result<()> {
    writeln!(w, "{MERGED_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.preset, r.seed, r.strategy, r.n_rebalance, r.mean, r.variance, r.var95, r.es95, r.es99, r.semivariance, r.n_paths, r.excluded
        )?;
    }
    Ok(())
}

fn sci(x: f64) -> String {
    format!("{x:.2e}")
}

/// Markdown rendering: per preset, one table per `N` with strategies side by
/// side, followed by a `VaR_95` against `N` convergence table.
pub fn render_markdown(rows: &[MergedRow]) -> String {
    let mut md = String::new();
    let presets: BTreeSet<&str> = rows.iter().map(|r| r.preset.as_str()).collect();
    for preset in presets {
        let mine: Vec<&MergedRow> = rows.iter().filter(|r| r.preset == preset).collect();
        let mut strategies: Vec<&str> = Vec::new();
        for r in &mine {
            if !strategies.contains(&r.strategy.as_str()) {
                strategies.push(&r.strategy);
            }
        }
        let ns: BTreeSet<usize> = mine.iter().map(|r| r.n_rebalance).collect();
        let cell = |s: &str, n: usize, f: fn(&MergedRow) -> f64| {
            mine.iter().find(|r| r.strategy == s && r.n_rebalance == n).map_or_else(|| "–".to_string(), |r| sci(f(r)))
        };
        let head = |first: &str| {
            let mut h = format!("| {first} |");
            for s in &strategies {
                let _ = write!(h, " {s} |");
            }
            h.push_str("\n|---|");
            h.push_str(&"---|".repeat(strategies.len()));
            h.push('\n');
            h
        };
        let _ = writeln!(md, "## {preset}\n");
        let measures: [(&str, fn(&MergedRow) -> f64); 6] = [
            ("mean", |r| r.mean),
            ("variance", |r| r.variance),
            ("VaR95", |r| r.var95),
            ("ES95", |r| r.es95),
            ("ES99", |r| r.es99),
            ("semivariance", |r| r.semivariance),
        ];
        for &n in &ns {
            let _ = writeln!(md, "### N = {n}\n");
            md.push_str(&head("risk measure"));
            for (name, f) in measures {
                let _ = write!(md, "| {name} |");
                for s in &strategies {
                    let _ = write!(md, " {} |", cell(s, n, f));
                }
                md.push('\n');
            }
            md.push('\n');
        }
        md.push_str("### VaR95 convergence\n\n");
        md.push_str(&head("N"));
        for &n in &ns {
            let _ = write!(md, "| {n} |");
            for s in &strategies {
                let _ = write!(md, " {} |", cell(s, n, |r| r.var95));
            }
            md.push('\n');
        }
        md.push('\n');
    }
    md
}
