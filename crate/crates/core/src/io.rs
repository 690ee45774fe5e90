//! File formats.
//!
//! Every CSV starts with `# config_digest=<hex>` and `# seed=<u64>` comment
//! lines followed by the column header. Readers skip `#` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeffs::GammaTable;
use crate::error::{Error, Result};
use crate::sde::TrajectoryRecord;
use crate::topology::{GraphDocument, InteractionGraph};

fn header(digest: &str, seed: u64) -> String {
    format!("# config_digest={digest}\n# seed={seed}\n")
}

/// Comment lines as `key=value` pairs.
fn comments(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .collect()
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|e| Error::Table(format!("line {}: {e}: {c:?}", lineno + 1)))
        })
        .collect()
}

/// `t,E_0,E_1,...` with one row per recorded time.
pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let n = record.energies.first().map_or(0, Vec::len);
    let mut out = header(&record.config_digest, record.seed);
    out.push('t');
    for x in 0..n {
        let _ = write!(out, ",E_{x}");
    }
    out.push('\n');
    for (t, e) in record.times.iter().zip(&record.energies) {
        let _ = write!(out, "{t}");
        for v in e {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Parsed trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub config_digest: Option<String>,
    pub seed: Option<u64>,
    pub times: Vec<f64>,
    pub energies: Vec<Vec<f64>>,
}

pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable> {
    let meta = comments(text);
    let get = |k: &str| meta.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone());
    let mut lines = data_lines(text);
    let (_, head) = lines.next().ok_or_else(|| Error::Table("missing header".into()))?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    let expected: Vec<String> = std::iter::once("t".to_owned())
        .chain((0..cols.len().saturating_sub(1)).map(|x| format!("E_{x}")))
        .collect();
    if cols.len() < 2 || cols != expected {
        return Err(Error::Table(format!("unexpected header {head:?}")));
    }
    let mut times = Vec::new();
    let mut energies = Vec::new();
    for (i, l) in lines {
        let row = parse_row(l, i)?;
        if row.len() != cols.len() {
            return Err(Error::Table(format!("line {}: {} columns, expected {}", i + 1, row.len(), cols.len())));
        }
        times.push(row[0]);
        energies.push(row[1..].to_vec());
    }
    Ok(TrajectoryTable {
        config_digest: get("config_digest"),
        seed: get("seed").and_then(|s| s.parse().ok()),
        times,
        energies,
    })
}

/// JSON sidecar of a trajectory: the run configuration, seed, stopping
/// information and integrator diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub config_digest: String,
    pub seed: u64,
    pub stopped: bool,
    pub stopping_time: Option<f64>,
    pub final_time: f64,
    pub diagnostics: crate::sde::RunDiagnostics,
    pub config: serde_json::Value,
}

impl TrajectorySidecar {
    pub fn new(record: &TrajectoryRecord, config: serde_json::Value) -> Self {
        Self {
            config_digest: record.config_digest.clone(),
            seed: record.seed,
            stopped: record.stopped,
            stopping_time: record.stopping_time,
            final_time: record.final_time(),
            diagnostics: record.diagnostics,
            config,
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_trajectory(dir: &Path, stem: &str, record: &TrajectoryRecord, config: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.csv")), trajectory_csv(record))?;
    write_json(&dir.join(format!("{stem}.json")), &TrajectorySidecar::new(record, config))
}

/// `tau,gamma,stderr`; the `stderr` column is omitted when absent.
pub fn gamma_csv(table: &GammaTable, digest: &str, seed: u64) -> String {
    let mut out = header(digest, seed);
    match &table.stderr {
        Some(se) => {
            out.push_str("tau,gamma,stderr\n");
            for ((t, g), s) in table.tau.iter().zip(&table.gamma).zip(se) {
                let _ = writeln!(out, "{t},{g},{s}");
            }
        }
        None => {
            out.push_str("tau,gamma\n");
            for (t, g) in table.tau.iter().zip(&table.gamma) {
                let _ = writeln!(out, "{t},{g}");
            }
        }
    }
    out
}

/// Reads a `tau,gamma` or `tau,gamma,stderr` table.
pub fn parse_gamma_csv(text: &str) -> Result<GammaTable> {
    let mut lines = data_lines(text);
    let (_, head) = lines.next().ok_or_else(|| Error::Table("missing header".into()))?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    let with_se = match cols.as_slice() {
        ["tau", "gamma"] => false,
        ["tau", "gamma", "stderr"] => true,
        _ => return Err(Error::Table(format!("unexpected header {head:?}"))),
    };
    let (mut tau, mut gamma, mut se) = (Vec::new(), Vec::new(), Vec::new());
    for (i, l) in lines {
        let row = parse_row(l, i)?;
        if row.len() != cols.len() {
            return Err(Error::Table(format!("line {}: {} columns, expected {}", i + 1, row.len(), cols.len())));
        }
        tau.push(row[0]);
        gamma.push(row[1]);
        if with_se {
            se.push(row[2]);
        }
    }
    GammaTable::new(tau, gamma, with_se.then_some(se))
}

pub fn read_gamma_csv(path: &Path) -> Result<GammaTable> {
    parse_gamma_csv(&fs::read_to_string(path)?)
}

pub fn read_graph_json(path: &Path) -> Result<InteractionGraph> {
    let doc: GraphDocument = serde_json::from_str(&fs::read_to_string(path)?)?;
    doc.to_graph()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::RunDiagnostics;

    fn record() -> TrajectoryRecord {
        TrajectoryRecord {
            times: vec![0.0, 0.5, 1.0],
            energies: vec![vec![1.0, 2.0], vec![1.25, 1.75], vec![0.1 + 0.2, 2.7]],
            stopped: false,
            stopping_time: None,
            seed: 42,
            config_digest: "abc".into(),
            diagnostics: RunDiagnostics::default(),
        }
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let text = trajectory_csv(&record());
        assert!(text.starts_with("# config_digest=abc\n# seed=42\nt,E_0,E_1\n"));
        let t = parse_trajectory_csv(&text).unwrap();
        assert_eq!(t.seed, Some(42));
        assert_eq!(t.config_digest.as_deref(), Some("abc"));
        assert_eq!(t.times, record().times);
        assert_eq!(t.energies, record().energies);
    }

    #[test]
    fn trajectory_rejects_bad_header() {
        assert!(parse_trajectory_csv("time,E_0\n0,1\n").is_err());
        assert!(parse_trajectory_csv("t,E_0\n0,1,2\n").is_err());
    }

    #[test]
    fn gamma_round_trip() {
        let t = GammaTable::new(vec![0.5, 1.0, 2.0], vec![0.9, 0.5, 0.1], Some(vec![0.01, 0.01, 0.02])).unwrap();
        let back = parse_gamma_csv(&gamma_csv(&t, "d", 1)).unwrap();
        assert_eq!(back.tau, t.tau);
        assert_eq!(back.gamma, t.gamma);
        assert_eq!(back.stderr, t.stderr);
        let plain = parse_gamma_csv("tau,gamma\n0.5,1\n1,0.5\n").unwrap();
        assert!(plain.stderr.is_none());
        assert!(parse_gamma_csv("tau,g\n1,1\n").is_err());
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        write_trajectory(dir.path(), "run", &record(), serde_json::json!({"k": 1})).unwrap();
        let side: TrajectorySidecar =
            serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
        assert_eq!(side.seed, 42);
        assert_eq!(side.final_time, 1.0);
        let gpath = dir.path().join("g.json");
        fs::write(&gpath, r#"{"vertices": [0, 1, 2], "edges": [[0, 1], [1, 2]]}"#).unwrap();
        assert_eq!(read_graph_json(&gpath).unwrap().num_edges(), 2);
    }
}
