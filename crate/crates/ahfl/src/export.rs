//! On-disk formats: CSV traces, summary files, and dataset snapshots.
//!
//! Floats are rendered with the shortest representation that parses back to
//! the same bit pattern, so every writer here round-trips exactly and two
//! writes of the same data are byte-identical. All writes are atomic: the
//! payload lands in a sibling temp file that is renamed over the target, so
//! readers never observe a half-written file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::engine::LossPoint;
use crate::error::{Error, Result};
use crate::learning::Dataset;
use crate::timing::{StalenessSample, StalenessTrace};

/// Writes `bytes` to `path` via a temp file in the same directory, creating
/// parent directories as needed.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid("path", format!("{} has no file name", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `client_id,event_index,sim_time,staleness`, one row per participation.
pub fn staleness_csv(trace: &StalenessTrace) -> String {
    let mut out = String::from("client_id,event_index,sim_time,staleness\n");
    for s in &trace.samples {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.client_id, s.event_index, s.time, s.staleness
        );
    }
    out
}

pub fn write_staleness_csv(path: impl AsRef<Path>, trace: &StalenessTrace) -> Result<()> {
    atomic_write(path, staleness_csv(trace).as_bytes())
}

pub fn read_staleness_csv(path: impl AsRef<Path>) -> Result<Vec<StalenessSample>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    expect_header(&mut lines, "client_id,event_index,sim_time,staleness")?;
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let f = split_fields(idx + 1, line, 4)?;
        samples.push(StalenessSample {
            client_id: parse_field(idx + 1, f[0])?,
            event_index: parse_field(idx + 1, f[1])?,
            time: parse_field(idx + 1, f[2])?,
            staleness: parse_field(idx + 1, f[3])?,
        });
    }
    Ok(samples)
}

/// `edge_id,cycle_index,cycle_duration`, cycles in completion order per edge.
pub fn cycles_csv(edge_cycle_times: &[Vec<f64>]) -> String {
    let mut out = String::from("edge_id,cycle_index,cycle_duration\n");
    for (edge, times) in edge_cycle_times.iter().enumerate() {
        for (i, t) in times.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", edge, i, t);
        }
    }
    out
}

pub fn write_cycles_csv(path: impl AsRef<Path>, edge_cycle_times: &[Vec<f64>]) -> Result<()> {
    atomic_write(path, cycles_csv(edge_cycle_times).as_bytes())
}

pub fn read_cycles_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    expect_header(&mut lines, "edge_id,cycle_index,cycle_duration")?;
    let mut edges: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let f = split_fields(idx + 1, line, 3)?;
        let edge: usize = parse_field(idx + 1, f[0])?;
        let cycle: usize = parse_field(idx + 1, f[1])?;
        let duration: f64 = parse_field(idx + 1, f[2])?;
        if edge >= edges.len() {
            edges.resize_with(edge + 1, Vec::new);
        }
        if cycle != edges[edge].len() {
            return Err(Error::parse(
                idx + 1,
                format!("cycle index {cycle} out of order for edge {edge}"),
            ));
        }
        edges[edge].push(duration);
    }
    Ok(edges)
}

/// `cloud_version,sim_time,loss`, one row per global version.
pub fn loss_csv(trace: &[LossPoint]) -> String {
    let mut out = String::from("cloud_version,sim_time,loss\n");
    for p in trace {
        let _ = writeln!(out, "{},{},{}", p.version, p.time, p.loss);
    }
    out
}

pub fn write_loss_csv(path: impl AsRef<Path>, trace: &[LossPoint]) -> Result<()> {
    atomic_write(path, loss_csv(trace).as_bytes())
}

pub fn read_loss_csv(path: impl AsRef<Path>) -> Result<Vec<LossPoint>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    expect_header(&mut lines, "cloud_version,sim_time,loss")?;
    let mut trace = Vec::new();
    for (idx, line) in lines {
        let f = split_fields(idx + 1, line, 3)?;
        trace.push(LossPoint {
            version: parse_field(idx + 1, f[0])?,
            time: parse_field(idx + 1, f[1])?,
            loss: parse_field(idx + 1, f[2])?,
        });
    }
    Ok(trace)
}

/// Renders `key: value` lines in the given order.
pub fn summary_text(entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}: {v}");
    }
    out
}

pub fn write_summary(path: impl AsRef<Path>, entries: &[(String, String)]) -> Result<()> {
    atomic_write(path, summary_text(entries).as_bytes())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(idx + 1, format!("expected `key: value`, got `{line}`")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Dataset snapshot: a feature/target CSV plus a metadata sidecar carrying
/// the shard count and ground-truth weights.
pub fn write_dataset(
    data_path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
    ds: &Dataset,
) -> Result<()> {
    let dim = ds.dim();
    let mut csv = String::new();
    for j in 0..dim {
        if j > 0 {
            csv.push(',');
        }
        let _ = write!(csv, "x{j}");
    }
    csv.push_str(",target\n");
    for r in 0..ds.n_rows() {
        for (j, v) in ds.row(r).iter().enumerate() {
            if j > 0 {
                csv.push(',');
            }
            let _ = write!(csv, "{v}");
        }
        let _ = writeln!(csv, ",{}", ds.target(r));
    }
    atomic_write(data_path, csv.as_bytes())?;

    let mut meta = String::new();
    let _ = writeln!(meta, "dim: {dim}");
    let _ = writeln!(meta, "rows: {}", ds.n_rows());
    let _ = writeln!(meta, "shards: {}", ds.shards().len());
    let w_star: Vec<String> = ds.w_star().iter().map(|w| w.to_string()).collect();
    let _ = writeln!(meta, "w_star: {}", w_star.join(","));
    atomic_write(meta_path, meta.as_bytes())
}

pub fn read_dataset(data_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<Dataset> {
    let meta = read_summary(meta_path)?;
    let field = |key: &str| {
        meta.get(key)
            .ok_or_else(|| Error::invalid("metadata", format!("missing key `{key}`")))
    };
    let dim: usize = field("dim")?
        .parse()
        .map_err(|_| Error::invalid("metadata", "dim is not an integer"))?;
    let rows: usize = field("rows")?
        .parse()
        .map_err(|_| Error::invalid("metadata", "rows is not an integer"))?;
    let shards: usize = field("shards")?
        .parse()
        .map_err(|_| Error::invalid("metadata", "shards is not an integer"))?;
    let w_star_text = field("w_star")?;
    let w_star: Vec<f64> = if w_star_text.is_empty() {
        Vec::new()
    } else {
        w_star_text
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid("metadata", format!("bad w_star entry `{v}`")))
            })
            .collect::<Result<_>>()?
    };

    let text = fs::read_to_string(data_path)?;
    let mut lines = text.lines().enumerate();
    let header: String = (0..dim).map(|j| format!("x{j},")).collect::<String>() + "target";
    expect_header(&mut lines, &header)?;
    let mut features = Vec::with_capacity(rows * dim);
    let mut targets = Vec::with_capacity(rows);
    for (idx, line) in lines {
        let f = split_fields(idx + 1, line, dim + 1)?;
        for v in &f[..dim] {
            features.push(parse_field(idx + 1, v)?);
        }
        targets.push(parse_field(idx + 1, f[dim])?);
    }
    if targets.len() != rows {
        return Err(Error::invalid(
            "dataset",
            format!("metadata promised {rows} rows, file has {}", targets.len()),
        ));
    }
    Ok(Dataset::from_parts(dim, features, targets, shards, w_star))
}

fn expect_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, want: &str) -> Result<()> {
    match lines.next() {
        Some((_, got)) if got == want => Ok(()),
        Some((idx, got)) => Err(Error::parse(
            idx + 1,
            format!("expected header `{want}`, got `{got}`"),
        )),
        None => Err(Error::parse(1, "empty file")),
    }
}

fn split_fields(line_no: usize, line: &str, want: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != want {
        return Err(Error::parse(
            line_no,
            format!("expected {want} fields, got {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn parse_field<T: std::str::FromStr>(line_no: usize, raw: &str) -> Result<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::parse(line_no, format!("could not parse `{raw}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::generate_dataset;

    fn sample_trace() -> StalenessTrace {
        StalenessTrace {
            samples: vec![
                StalenessSample {
                    client_id: 3,
                    event_index: 1,
                    time: 0.125,
                    staleness: 0,
                },
                StalenessSample {
                    client_id: 1,
                    event_index: 1,
                    time: 2.5,
                    staleness: 7,
                },
            ],
            end_time: 2.5,
        }
    }

    #[test]
    fn staleness_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("staleness.csv");
        let trace = sample_trace();
        write_staleness_csv(&path, &trace).unwrap();
        let back = read_staleness_csv(&path).unwrap();
        assert_eq!(back, trace.samples);
    }

    #[test]
    fn loss_csv_round_trips_shortest_floats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let trace = vec![
            LossPoint {
                version: 0,
                time: 0.0,
                loss: 0.1 + 0.2, // 0.30000000000000004 survives the trip
            },
            LossPoint {
                version: 1,
                time: 1.0 / 3.0,
                loss: 1e-17,
            },
        ];
        write_loss_csv(&path, &trace).unwrap();
        let back = read_loss_csv(&path).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn cycles_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cycles.csv");
        let times = vec![vec![1.5, 2.25], vec![], vec![0.75]];
        write_cycles_csv(&path, &times).unwrap();
        let back = read_cycles_csv(&path).unwrap();
        // trailing empty edges are unrepresentable, leading ones survive
        assert_eq!(back, vec![vec![1.5, 2.25], vec![], vec![0.75]]);
    }

    #[test]
    fn summary_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.txt");
        let entries = vec![
            ("initial_loss".to_string(), "12.5".to_string()),
            ("seed".to_string(), "42".to_string()),
        ];
        write_summary(&path, &entries).unwrap();
        let map = read_summary(&path).unwrap();
        assert_eq!(map.get("initial_loss").unwrap(), "12.5");
        assert_eq!(map.get("seed").unwrap(), "42");
    }

    #[test]
    fn dataset_snapshot_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        let meta = dir.path().join("data.meta");
        let ds = generate_dataset(4, 23, 5, 99);
        write_dataset(&data, &meta, &ds).unwrap();
        let back = read_dataset(&data, &meta).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn writes_are_byte_identical_and_atomic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/staleness.csv");
        let trace = sample_trace();
        write_staleness_csv(&path, &trace).unwrap();
        let first = fs::read(&path).unwrap();
        write_staleness_csv(&path, &trace).unwrap();
        let second = fs::read(&path).unwrap();
        assert_eq!(first, second);
        // no temp file left behind
        assert!(!path.with_file_name("staleness.csv.tmp").exists());
    }

    #[test]
    fn readers_reject_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        fs::write(&path, "wrong,header\n").unwrap();
        assert!(read_loss_csv(&path).is_err());
        fs::write(&path, "cloud_version,sim_time,loss\n1,2\n").unwrap();
        assert!(read_loss_csv(&path).is_err());
        fs::write(&path, "cloud_version,sim_time,loss\n1,2,abc\n").unwrap();
        assert!(read_loss_csv(&path).is_err());
    }
}
