//! File formats: detection logs (CSV and JSON lines), ego-pose logs, sensor
//! mounts and per-window assignment tables.
//!
//! Detection CSV header:
//! `time,sensor_id,range,azimuth,radial_velocity,amplitude,x,y,gt_label`
//! with an empty `gt_label` for background. Assignment CSV header:
//! `window_start,window_end,detection_index,label` where noise is `-1`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{ClusterAssignment, Detection, EgoPose, SensorMount};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn read_csv_from<T: DeserializeOwned, R: Read>(reader: R, path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(|e| csv_err(path, e))?);
    }
    Ok(out)
}

fn write_csv_to<T: Serialize, W: Write>(writer: W, rows: &[T], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Writes only the header when `rows` is empty (serde cannot infer it).
fn write_csv_file<T: Serialize>(path: &Path, header: &str, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    if rows.is_empty() {
        writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
        return w.flush().map_err(|e| Error::io(path, e));
    }
    write_csv_to(w, rows, path)
}

pub const DETECTION_HEADER: &str =
    "time,sensor_id,range,azimuth,radial_velocity,amplitude,x,y,gt_label";
pub const POSE_HEADER: &str = "time,x,y,heading,speed,yaw_rate";
pub const SENSOR_HEADER: &str = "sensor_id,x,y,yaw";
pub const ASSIGNMENT_HEADER: &str = "window_start,window_end,detection_index,label";

pub fn read_detections_csv(path: &Path) -> Result<Vec<Detection>> {
    read_csv_from(open(path)?, path)
}

pub fn parse_detections_csv(text: &str) -> Result<Vec<Detection>> {
    read_csv_from(text.as_bytes(), Path::new("<memory>"))
}

pub fn write_detections_csv(path: &Path, dets: &[Detection]) -> Result<()> {
    write_csv_file(path, DETECTION_HEADER, dets)
}

pub fn detections_to_csv_string(dets: &[Detection]) -> Result<String> {
    let mut buf = Vec::new();
    if dets.is_empty() {
        buf.extend_from_slice(DETECTION_HEADER.as_bytes());
        buf.push(b'\n');
    } else {
        write_csv_to(&mut buf, dets, Path::new("<memory>"))?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn read_detections_jsonl(path: &Path) -> Result<Vec<Detection>> {
    parse_jsonl(BufReader::new(open(path)?), path)
}

pub fn parse_detections_jsonl(text: &str) -> Result<Vec<Detection>> {
    parse_jsonl(text.as_bytes(), Path::new("<memory>"))
}

fn parse_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.push(d);
    }
    Ok(out)
}

pub fn detections_to_jsonl_string(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        s.push_str(&serde_json::to_string(d).expect("detections serialize"));
        s.push('\n');
    }
    s
}

pub fn write_detections_jsonl(path: &Path, dets: &[Detection]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(detections_to_jsonl_string(dets).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a detection log, choosing the parser from the file extension
/// (`.jsonl`/`.ndjson` for JSON lines, anything else CSV).
pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => read_detections_jsonl(path),
        _ => read_detections_csv(path),
    }
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => write_detections_jsonl(path, dets),
        _ => write_detections_csv(path, dets),
    }
}

pub fn read_poses_csv(path: &Path) -> Result<Vec<EgoPose>> {
    read_csv_from(open(path)?, path)
}

pub fn write_poses_csv(path: &Path, poses: &[EgoPose]) -> Result<()> {
    write_csv_file(path, POSE_HEADER, poses)
}

pub fn read_sensors_csv(path: &Path) -> Result<Vec<SensorMount>> {
    let mounts: Vec<SensorMount> = read_csv_from(open(path)?, path)?;
    for (i, m) in mounts.iter().enumerate() {
        if mounts[..i].iter().any(|o| o.sensor_id == m.sensor_id) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 2,
                message: format!("duplicate sensor_id {}", m.sensor_id),
            });
        }
    }
    Ok(mounts)
}

pub fn write_sensors_csv(path: &Path, mounts: &[SensorMount]) -> Result<()> {
    write_csv_file(path, SENSOR_HEADER, mounts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
struct AssignmentRow {
    window_start: f64,
    window_end: f64,
    detection_index: usize,
    label: i64,
}

pub fn write_assignments_csv(path: &Path, windows: &[ClusterAssignment]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(assignments_to_csv_string(windows).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn assignments_to_csv_string(windows: &[ClusterAssignment]) -> String {
    let mut s = String::with_capacity(64 * windows.len());
    s.push_str(ASSIGNMENT_HEADER);
    s.push('\n');
    for w in windows {
        for (idx, label) in w.indices.iter().zip(&w.labels) {
            let l = label.map(|l| l as i64).unwrap_or(-1);
            s.push_str(&format!("{},{},{},{}\n", w.window.0, w.window.1, idx, l));
        }
    }
    s
}

/// Reads an assignment table. Rows are grouped into windows by consecutive
/// identical `(window_start, window_end)` pairs.
pub fn read_assignments_csv(path: &Path) -> Result<Vec<ClusterAssignment>> {
    let rows: Vec<AssignmentRow> = read_csv_from(open(path)?, path)?;
    let mut out: Vec<ClusterAssignment> = Vec::new();
    for r in rows {
        let label = if r.label < 0 { None } else { Some(r.label as u32) };
        match out.last_mut() {
            Some(w) if w.window == (r.window_start, r.window_end) => {
                w.indices.push(r.detection_index);
                w.labels.push(label);
            }
            _ => out.push(ClusterAssignment::new(
                (r.window_start, r.window_end),
                vec![r.detection_index],
                vec![label],
            )),
        }
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut s = String::new();
    open(path)?
        .read_to_string(&mut s)
        .map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Detection> {
        vec![
            Detection {
                time: 0.05,
                sensor_id: 1,
                range: 12.5,
                azimuth: -0.3,
                radial_velocity: 1.25,
                amplitude: 10.0,
                x: 3.0,
                y: -1.0 / 3.0,
                gt_label: Some(4),
            },
            Detection {
                time: 0.1,
                sensor_id: 0,
                range: 40.0,
                azimuth: 0.1,
                radial_velocity: -0.01,
                amplitude: 10.0,
                x: 39.8,
                y: 3.99,
                gt_label: None,
            },
        ]
    }

    #[test]
    fn csv_header_and_empty_background_label() {
        let s = detections_to_csv_string(&sample()).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), DETECTION_HEADER);
        lines.next();
        assert!(lines.next().unwrap().ends_with(','));
        assert_eq!(parse_detections_csv(&s).unwrap(), sample());
    }

    #[test]
    fn empty_log_writes_header_only() {
        let s = detections_to_csv_string(&[]).unwrap();
        assert_eq!(s.trim(), DETECTION_HEADER);
        assert!(parse_detections_csv(&s).unwrap().is_empty());
    }

    #[test]
    fn jsonl_matches_csv() {
        let s = detections_to_jsonl_string(&sample());
        assert_eq!(parse_detections_jsonl(&s).unwrap(), sample());
    }

    #[test]
    fn parse_error_reports_line() {
        let text = format!("{DETECTION_HEADER}\n0,0,1,0,0,0,1,0,\n0,0,abc,0,0,0,1,0,\n");
        match parse_detections_csv(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn assignments_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let w = vec![
            ClusterAssignment::new((0.0, 0.25), vec![0, 1, 2], vec![Some(0), None, Some(0)]),
            ClusterAssignment::new((0.05, 0.3), vec![1, 2], vec![Some(0), Some(1)]),
        ];
        write_assignments_csv(&path, &w).unwrap();
        assert_eq!(read_assignments_csv(&path).unwrap(), w);
    }
}
