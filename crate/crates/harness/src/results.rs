//! Pose-estimate results as CSV: `scene_id,im_id,obj_id,score,R,t,time`
//! with `R` as 9 space-separated row-major values and `t` as 3 values (mm).

use std::path::Path;

use pose_forge::RigidPose;

use crate::error::{read_file, write_file, HarnessError, Result};
use crate::scene::{pose_from_rows, rotation_rows};

pub const HEADER: &str = "scene_id,im_id,obj_id,score,R,t,time";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRecord {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub score: f64,
    pub pose: RigidPose,
    /// Seconds.
    pub time: f64,
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Serializes records with a header line. Values use the shortest exact
/// decimal form, so reading back is lossless.
pub fn write_results(records: &[ResultRecord]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let _ = w.write_record(HEADER.split(','));
    for r in records {
        let t = r.pose.translation;
        let _ = w.write_record([
            r.scene_id.to_string(),
            r.im_id.to_string(),
            r.obj_id.to_string(),
            r.score.to_string(),
            join(&rotation_rows(&r.pose.rotation)),
            join(&[t.x, t.y, t.z]),
            r.time.to_string(),
        ]);
    }
    w.into_inner().unwrap_or_default()
}

fn numbers(field: &str, name: &str, n: usize, line: usize, ctx: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = field
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| HarnessError::parse_at_line(ctx, line, format!("`{name}` holds a non-numeric value")))?;
    if v.len() != n {
        return Err(HarnessError::parse_at_line(ctx, line, format!("`{name}` has {} values, expected {n}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(HarnessError::parse_at_line(ctx, line, format!("`{name}` holds a non-finite value")));
    }
    Ok(v)
}

/// Parses results; the header line is optional. Errors carry 1-based line
/// numbers.
pub fn parse_results(bytes: &[u8], context: &str) -> Result<Vec<ResultRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(bytes);
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() as usize;
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(line, |p| p.line() as usize);
                return Err(HarnessError::parse_at_line(context, line, e.to_string()));
            }
        }
        let line = record.position().map_or(line, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if out.is_empty() && record.get(0) == Some("scene_id") {
            continue;
        }
        if record.len() != 7 {
            return Err(HarnessError::parse_at_line(context, line, format!("{} fields, expected 7", record.len())));
        }
        let id = |k: usize, name: &str| {
            record[k]
                .parse::<u32>()
                .map_err(|_| HarnessError::parse_at_line(context, line, format!("`{name}` is not a non-negative integer")))
        };
        let scalar = |k: usize, name: &str| {
            record[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| HarnessError::parse_at_line(context, line, format!("`{name}` is not a finite number")))
        };
        let (scene_id, im_id, obj_id) = (id(0, "scene_id")?, id(1, "im_id")?, id(2, "obj_id")?);
        let score = scalar(3, "score")?;
        let r = numbers(&record[4], "R", 9, line, context)?;
        let t = numbers(&record[5], "t", 3, line, context)?;
        let time = scalar(6, "time")?;
        if time < 0.0 {
            return Err(HarnessError::parse_at_line(context, line, format!("negative time {time}")));
        }
        let pose = pose_from_rows(&format!("{context}:{line}"), &r, &t)?;
        out.push(ResultRecord { scene_id, im_id, obj_id, score, pose, time });
    }
    Ok(out)
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>> {
    parse_results(&read_file(path)?, &path.display().to_string())
}

pub fn save_results(path: &Path, records: &[ResultRecord]) -> Result<()> {
    write_file(path, &write_results(records))
}

/// Canonical order: scene, image, object, then decreasing score.
pub fn sort_results(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| {
        (a.scene_id, a.im_id, a.obj_id).cmp(&(b.scene_id, b.im_id, b.obj_id)).then(b.score.total_cmp(&a.score))
    });
}
