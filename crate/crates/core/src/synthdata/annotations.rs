use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// One CSV row: `clip_id,timestamp,x_lt,y_lt,x_rb,y_rb,class_id[,score]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationRecord {
    pub clip_id: String,
    pub timestamp: f64,
    pub bbox: BoundingBox,
    pub class_id: usize,
    /// `None` for ground truth.
    pub score: Option<f64>,
}

/// A box with all of its class labels, grouped from consecutive-or-not rows.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedBox {
    pub clip_id: String,
    pub timestamp: f64,
    pub bbox: BoundingBox,
    pub classes: Vec<usize>,
}

/// Groups rows sharing clip, timestamp and box, in first-seen order.
pub fn group_boxes(records: &[AnnotationRecord]) -> Vec<AnnotatedBox> {
    let mut out: Vec<AnnotatedBox> = Vec::new();
    for r in records {
        match out
            .iter_mut()
            .find(|b| b.clip_id == r.clip_id && b.timestamp == r.timestamp && b.bbox == r.bbox)
        {
            Some(b) => {
                if !b.classes.contains(&r.class_id) {
                    b.classes.push(r.class_id);
                }
            }
            None => out.push(AnnotatedBox {
                clip_id: r.clip_id.clone(),
                timestamp: r.timestamp,
                bbox: r.bbox,
                classes: vec![r.class_id],
            }),
        }
    }
    out
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let [x0, y0, x1, y1] = r.bbox.coords();
        let line = match r.score {
            Some(s) => format!(
                "{},{},{x0:.6},{y0:.6},{x1:.6},{y1:.6},{},{s}\n",
                r.clip_id, r.timestamp, r.class_id
            ),
            None => format!("{},{},{x0:.6},{y0:.6},{x1:.6},{y1:.6},{}\n", r.clip_id, r.timestamp, r.class_id),
        };
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes scored predictions; identical format with the score column filled.
pub fn write_predictions(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    if let Some(r) = records.iter().find(|r| r.score.is_none()) {
        return Err(Error::Contract(format!("prediction for clip {} has no score", r.clip_id)));
    }
    write_annotations(path, records)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::io(path, source),
            other => Error::Parse {
                path: path.display().to_string(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;
    let shown = path.display().to_string();
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut line = 0usize;
    loop {
        let more = reader.read_record(&mut record).map_err(|e| Error::Parse {
            path: shown.clone(),
            line: e.position().map_or(line + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        line = record.position().map_or(line + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        out.push(parse_row(&record, &shown, line)?);
    }
    Ok(out)
}

fn parse_row(rec: &csv::StringRecord, path: &str, line: usize) -> Result<AnnotationRecord> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_string(),
        line,
        message,
    };
    if rec.len() != 7 && rec.len() != 8 {
        return Err(parse_err(format!("expected 7 or 8 fields, found {}", rec.len())));
    }
    let num = |i: usize, name: &str| -> Result<f64> {
        let v: f64 = rec[i]
            .parse()
            .map_err(|_| parse_err(format!("{name}: cannot parse {:?} as a number", &rec[i])))?;
        if !v.is_finite() {
            return Err(parse_err(format!("{name}: non-finite value")));
        }
        Ok(v)
    };
    let clip_id = rec[0].to_string();
    if clip_id.is_empty() {
        return Err(parse_err("empty clip_id".into()));
    }
    let timestamp = num(1, "timestamp")?;
    let coords = [num(2, "x_lt")?, num(3, "y_lt")?, num(4, "x_rb")?, num(5, "y_rb")?];
    let class_id: usize = rec[6]
        .parse()
        .map_err(|_| parse_err(format!("class_id: cannot parse {:?}", &rec[6])))?;
    let score = if rec.len() == 8 && !rec[7].is_empty() {
        let s = num(7, "score")?;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Validation(format!("{path}:{line}: score {s} outside [0, 1]")));
        }
        Some(s)
    } else {
        None
    };
    let bbox = BoundingBox::new(coords[0], coords[1], coords[2], coords[3])
        .map_err(|e| Error::Validation(format!("{path}:{line}: {e}")))?;
    Ok(AnnotationRecord {
        clip_id,
        timestamp,
        bbox,
        class_id,
        score,
    })
}
