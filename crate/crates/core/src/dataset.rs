//! Annotation, result, and manifest I/O.
//!
//! Interchange grammar (byte-exact, UTF-8, LF endings, no header):
//!
//! - annotations: `frame_idx,x,y,w,h,visible` with `nan,nan,nan,nan` and
//!   visible `0` for frames without a target;
//! - results: `frame_idx,x,y,w,h,confidence`; the confidence column may be
//!   omitted on input (defaults to 1.0) but an absent box must carry an
//!   explicit confidence of 0;
//! - frame indices are contiguous from 0;
//! - manifests: JSON `{"benchmark": ..., "sequences": [...]}`.

use crate::error::{Error, Result};
use crate::metrics::{BBox, FrameAnnotation, FramePrediction};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// The X modality paired with RGB: thermal, depth, or event.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum TaskTag {
    T,
    D,
    E,
}

impl TaskTag {
    pub const ALL: [TaskTag; 3] = [TaskTag::T, TaskTag::D, TaskTag::E];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskTag::T => "T",
            TaskTag::D => "D",
            TaskTag::E => "E",
        }
    }
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" => Ok(TaskTag::T),
            "D" => Ok(TaskTag::D),
            "E" => Ok(TaskTag::E),
            other => Err(Error::Invalid(format!(
                "unknown task tag {other:?}, expected T, D, or E"
            ))),
        }
    }
}

/// One sequence entry of a benchmark manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub id: String,
    pub task: TaskTag,
    pub frame_count: usize,
    pub annotation_path: String,
    /// Origin benchmark the sequence was drawn from.
    pub source: String,
}

/// A benchmark description: named set of sequences with modality tags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkManifest {
    #[serde(rename = "benchmark")]
    pub name: String,
    pub sequences: Vec<SequenceManifest>,
}

impl BenchmarkManifest {
    pub fn per_task_counts(&self) -> BTreeMap<TaskTag, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.sequences {
            *counts.entry(s.task).or_insert(0) += 1;
        }
        counts
    }
}

/// Tracker output for one sequence.
#[derive(Clone, Debug)]
pub struct TrackerResult {
    pub tracker_name: String,
    pub sequence_id: String,
    pub frames: Vec<FramePrediction>,
}

fn parse_err(origin: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        origin: origin.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_coord(field: &str, name: &str, origin: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(origin, line, format!("bad {name} value {field:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(
            origin,
            line,
            format!("{name} must be finite, got {field:?}"),
        ));
    }
    Ok(v)
}

/// Parse the four coordinate fields, distinguishing a present box from the
/// all-`nan` absent form.
fn parse_box_fields(
    fields: &[&str],
    origin: &str,
    line: usize,
) -> Result<Option<BBox>> {
    let nan_count = fields.iter().filter(|f| **f == "nan").count();
    match nan_count {
        4 => Ok(None),
        0 => {
            let x = parse_coord(fields[0], "x", origin, line)?;
            let y = parse_coord(fields[1], "y", origin, line)?;
            let w = parse_coord(fields[2], "w", origin, line)?;
            let h = parse_coord(fields[3], "h", origin, line)?;
            let b = BBox::new(x, y, w, h)
                .map_err(|e| parse_err(origin, line, e.to_string()))?;
            Ok(Some(b))
        }
        _ => Err(parse_err(
            origin,
            line,
            "box must be fully present or fully nan",
        )),
    }
}

fn check_frame_idx(field: &str, expected: usize, origin: &str, line: usize) -> Result<()> {
    let idx: usize = field
        .parse()
        .map_err(|_| parse_err(origin, line, format!("bad frame index {field:?}")))?;
    if idx != expected {
        return Err(parse_err(
            origin,
            line,
            format!("frame indices must be contiguous from 0: expected {expected}, got {idx}"),
        ));
    }
    Ok(())
}

fn split_lines(text: &str) -> Vec<&str> {
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    if trimmed.is_empty() {
        Vec::new()
    } else {
        trimmed.split('\n').collect()
    }
}

/// Parse annotation text; `origin` labels error messages (usually the path).
pub fn parse_annotations_str(text: &str, origin: &str) -> Result<Vec<FrameAnnotation>> {
    let mut frames = Vec::new();
    for (i, raw) in split_lines(text).iter().enumerate() {
        let line = i + 1;
        if raw.contains('\r') {
            return Err(parse_err(origin, line, "CR in line; grammar requires LF endings"));
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(
                origin,
                line,
                format!("expected 6 fields, got {}", fields.len()),
            ));
        }
        check_frame_idx(fields[0], i, origin, line)?;
        let bbox = parse_box_fields(&fields[1..5], origin, line)?;
        let visible = match fields[5] {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_err(
                    origin,
                    line,
                    format!("visible flag must be 0 or 1, got {other:?}"),
                ))
            }
        };
        match (visible, bbox) {
            (true, Some(b)) => frames.push(FrameAnnotation::visible(b)),
            (false, None) => frames.push(FrameAnnotation::invisible()),
            (true, None) => {
                return Err(parse_err(origin, line, "visible frame without a box"))
            }
            (false, Some(_)) => {
                return Err(parse_err(origin, line, "invisible frame with a box"))
            }
        }
    }
    Ok(frames)
}

pub fn parse_annotations(path: &Path) -> Result<Vec<FrameAnnotation>> {
    let text = std::fs::read_to_string(path)?;
    parse_annotations_str(&text, &path.display().to_string())
}

/// Parse result text; confidence defaults to 1.0 when the column is absent.
pub fn parse_results_str(text: &str, origin: &str) -> Result<Vec<FramePrediction>> {
    let mut frames = Vec::new();
    for (i, raw) in split_lines(text).iter().enumerate() {
        let line = i + 1;
        if raw.contains('\r') {
            return Err(parse_err(origin, line, "CR in line; grammar requires LF endings"));
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 5 && fields.len() != 6 {
            return Err(parse_err(
                origin,
                line,
                format!("expected 5 or 6 fields, got {}", fields.len()),
            ));
        }
        check_frame_idx(fields[0], i, origin, line)?;
        let bbox = parse_box_fields(&fields[1..5], origin, line)?;
        let confidence = if fields.len() == 6 {
            let c = parse_coord(fields[5], "confidence", origin, line)?;
            if !(0.0..=1.0).contains(&c) {
                return Err(parse_err(
                    origin,
                    line,
                    format!("confidence must lie in [0,1], got {c}"),
                ));
            }
            c
        } else {
            1.0
        };
        let pred = FramePrediction::new(bbox, confidence)
            .map_err(|e| parse_err(origin, line, e.to_string()))?;
        frames.push(pred);
    }
    Ok(frames)
}

pub fn parse_results(path: &Path) -> Result<Vec<FramePrediction>> {
    let text = std::fs::read_to_string(path)?;
    parse_results_str(&text, &path.display().to_string())
}

/// Canonical annotation emission; `parse_annotations_str` inverts it.
pub fn emit_annotations(frames: &[FrameAnnotation]) -> String {
    let mut out = String::new();
    for (i, f) in frames.iter().enumerate() {
        match f.bbox() {
            Some(b) => out.push_str(&format!(
                "{i},{},{},{},{},1\n",
                b.x(),
                b.y(),
                b.w(),
                b.h()
            )),
            None => out.push_str(&format!("{i},nan,nan,nan,nan,0\n")),
        }
    }
    out
}

/// Canonical result emission; the confidence column is always written.
pub fn emit_results(frames: &[FramePrediction]) -> String {
    let mut out = String::new();
    for (i, f) in frames.iter().enumerate() {
        match f.bbox() {
            Some(b) => out.push_str(&format!(
                "{i},{},{},{},{},{}\n",
                b.x(),
                b.y(),
                b.w(),
                b.h(),
                f.confidence()
            )),
            None => out.push_str(&format!("{i},nan,nan,nan,nan,0\n")),
        }
    }
    out
}

/// Write a file atomically: write to a sibling temp file, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<BenchmarkManifest> {
    let text = std::fs::read_to_string(path)?;
    let manifest: BenchmarkManifest = serde_json::from_str(&text)?;
    for s in &manifest.sequences {
        if s.frame_count == 0 {
            return Err(Error::Invalid(format!(
                "sequence {} has frame_count 0",
                s.id
            )));
        }
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &BenchmarkManifest, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// A single check failure found while validating a benchmark.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateId(String),
    ZeroFrameCount(String),
    MissingAnnotations(String),
    FrameCountMismatch {
        id: String,
        manifest: usize,
        actual: usize,
    },
    TaskImbalance(BTreeMap<TaskTag, usize>),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(id) => write!(f, "duplicate sequence id {id:?}"),
            Violation::ZeroFrameCount(id) => write!(f, "sequence {id:?} has frame_count 0"),
            Violation::MissingAnnotations(id) => {
                write!(f, "sequence {id:?} has no annotations")
            }
            Violation::FrameCountMismatch {
                id,
                manifest,
                actual,
            } => write!(
                f,
                "sequence {id:?}: manifest says {manifest} frames, annotations have {actual}"
            ),
            Violation::TaskImbalance(counts) => {
                let parts: Vec<String> =
                    counts.iter().map(|(t, c)| format!("{t}={c}")).collect();
                write!(f, "unbalanced task counts: {}", parts.join(" "))
            }
        }
    }
}

/// Validate manifest consistency: unique ids, frame counts matching the
/// annotations, and balanced per-task sequence counts. An empty list means
/// the benchmark is valid.
pub fn validate_benchmark(
    manifest: &BenchmarkManifest,
    annotations: &BTreeMap<String, Vec<FrameAnnotation>>,
) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut seen = std::collections::BTreeSet::new();
    for s in &manifest.sequences {
        if !seen.insert(s.id.as_str()) {
            violations.push(Violation::DuplicateId(s.id.clone()));
        }
        if s.frame_count == 0 {
            violations.push(Violation::ZeroFrameCount(s.id.clone()));
        }
        match annotations.get(&s.id) {
            None => violations.push(Violation::MissingAnnotations(s.id.clone())),
            Some(frames) if frames.len() != s.frame_count => {
                violations.push(Violation::FrameCountMismatch {
                    id: s.id.clone(),
                    manifest: s.frame_count,
                    actual: frames.len(),
                })
            }
            Some(_) => {}
        }
    }

    let counts = manifest.per_task_counts();
    let distinct: std::collections::BTreeSet<usize> = counts.values().copied().collect();
    if distinct.len() > 1 {
        violations.push(Violation::TaskImbalance(counts));
    }

    violations
}
