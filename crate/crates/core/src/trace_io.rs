//! Line-delimited JSON traces (`.trace.jsonl`) and session logs (`.log.jsonl`).
//!
//! A trace is a header line `{"profile":{..},"ground_truth":{..}?}` followed by
//! one frame per line. A session log holds one record per line, discriminated
//! by `"type"`.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeviceProfile, FeedbackEvent, GestureKind, SensorFrame};
use crate::teaching::AssessmentRecord;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace has no frames")]
    EmptyTrace,
    #[error("line {line}: t_ms {t_ms} does not increase past {prev_ms}")]
    NonMonotonicTime { line: usize, prev_ms: u64, t_ms: u64 },
    #[error("line {line}: malformed frame: {reason}")]
    MalformedFrame { line: usize, reason: String },
    #[error("line 1: malformed header: {0}")]
    MalformedHeader(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub gesture: GestureKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDocument {
    pub profile: DeviceProfile,
    pub ground_truth: Option<GroundTruth>,
    pub frames: Vec<SensorFrame>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    profile: DeviceProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<GroundTruth>,
}

fn check_header(header: &Header) -> Result<(), String> {
    header.profile.validate().map_err(|e| e.to_string())?;
    if let Some(gt) = &header.ground_truth {
        let (lo, hi) = gt.gesture.range();
        if !gt.value.is_finite() || gt.value < lo || gt.value > hi {
            return Err(format!("ground truth {} outside {} range [{lo}, {hi}]", gt.value, gt.gesture));
        }
    }
    Ok(())
}

pub fn parse_trace(text: &str) -> Result<TraceDocument, TraceError> {
    read_trace(text.as_bytes())
}

/// Parses and fully validates a trace from any buffered reader.
pub fn read_trace<R: BufRead>(reader: R) -> Result<TraceDocument, TraceError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(TraceError::MalformedHeader("missing header line".into())),
            Some((_, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let header: Header =
                    serde_json::from_str(&line).map_err(|e| TraceError::MalformedHeader(e.to_string()))?;
                check_header(&header).map_err(TraceError::MalformedHeader)?;
                break header;
            }
        }
    };

    let mut frames: Vec<SensorFrame> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let frame: SensorFrame = serde_json::from_str(&line)
            .map_err(|e| TraceError::MalformedFrame { line: line_no, reason: e.to_string() })?;
        frame
            .validate(&header.profile)
            .map_err(|e| TraceError::MalformedFrame { line: line_no, reason: e.to_string() })?;
        if let Some(prev) = frames.last() {
            if frame.t_ms <= prev.t_ms {
                return Err(TraceError::NonMonotonicTime { line: line_no, prev_ms: prev.t_ms, t_ms: frame.t_ms });
            }
        }
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    Ok(TraceDocument { profile: header.profile, ground_truth: header.ground_truth, frames })
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<TraceDocument, TraceError> {
    let file = File::open(path)?;
    read_trace(io::BufReader::new(file))
}

pub fn write_trace(doc: &TraceDocument) -> String {
    let header = Header { profile: doc.profile.clone(), ground_truth: doc.ground_truth.clone() };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for frame in &doc.frames {
        out.push_str(&serde_json::to_string(frame).expect("frame serializes"));
        out.push('\n');
    }
    out
}

pub fn save_trace(doc: &TraceDocument, path: impl AsRef<Path>) -> io::Result<()> {
    std::fs::write(path, write_trace(doc))
}

/// A feedback event tagged with the session that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEnvelope {
    pub session_id: String,
    pub event: FeedbackEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Assessment(AssessmentRecord),
    Feedback(FeedbackEnvelope),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("log line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Serializes one record as a complete line, newline included.
pub fn encode_record(record: &LogRecord) -> String {
    let mut line = serde_json::to_string(record).expect("log record serializes");
    line.push('\n');
    line
}

/// Writes one record with a single `write_all` so a well-behaved append-mode
/// file never interleaves two records.
pub fn write_record<W: Write>(mut out: W, record: &LogRecord) -> io::Result<()> {
    out.write_all(encode_record(record).as_bytes())?;
    out.flush()
}

/// Append handle on a session log. Opening truncates a torn trailing line
/// left behind by an interrupted writer.
#[derive(Debug)]
pub struct SessionLog {
    path: PathBuf,
    file: File,
}

impl SessionLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        {
            let mut file = OpenOptions::new().create(true).truncate(false).read(true).write(true).open(&path)?;
            let keep = complete_prefix_len(&mut file)?;
            if keep < file.metadata()?.len() {
                file.set_len(keep)?;
                file.sync_data()?;
            }
        }
        let file = OpenOptions::new().append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), LogError> {
        write_record(&mut self.file, record)?;
        self.file.sync_data()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Length of the file up to and including its last newline.
fn complete_prefix_len(file: &mut File) -> io::Result<u64> {
    let len = file.metadata()?.len();
    let mut end = len;
    let mut buf = [0u8; 4096];
    while end > 0 {
        let start = end.saturating_sub(buf.len() as u64);
        let chunk = &mut buf[..(end - start) as usize];
        file.seek(SeekFrom::Start(start))?;
        file.read_exact(chunk)?;
        if let Some(pos) = chunk.iter().rposition(|&b| b == b'\n') {
            return Ok(start + pos as u64 + 1);
        }
        end = start;
    }
    Ok(0)
}

pub fn append_session_log(record: &LogRecord, path: impl AsRef<Path>) -> Result<(), LogError> {
    SessionLog::open(path)?.append(record)
}

/// Reads every complete record. A trailing line without its newline is an
/// interrupted append and is ignored.
pub fn read_session_log(path: impl AsRef<Path>) -> Result<Vec<LogRecord>, LogError> {
    let text = std::fs::read_to_string(path)?;
    parse_session_log(&text)
}

pub fn parse_session_log(text: &str) -> Result<Vec<LogRecord>, LogError> {
    let complete = match text.rfind('\n') {
        Some(pos) => &text[..=pos],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LogError::Malformed { line: i + 1, reason: e.to_string() })
        })
        .collect()
}
