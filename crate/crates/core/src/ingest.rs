//! Detection sources: a replay file, or a line-oriented TCP stream from a
//! live detector.
//!
//! Both use one record per line:
//!
//! ```text
//! frame_ts,class_flag,confidence,px,py,ph,pw
//! 1543609955382,1,0.91,0.412,0.886,0.120,0.041
//! ```
//!
//! A replay groups consecutive lines with equal `frame_ts` into a frame. On
//! the stream a blank line ends the current frame.

use std::io::{self, BufRead, BufReader};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;
use tracing::{info, warn};

use crate::geometry::PixelPoint;
use crate::perception::Detection;
use crate::pipeline::Frame;

pub const DETECTION_HEADER: &str = "frame_ts,class_flag,confidence,px,py,ph,pw";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {ts} goes back from {previous}")]
    NonMonotonic { line: usize, ts: u64, previous: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses one detection line. `line` is only used for error messages.
pub fn parse_detection(text: &str, line: usize) -> Result<Detection, IngestError> {
    let err = |message: String| IngestError::Parse { line, message };
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(err(format!("expected 7 fields, found {}", fields.len())));
    }
    let f = |i: usize, name: &str| -> Result<f64, IngestError> {
        fields[i].parse::<f64>().map_err(|_| err(format!("{name}: cannot parse `{}`", fields[i])))
    };
    let ts = fields[0].parse::<u64>().map_err(|_| err(format!("frame_ts: cannot parse `{}`", fields[0])))?;
    let class_flag = fields[1].parse::<u8>().map_err(|_| err(format!("class_flag: cannot parse `{}`", fields[1])))?;
    let det = Detection {
        class_flag,
        confidence: f(2, "confidence")?,
        anchor: PixelPoint::new(f(3, "px")?, f(4, "py")?),
        box_h: f(5, "ph")?,
        box_w: f(6, "pw")?,
        frame_ts: ts,
    };
    det.validate().map_err(|e| err(e.to_string()))?;
    Ok(det)
}

pub fn format_detection(d: &Detection) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        d.frame_ts, d.class_flag, d.confidence, d.anchor.px, d.anchor.py, d.box_h, d.box_w
    )
}

/// Iterator over frames of a replay file.
#[derive(Debug)]
pub struct ReplayReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    pending: Option<Detection>,
    last_ts: Option<u64>,
    done: bool,
}

impl<R: BufRead> ReplayReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0, pending: None, last_ts: None, done: false }
    }

    fn next_detection(&mut self) -> Result<Option<Detection>, IngestError> {
        for line in self.lines.by_ref() {
            self.line_no += 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || (self.line_no == 1 && t.starts_with("frame_ts")) {
                continue;
            }
            return parse_detection(t, self.line_no).map(Some);
        }
        Ok(None)
    }

    fn read_frame(&mut self) -> Result<Option<Frame>, IngestError> {
        let first = match self.pending.take() {
            Some(d) => d,
            None => match self.next_detection()? {
                Some(d) => d,
                None => return Ok(None),
            },
        };
        if let Some(prev) = self.last_ts {
            if first.frame_ts <= prev {
                return Err(IngestError::NonMonotonic { line: self.line_no, ts: first.frame_ts, previous: prev });
            }
        }
        let ts = first.frame_ts;
        let mut detections = vec![first];
        while let Some(d) = self.next_detection()? {
            if d.frame_ts == ts {
                detections.push(d);
            } else {
                self.pending = Some(d);
                break;
            }
        }
        self.last_ts = Some(ts);
        Ok(Some(Frame { ts, detections }))
    }
}

impl<R: BufRead> Iterator for ReplayReader<R> {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Sleeps so frames are released at their recorded spacing, and moves their
/// timestamps onto `now_epoch_ms` at the first frame.
#[derive(Debug)]
pub struct RealtimePacer {
    origin: Option<(u64, Instant, u64)>,
}

impl RealtimePacer {
    pub fn new() -> Self {
        Self { origin: None }
    }

    pub fn pace(&mut self, mut frame: Frame, now_epoch_ms: impl Fn() -> u64) -> Frame {
        let (ts0, start, epoch0) = *self.origin.get_or_insert_with(|| (frame.ts, Instant::now(), now_epoch_ms()));
        let offset = frame.ts.saturating_sub(ts0);
        let due = start + Duration::from_millis(offset);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
        frame.ts = epoch0 + offset;
        for d in &mut frame.detections {
            d.frame_ts = frame.ts;
        }
        frame
    }
}

impl Default for RealtimePacer {
    fn default() -> Self {
        Self::new()
    }
}

/// Reads frames from one stream connection until EOF. Malformed lines are
/// logged and skipped; the connection stays open.
pub fn read_stream(stream: impl io::Read, mut on_frame: impl FnMut(Frame)) -> io::Result<usize> {
    let reader = BufReader::new(stream);
    let mut current: Vec<Detection> = Vec::new();
    let mut frames = 0;
    let mut flush = |current: &mut Vec<Detection>, frames: &mut usize| {
        if let Some(first) = current.first() {
            let ts = first.frame_ts;
            on_frame(Frame { ts, detections: std::mem::take(current) });
            *frames += 1;
        }
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            flush(&mut current, &mut frames);
            continue;
        }
        if t.starts_with("frame_ts") || t.starts_with('#') {
            continue;
        }
        match parse_detection(t, i + 1) {
            Ok(d) => {
                if current.first().is_some_and(|f| f.frame_ts != d.frame_ts) {
                    flush(&mut current, &mut frames);
                }
                current.push(d);
            }
            Err(e) => warn!(error = %e, "skipping detection"),
        }
    }
    flush(&mut current, &mut frames);
    Ok(frames)
}

/// Accepts detector connections one at a time until `running` is cleared.
pub fn serve_detections(
    listener: TcpListener,
    running: &AtomicBool,
    mut on_frame: impl FnMut(Frame),
) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    while running.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                info!(%peer, "detector connected");
                stream.set_nonblocking(false)?;
                stream.set_read_timeout(None)?;
                if let Err(e) = read_stream(&stream, &mut on_frame) {
                    warn!(%peer, error = %e, "detector stream ended with error");
                }
                close(stream);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(20)),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn close(stream: TcpStream) {
    let _ = stream.shutdown(std::net::Shutdown::Both);
}
