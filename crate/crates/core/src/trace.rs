//! Score-trace CSV: header `cid,alpha,t_ms`, one record per row.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{ScoreRecord, TimeInstant};

pub const HEADER: &str = "cid,alpha,t_ms";

/// Reads a score trace from disk. Records are returned in file order.
pub fn parse_trace(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_str(&text, &path.display().to_string())
}

/// Parses trace text; `origin` names the source in diagnostics. Rows are
/// numbered from 1, with the header on row 1.
pub fn parse_trace_str(text: &str, origin: &str) -> Result<Vec<ScoreRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_owned(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == HEADER => {}
        Some((_, h)) => return Err(err(1, format!("expected header {HEADER:?}, found {h:?}"))),
        None => return Err(err(1, format!("missing header {HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (i, raw) in lines {
        let row = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [cid, alpha, t] = fields.as_slice() else {
            return Err(err(row, format!("expected 3 fields, found {}", fields.len())));
        };
        if cid.is_empty() {
            return Err(err(row, "empty classifier id".into()));
        }
        let alpha: f64 = alpha
            .trim()
            .parse()
            .map_err(|_| err(row, format!("invalid alpha {alpha:?}")))?;
        if !alpha.is_finite() {
            return Err(err(row, format!("alpha must be finite, got {alpha}")));
        }
        let t: i64 = t
            .trim()
            .parse()
            .map_err(|_| err(row, format!("invalid t_ms {t:?}")))?;
        if t < 0 {
            return Err(err(row, format!("t_ms must be non-negative, got {t}")));
        }
        let record = ScoreRecord::new(*cid, alpha, TimeInstant(t));
        record.validate().map_err(|e| err(row, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_trace<W: Write>(records: &[ScoreRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{}", r.cid, r.alpha, r.t.as_millis())?;
    }
    Ok(())
}
