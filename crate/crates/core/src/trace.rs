//! Text trace format.
//!
//! One record per line: `<icount> <R|W> <hex-address> [<cycle>]`. Blank lines
//! and lines whose first non-space character is `#` are skipped. The address
//! may carry a `0x` prefix. When the optional cycle column is present it sets
//! the record's timestamp directly; otherwise time is `icount / frequency`.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest legal byte address plus one.
pub const ADDRESS_LIMIT: u64 = 1 << 48;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot open trace {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("trace read error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: icount {icount} is smaller than the previous record's {previous}")]
    Ordering {
        line: usize,
        icount: u64,
        previous: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Read,
    Write,
}

impl Op {
    pub fn is_write(self) -> bool {
        matches!(self, Op::Write)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceRecord {
    pub icount: u64,
    pub op: Op,
    pub address: u64,
    /// Explicit timestamp in core cycles; overrides the icount-based clock.
    pub cycle: Option<u64>,
}

impl TraceRecord {
    pub fn read(icount: u64, address: u64) -> Self {
        Self {
            icount,
            op: Op::Read,
            address,
            cycle: None,
        }
    }

    pub fn write(icount: u64, address: u64) -> Self {
        Self {
            icount,
            op: Op::Write,
            address,
            cycle: None,
        }
    }

    /// Simulated time in seconds at `frequency_hz`, assuming one instruction per cycle
    /// unless an explicit cycle stamp is present.
    pub fn time_s(&self, frequency_hz: f64) -> f64 {
        self.cycle.unwrap_or(self.icount) as f64 / frequency_hz
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            Op::Read => 'R',
            Op::Write => 'W',
        };
        write!(f, "{} {} {:#x}", self.icount, op, self.address)?;
        if let Some(c) = self.cycle {
            write!(f, " {c}")?;
        }
        Ok(())
    }
}

/// Parse a single non-comment line. `line_no` is only used for error messages.
pub fn parse_line(text: &str, line_no: usize) -> Result<Option<TraceRecord>, TraceError> {
    let body = text.trim();
    if body.is_empty() || body.starts_with('#') {
        return Ok(None);
    }
    let err = |reason: String| TraceError::Parse {
        line: line_no,
        reason,
    };
    let mut fields = body.split_whitespace();
    let icount = fields
        .next()
        .ok_or_else(|| err("missing icount".into()))?
        .parse::<u64>()
        .map_err(|e| err(format!("bad icount: {e}")))?;
    let op = match fields.next() {
        Some("R") | Some("r") => Op::Read,
        Some("W") | Some("w") => Op::Write,
        Some(other) => return Err(err(format!("bad op `{other}`, expected R or W"))),
        None => return Err(err("missing op".into())),
    };
    let addr_text = fields.next().ok_or_else(|| err("missing address".into()))?;
    let digits = addr_text
        .strip_prefix("0x")
        .or_else(|| addr_text.strip_prefix("0X"))
        .unwrap_or(addr_text);
    let address = u64::from_str_radix(digits, 16).map_err(|e| err(format!("bad address: {e}")))?;
    if address >= ADDRESS_LIMIT {
        return Err(err(format!("address {address:#x} exceeds 48 bits")));
    }
    let cycle = match fields.next() {
        Some(c) => Some(
            c.parse::<u64>()
                .map_err(|e| err(format!("bad cycle: {e}")))?,
        ),
        None => None,
    };
    if let Some(extra) = fields.next() {
        return Err(err(format!("unexpected trailing field `{extra}`")));
    }
    Ok(Some(TraceRecord {
        icount,
        op,
        address,
        cycle,
    }))
}

/// Streaming reader that enforces non-decreasing icount.
pub struct TraceReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    last_icount: Option<u64>,
    failed: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            last_icount: None,
            failed: false,
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            };
            self.line_no += 1;
            match parse_line(&line, self.line_no) {
                Ok(None) => continue,
                Ok(Some(rec)) => {
                    if let Some(prev) = self.last_icount {
                        if rec.icount < prev {
                            self.failed = true;
                            return Some(Err(TraceError::Ordering {
                                line: self.line_no,
                                icount: rec.icount,
                                previous: prev,
                            }));
                        }
                    }
                    self.last_icount = Some(rec.icount);
                    return Some(Ok(rec));
                }
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceReader<BufReader<File>>, TraceError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TraceError::Open {
        path: path.display().to_string(),
        source,
    })?;
    Ok(TraceReader::new(BufReader::new(file)))
}

/// Read a whole trace into memory.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, TraceError> {
    read_trace(path)?.collect()
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    TraceReader::new(text.as_bytes()).collect()
}

pub fn write_trace<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a TraceRecord>,
) -> io::Result<()> {
    for r in records {
        writeln!(out, "{r}")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_read() {
        let recs = parse_trace("100 R 0x1f40\n").unwrap();
        assert_eq!(recs, vec![TraceRecord::read(100, 0x1f40)]);
    }

    #[test]
    fn empty_input_is_empty_trace() {
        assert!(parse_trace("").unwrap().is_empty());
        assert!(parse_trace("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn ordering_violation_names_the_line() {
        let err = parse_trace("100 W 0x0\n50 R 0x0\n").unwrap_err();
        match err {
            TraceError::Ordering {
                line,
                icount,
                previous,
            } => {
                assert_eq!((line, icount, previous), (2, 50, 100));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn optional_cycle_column_sets_time() {
        let recs = parse_trace("10 W 40 4000\n").unwrap();
        assert_eq!(recs[0].cycle, Some(4000));
        assert_eq!(recs[0].time_s(2e9), 2e-6);
        assert_eq!(TraceRecord::read(4000, 0).time_s(2e9), 2e-6);
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        for (text, line) in [
            ("1 R 0x0\n2 X 0x0\n", 2),
            ("# c\nabc R 0x0\n", 2),
            ("1 R zz\n", 1),
            ("1 R\n", 1),
            ("1 R 0x1000000000000\n", 1),
            ("1 R 0x0 5 6\n", 1),
        ] {
            match parse_trace(text) {
                Err(TraceError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn display_round_trips() {
        let recs = vec![
            TraceRecord::write(0, 0x40),
            TraceRecord::read(7, 0xdead_beef),
            TraceRecord {
                cycle: Some(99),
                ..TraceRecord::read(8, 0)
            },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &recs).unwrap();
        assert_eq!(
            parse_trace(std::str::from_utf8(&buf).unwrap()).unwrap(),
            recs
        );
    }
}
