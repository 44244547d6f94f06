//! Memory-controller reference traces: `Seq,ReadOrWrite,PhysicalAddress,Interval`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::TraceError;

pub const TRACE_HEADER: [&str; 4] = ["Seq", "ReadOrWrite", "PhysicalAddress", "Interval"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Read,
    Write,
}

impl Op {
    pub fn as_str(&self) -> &'static str {
        match self {
            Op::Read => "read",
            Op::Write => "write",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub op: Op,
    pub address: u64,
    /// Ticks since the previous event.
    pub interval: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryTrace {
    events: Vec<TraceEvent>,
}

impl MemoryTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from events; sequence numbers must strictly increase.
    pub fn from_events(events: Vec<TraceEvent>) -> Result<Self, TraceError> {
        for (i, w) in events.windows(2).enumerate() {
            if w[1].seq <= w[0].seq {
                return Err(TraceError::Parse {
                    row: i + 2,
                    message: format!("sequence {} does not follow {}", w[1].seq, w[0].seq),
                });
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    /// Append an event with the next sequence number.
    pub fn push(&mut self, op: Op, address: u64, interval: u64) {
        let seq = self.next_seq();
        self.events.push(TraceEvent {
            seq,
            op,
            address,
            interval,
        });
    }

    pub fn reads(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.op == Op::Read)
    }

    pub fn writes(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.op == Op::Write)
    }
}

pub fn write_trace<W: Write>(trace: &MemoryTrace, dest: W) -> Result<(), TraceError> {
    let mut out = BufWriter::new(dest);
    writeln!(out, "{}", TRACE_HEADER.join(","))?;
    for e in &trace.events {
        writeln!(out, "{},{},{:x},{}", e.seq, e.op, e.address, e.interval)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(source: R) -> Result<MemoryTrace, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let mut events: Vec<TraceEvent> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if row == 1 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("seq")) {
            continue;
        }
        let bad = |message: String| TraceError::Parse { row, message };
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", record.len())));
        }
        let seq: u64 = record[0]
            .parse()
            .map_err(|_| bad(format!("bad sequence number {:?}", &record[0])))?;
        let op = match &record[1] {
            "read" => Op::Read,
            "write" => Op::Write,
            other => return Err(bad(format!("expected read or write, found {other:?}"))),
        };
        let address = u64::from_str_radix(&record[2], 16)
            .map_err(|_| bad(format!("bad hex address {:?}", &record[2])))?;
        let interval: u64 = record[3]
            .parse()
            .map_err(|_| bad(format!("bad interval {:?}", &record[3])))?;
        if let Some(prev) = events.last() {
            if seq <= prev.seq {
                return Err(bad(format!("sequence {seq} does not follow {}", prev.seq)));
            }
        }
        events.push(TraceEvent {
            seq,
            op,
            address,
            interval,
        });
    }
    Ok(MemoryTrace { events })
}

pub fn write_trace_file(trace: &MemoryTrace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    write_trace(trace, File::create(path)?)
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<MemoryTrace, TraceError> {
    read_trace(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "Seq,ReadOrWrite,PhysicalAddress,Interval
1,read,bfd60000,15
2,write,be1a0000,1094
3,read,bfd80000,15
4,write,be4a0000,608
";

    #[test]
    fn parses_sample_rows() {
        let t = read_trace(SAMPLE.as_bytes()).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(
            t.events()[0],
            TraceEvent {
                seq: 1,
                op: Op::Read,
                address: 0xbfd6_0000,
                interval: 15
            }
        );
        assert_eq!(t.events()[1].op, Op::Write);
    }

    #[test]
    fn headerless_row_parses() {
        let t = read_trace("1,read,bfd60000,15\n".as_bytes()).unwrap();
        assert_eq!(t.events()[0].address, 0xbfd6_0000);
    }

    #[test]
    fn empty_input_is_empty_trace() {
        assert!(read_trace("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn sample_round_trips_byte_for_byte() {
        let t = read_trace(SAMPLE.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_trace(&t, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), SAMPLE);
    }

    #[test]
    fn malformed_rows_report_row_number() {
        let cases = [
            (
                "Seq,ReadOrWrite,PhysicalAddress,Interval\n1,read,zz,15\n",
                2,
            ),
            ("1,read,10,15\n2,fetch,10,15\n", 2),
            ("1,read,10\n", 1),
            ("1,read,10,15\n1,read,20,15\n", 2),
            ("1,read,10,-3\n", 1),
        ];
        for (text, row) in cases {
            match read_trace(text.as_bytes()) {
                Err(TraceError::Parse { row: r, .. }) => assert_eq!(r, row, "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }
}
