use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use crate::detector::{DetectorLayout, LOGICAL_SIZE};
use crate::error::{Error, Result};
use crate::hit::{RawHit, EVENT_HEADER, TOA_QUANTUM_NS, TOT_QUANTUM_NS};

pub const DEFAULT_REORDER_BUFFER: usize = 1024;

/// Streaming reader of event CSV files.
///
/// Hits pass through a min-heap of `reorder_buffer` entries, which absorbs
/// local disorder in the input. A hit that would be emitted before one
/// already emitted is an [`Error::Order`].
pub struct EventReader<R> {
    lines: std::io::Lines<BufReader<R>>,
    path: PathBuf,
    line_no: u64,
    header_seen: bool,
    heap: BinaryHeap<Reverse<(RawHit, u64)>>,
    capacity: usize,
    last: Option<RawHit>,
    done: bool,
}

impl EventReader<File> {
    pub fn open(path: &Path, reorder_buffer: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(file, path, reorder_buffer))
    }
}

impl<R: Read> EventReader<R> {
    pub fn new(input: R, path: &Path, reorder_buffer: usize) -> Self {
        Self {
            lines: BufReader::new(input).lines(),
            path: path.to_path_buf(),
            line_no: 0,
            header_seen: false,
            heap: BinaryHeap::new(),
            capacity: reorder_buffer.max(1),
            last: None,
            done: false,
        }
    }

    fn parse_error(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Next parsed hit from the file, skipping comments and the header.
    fn next_raw(&mut self) -> Option<Result<(RawHit, u64)>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            if !self.header_seen {
                self.header_seen = true;
                let header: Vec<&str> = text.split(',').map(str::trim).collect();
                if header.join(",") != EVENT_HEADER {
                    return Some(Err(self.parse_error(
                        self.line_no,
                        format!("expected header `{EVENT_HEADER}`, found `{text}`"),
                    )));
                }
                continue;
            }
            return Some(
                parse_hit(text)
                    .map(|h| (h, self.line_no))
                    .map_err(|m| self.parse_error(self.line_no, m)),
            );
        }
    }

    fn emit(&mut self, hit: RawHit, line: u64) -> Result<RawHit> {
        if let Some(last) = self.last {
            if hit.toa_ticks < last.toa_ticks {
                return Err(Error::Order {
                    path: self.path.clone(),
                    line,
                    toa_ns: hit.toa_ns(),
                    last_ns: last.toa_ns(),
                    buffer: self.capacity,
                });
            }
        }
        self.last = Some(hit);
        Ok(hit)
    }
}

impl<R: Read> Iterator for EventReader<R> {
    type Item = Result<RawHit>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        while self.heap.len() < self.capacity {
            match self.next_raw() {
                Some(Ok(entry)) => self.heap.push(Reverse(entry)),
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                None => break,
            }
        }
        let Reverse((hit, line)) = self.heap.pop()?;
        let out = self.emit(hit, line);
        if out.is_err() {
            self.done = true;
        }
        Some(out)
    }
}

fn parse_hit(text: &str) -> std::result::Result<RawHit, String> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    }
    fn num<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
        s.parse().map_err(|_| format!("invalid {name} `{s}`"))
    }
    let chip: u8 = num(fields[0], "chip")?;
    let col: u16 = num(fields[1], "col")?;
    let row: u16 = num(fields[2], "row")?;
    let toa_ns: f64 = num(fields[3], "toa_ns")?;
    let tot_ns: u32 = num(fields[4], "tot_ns")?;
    if col >= LOGICAL_SIZE || row >= LOGICAL_SIZE {
        return Err(format!(
            "pixel ({col}, {row}) outside the {LOGICAL_SIZE}x{LOGICAL_SIZE} matrix"
        ));
    }
    if chip != DetectorLayout::chip_of(col, row) {
        return Err(format!("chip {chip} does not contain pixel ({col}, {row})"));
    }
    if !(toa_ns >= 0.0) || !toa_ns.is_finite() {
        return Err(format!("invalid toa_ns {toa_ns}"));
    }
    let ticks = toa_ns / TOA_QUANTUM_NS;
    if (ticks - ticks.round()).abs() > 1e-6 {
        return Err(format!(
            "toa_ns {toa_ns} is not a multiple of {TOA_QUANTUM_NS} ns"
        ));
    }
    if tot_ns == 0 || !tot_ns.is_multiple_of(TOT_QUANTUM_NS) {
        return Err(format!(
            "tot_ns {tot_ns} is not a positive multiple of {TOT_QUANTUM_NS} ns"
        ));
    }
    Ok(RawHit {
        toa_ticks: ticks.round() as u64,
        chip,
        col,
        row,
        tot_ns,
    })
}

/// Read a whole event file into a time-ordered vector.
pub fn read_events(path: &Path, reorder_buffer: usize) -> Result<Vec<RawHit>> {
    EventReader::open(path, reorder_buffer)?.collect()
}
