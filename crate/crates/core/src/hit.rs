use std::io::Write;

use serde::{Deserialize, Serialize};

/// Time-of-arrival quantum of the readout (ns).
pub const TOA_QUANTUM_NS: f64 = 1.5625;
/// Time-over-threshold quantum of the readout (ns).
pub const TOT_QUANTUM_NS: u32 = 25;

/// One pixel firing as recorded by the readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RawHit {
    /// Arrival time in units of [`TOA_QUANTUM_NS`].
    pub toa_ticks: u64,
    pub chip: u8,
    pub col: u16,
    pub row: u16,
    /// Time over threshold in ns, a multiple of [`TOT_QUANTUM_NS`].
    pub tot_ns: u32,
}

impl RawHit {
    pub fn toa_ns(&self) -> f64 {
        self.toa_ticks as f64 * TOA_QUANTUM_NS
    }

    pub fn pixel(&self) -> (u16, u16) {
        (self.col, self.row)
    }
}

/// Quantize a time in ns to readout ticks; negative times clamp to zero.
pub fn toa_to_ticks(t_ns: f64) -> u64 {
    (t_ns / TOA_QUANTUM_NS).round().max(0.0) as u64
}

/// Header of the event CSV.
pub const EVENT_HEADER: &str = "chip,col,row,toa_ns,tot_ns";

/// Write hits as event CSV, optionally preceded by a metadata line.
pub fn write_events<W: Write>(
    out: W,
    hits: &[RawHit],
    meta: Option<&crate::metadata::OutputMeta>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(out);
    if let Some(meta) = meta {
        writeln!(out, "{}", meta.header_line())?;
    }
    writeln!(out, "{EVENT_HEADER}")?;
    for h in hits {
        writeln!(
            out,
            "{},{},{},{},{}",
            h.chip,
            h.col,
            h.row,
            h.toa_ns(),
            h.tot_ns
        )?;
    }
    out.flush()
}
