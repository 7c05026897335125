//! Time-tag streams on disk.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BFTT"
//! 4       2     version (1)
//! 6       8     record count N
//! 14      9*N   records: channel (u8), timestamp_ps (u64)
//! ```
//!
//! The CSV twin carries the same records plus the simulation ground truth
//! (event kind / origin), which the binary format deliberately omits.

use std::io::{self, BufRead, Read, Write};

use crate::apd::ApdEvent;
use crate::optics::MonitorEvent;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BFTT";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 14;
pub const RECORD_LEN: usize = 9;

pub const CHANNEL_APD: u8 = 0;
pub const CHANNEL_MONITOR: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeTagRecord {
    pub channel: u8,
    pub timestamp_ps: u64,
}

impl From<&ApdEvent> for TimeTagRecord {
    fn from(e: &ApdEvent) -> Self {
        TimeTagRecord { channel: CHANNEL_APD, timestamp_ps: e.timestamp_ps }
    }
}

impl From<&MonitorEvent> for TimeTagRecord {
    fn from(e: &MonitorEvent) -> Self {
        TimeTagRecord { channel: CHANNEL_MONITOR, timestamp_ps: e.timestamp_ps }
    }
}

pub fn write_tags<W: Write>(mut w: W, records: &[TimeTagRecord]) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        w.write_all(&[r.channel])?;
        w.write_all(&r.timestamp_ps.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_tags<R: Read>(mut r: R) -> Result<Vec<TimeTagRecord>> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|e| truncated(e, "header"))?;
    if header[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &header[..4])));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(header[6..14].try_into().expect("8 bytes"));
    let mut records = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut buf = [0u8; RECORD_LEN];
    for i in 0..count {
        r.read_exact(&mut buf).map_err(|e| truncated(e, &format!("record {i} of {count}")))?;
        records.push(TimeTagRecord {
            channel: buf[0],
            timestamp_ps: u64::from_le_bytes(buf[1..].try_into().expect("8 bytes")),
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format(format!("trailing bytes after {count} records")));
    }
    Ok(records)
}

fn truncated(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format(format!("truncated {what}"))
    } else {
        Error::Io(e)
    }
}

pub fn write_apd_csv<W: Write>(mut w: W, events: &[ApdEvent]) -> io::Result<()> {
    writeln!(w, "channel,timestamp_ps,gate_index,kind")?;
    for e in events {
        writeln!(w, "{},{},{},{}", CHANNEL_APD, e.timestamp_ps, e.gate_index, e.kind.as_str())?;
    }
    w.flush()
}

pub fn write_monitor_csv<W: Write>(mut w: W, events: &[MonitorEvent]) -> io::Result<()> {
    writeln!(w, "channel,timestamp_ps,origin")?;
    for e in events {
        writeln!(w, "{},{},{}", CHANNEL_MONITOR, e.timestamp_ps, e.origin.as_str())?;
    }
    w.flush()
}

/// Reads the `channel,timestamp_ps` columns of either CSV flavour.
pub fn read_tags_csv<R: BufRead>(r: R) -> Result<Vec<TimeTagRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate().skip(1) {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let bad = || Error::Format(format!("line {}: `{line}`", n + 1));
        let channel = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        let timestamp_ps = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        out.push(TimeTagRecord { channel, timestamp_ps });
    }
    Ok(out)
}
