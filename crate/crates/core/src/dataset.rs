//! `FLSHDS1` dataset container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "FLSHDS1\0" (8 bytes) | version u16 = 1 | rows u16 | cols u16 | record_count u32
//! per record: pe u32 | rows*cols PL bytes (u8) | rows*cols VL values (u16)
//! ```
//!
//! No compression and no padding. An empty record list is written with
//! `rows = cols = 0`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{CellGrid, ChannelRecord, PECycle, ProgramLevel, VoltageLevel};

pub const MAGIC: &[u8; 8] = b"FLSHDS1\0";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

/// Encoded size in bytes of one record with the given grid dimensions.
pub fn record_len(rows: usize, cols: usize) -> usize {
    4 + rows * cols * 3
}

pub fn serialize_dataset<W: Write>(records: &[ChannelRecord], mut out: W) -> Result<()> {
    let (rows, cols) = records.first().map(|r| r.dims()).unwrap_or((0, 0));
    if let Some(bad) = records.iter().find(|r| r.dims() != (rows, cols)) {
        return Err(Error::DimensionMismatch(format!(
            "record of {:?} in a {rows}x{cols} dataset",
            bad.dims()
        )));
    }
    let rows16 = u16::try_from(rows).map_err(|_| Error::DimensionMismatch(format!("{rows} rows")))?;
    let cols16 = u16::try_from(cols).map_err(|_| Error::DimensionMismatch(format!("{cols} cols")))?;
    let count = u32::try_from(records.len())
        .map_err(|_| Error::InvalidParameter(format!("{} records", records.len())))?;

    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&rows16.to_le_bytes());
    header.extend_from_slice(&cols16.to_le_bytes());
    header.extend_from_slice(&count.to_le_bytes());
    out.write_all(&header)?;

    let mut buf = Vec::with_capacity(record_len(rows, cols));
    for rec in records {
        buf.clear();
        buf.extend_from_slice(&rec.pe.count().to_le_bytes());
        buf.extend(rec.pl.cells().iter().map(|l| l.value()));
        for v in rec.vl.cells() {
            buf.extend_from_slice(&v.bin().to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(src: &mut R, buf: &mut [u8], what: &'static str) -> Result<()> {
    src.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(what),
        _ => Error::Io(e),
    })
}

pub fn deserialize_dataset<R: Read>(mut src: R) -> Result<Vec<ChannelRecord>> {
    let mut header = [0u8; HEADER_LEN];
    read_exact_or(&mut src, &mut header[..8], "magic")?;
    if &header[..8] != MAGIC {
        return Err(Error::BadMagic("FLSHDS1"));
    }
    read_exact_or(&mut src, &mut header[8..], "header")?;
    let version = u16::from_le_bytes([header[8], header[9]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            format: "FLSHDS1",
            version,
        });
    }
    let rows = u16::from_le_bytes([header[10], header[11]]) as usize;
    let cols = u16::from_le_bytes([header[12], header[13]]) as usize;
    let count = u32::from_le_bytes([header[14], header[15], header[16], header[17]]) as usize;

    let n = rows * cols;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    let mut buf = vec![0u8; record_len(rows, cols)];
    for _ in 0..count {
        read_exact_or(&mut src, &mut buf, "record")?;
        let pe = PECycle(u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]));
        let pl = buf[4..4 + n]
            .iter()
            .map(|&b| ProgramLevel::new(b))
            .collect::<Result<Vec<_>>>()?;
        let vl = buf[4 + n..]
            .chunks_exact(2)
            .map(|c| VoltageLevel::new(u16::from_le_bytes([c[0], c[1]])))
            .collect::<Result<Vec<_>>>()?;
        records.push(ChannelRecord {
            pl: CellGrid::new(rows, cols, pl)?,
            vl: CellGrid::new(rows, cols, vl)?,
            pe,
        });
    }
    Ok(records)
}

pub fn save_dataset(path: impl AsRef<Path>, records: &[ChannelRecord]) -> Result<()> {
    let f = File::create(path)?;
    serialize_dataset(records, BufWriter::new(f))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<ChannelRecord>> {
    let f = File::open(path)?;
    deserialize_dataset(BufReader::new(f))
}
