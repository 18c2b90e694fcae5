//! SFEB binary matrix files: 16-byte header (magic "SFEB", version,
//! rows, cols as u32 little-endian) followed by row-major f32 LE data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CorpusError, Result};

pub const MAGIC: [u8; 4] = *b"SFEB";
pub const VERSION: u32 = 1;

pub fn write_sfeb(path: &Path, rows: u32, cols: u32, data: &[f32]) -> Result<()> {
    if data.len() != rows as usize * cols as usize {
        return Err(CorpusError::Length(format!(
            "payload of {} floats for a {rows}x{cols} matrix",
            data.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sfeb(path: &Path) -> Result<(u32, u32, Vec<f32>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| {
        CorpusError::Length(format!("{}: file shorter than the 16-byte header", path.display()))
    })?;
    if header[0..4] != MAGIC {
        return Err(CorpusError::Format(format!(
            "{}: bad magic {:?}, expected \"SFEB\"",
            path.display(),
            &header[0..4]
        )));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CorpusError::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap());
    let expect = rows as usize * cols as usize * 4;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expect {
        return Err(CorpusError::Length(format!(
            "{}: payload of {} bytes, header declares {expect}",
            path.display(),
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data))
}

/// Encode one SFEB block (header + payload) into a byte buffer, for
/// files carrying several concatenated blocks.
pub fn encode_block(rows: u32, cols: u32, data: &[f32], out: &mut Vec<u8>) -> Result<()> {
    if data.len() != rows as usize * cols as usize {
        return Err(CorpusError::Length(format!(
            "payload of {} floats for a {rows}x{cols} block",
            data.len()
        )));
    }
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Decode one SFEB block starting at `offset`; returns the block and the
/// offset just past it.
pub fn decode_block(bytes: &[u8], offset: usize) -> Result<(u32, u32, Vec<f32>, usize)> {
    let header = bytes.get(offset..offset + 16).ok_or_else(|| {
        CorpusError::Length(format!("block at offset {offset} shorter than the 16-byte header"))
    })?;
    if header[0..4] != MAGIC {
        return Err(CorpusError::Format(format!("block at offset {offset}: bad magic")));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CorpusError::Format(format!(
            "block at offset {offset}: unsupported version {version}"
        )));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap());
    let n = rows as usize * cols as usize * 4;
    let payload = bytes.get(offset + 16..offset + 16 + n).ok_or_else(|| {
        CorpusError::Length(format!("block at offset {offset}: truncated payload"))
    })?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data, offset + 16 + n))
}

/// Sidecar index for per-comment embedding files: row → JSONL line number.
pub fn write_index(path: &Path, lines: &[usize]) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, lines).map_err(|e| CorpusError::Format(e.to_string()))?;
    Ok(())
}

pub fn read_index(path: &Path) -> Result<Vec<usize>> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| CorpusError::Format(e.to_string()))
}
