//! Flat binary matrix files.
//!
//! Layout: a 16-byte header (8-byte magic, rows `u32` LE, cols `u32` LE)
//! followed by `rows * cols` values, row-major, little-endian. Two magics
//! select the element width: `NVMATF4\0` for `f32` (trial/spectrogram data)
//! and `NVMATF8\0` for `f64` (model checkpoints). The f32 form round-trips
//! bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC_F32: &[u8; 8] = b"NVMATF4\0";
pub const MAGIC_F64: &[u8; 8] = b"NVMATF8\0";

fn write_header(w: &mut impl Write, magic: &[u8; 8], rows: usize, cols: usize) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&(rows as u32).to_le_bytes())?;
    w.write_all(&(cols as u32).to_le_bytes())
}

fn read_header(r: &mut impl Read, magic: &[u8; 8], path: &Path) -> Result<(usize, usize)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)
        .map_err(|e| Error::io(path, e))?;
    if &head[..8] != magic {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}",
            path.display(),
            &head[..8]
        )));
    }
    let rows = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    Ok((rows, cols))
}

/// Write an `f32` matrix.
pub fn write_f32(path: &Path, m: &Array2<f32>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, MAGIC_F32, m.nrows(), m.ncols()).map_err(|e| Error::io(path, e))?;
    for &v in m.iter() {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read an `f32` matrix; the declared shape must match the file size.
pub fn read_f32(path: &Path) -> Result<Array2<f32>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let (rows, cols) = read_header(&mut r, MAGIC_F32, path)?;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    if buf.len() != rows * cols * 4 {
        return Err(Error::ShapeMismatch(format!(
            "{}: header says {rows}x{cols} ({} bytes), file holds {} bytes",
            path.display(),
            rows * cols * 4,
            buf.len()
        )));
    }
    let values = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// Write an `f64` matrix (checkpoint tensors).
pub fn write_f64(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, MAGIC_F64, m.nrows(), m.ncols()).map_err(|e| Error::io(path, e))?;
    for &v in m.iter() {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_f64(path: &Path) -> Result<Array2<f64>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let (rows, cols) = read_header(&mut r, MAGIC_F64, path)?;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    if buf.len() != rows * cols * 8 {
        return Err(Error::ShapeMismatch(format!(
            "{}: header says {rows}x{cols}, file holds {} bytes",
            path.display(),
            buf.len()
        )));
    }
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// Serialize an `f64` matrix to an in-memory block (checkpoint embedding).
pub fn encode_f64(m: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.len() * 8);
    out.extend_from_slice(MAGIC_F64);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for &v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode one `f64` block from `buf`, returning the matrix and bytes consumed.
pub fn decode_f64(buf: &[u8]) -> Result<(Array2<f64>, usize)> {
    if buf.len() < 16 || &buf[..8] != MAGIC_F64 {
        return Err(Error::Format("truncated or mislabeled f64 matrix block".into()));
    }
    let rows = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    let need = 16 + rows * cols * 8;
    if buf.len() < need {
        return Err(Error::Format("truncated f64 matrix block".into()));
    }
    let values = buf[16..need]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok((m, need))
}
