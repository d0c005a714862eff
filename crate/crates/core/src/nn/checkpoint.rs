//! Binary weight checkpoints.
//!
//! Layout (all integers little-endian):
//!   magic "MRSW" | version u32 | count u32
//!   then per entry: name_len u32 | name utf-8 | rank u32 | dims u32 * rank
//!   | f32 data (product of dims values)

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Parameter;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"MRSW";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn save_params(path: &Path, params: &[Parameter]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for d in &shape {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        let data = p.tensor.to_vec();
        let mut buf = Vec::with_capacity(data.len() * 4);
        for v in &data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reader that remembers its byte offset so malformed files can be
/// reported with the position of the failure.
pub(crate) struct Tracked<R> {
    inner: R,
    pos: usize,
}

impl<R: Read> Tracked<R> {
    pub(crate) fn new(inner: R) -> Tracked<R> {
        Tracked { inner, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format(format!("truncated at byte offset {}", self.pos))
            } else {
                Error::Io(e)
            }
        })?;
        self.pos += buf.len();
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    /// Like `u32`, but EOF here is a clean end of stream, not an error.
    pub(crate) fn u32_or_end(&mut self) -> Result<Option<u32>> {
        let mut b = [0u8; 4];
        match self.inner.read_exact(&mut b) {
            Ok(()) => {
                self.pos += 4;
                Ok(Some(u32::from_le_bytes(b)))
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
            Err(e) => Err(Error::Io(e)),
        }
    }
}

/// One named weight block as stored on disk.
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn read_entries(path: &Path) -> Result<Vec<Entry>> {
    let mut r = Tracked::new(std::io::BufReader::new(std::fs::File::open(path)?));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::Format(format!(
            "bad weights magic {:?} at byte offset 0",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!(
            "unsupported weights version {version} at byte offset 4"
        )));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let at = r.pos();
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format(format!("weight name at byte offset {at} is not valid utf-8")))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push(Entry { name, shape, data });
    }
    Ok(entries)
}

/// Loads a checkpoint into an existing parameter list. Every parameter must
/// be present with a matching shape; extra entries in the file are an error.
pub fn load_params(path: &Path, params: &[Parameter]) -> Result<()> {
    let entries = read_entries(path)?;
    let mut by_name: std::collections::HashMap<&str, &Entry> =
        entries.iter().map(|e| (e.name.as_str(), e)).collect();
    for p in params {
        let e = by_name.remove(p.name.as_str()).ok_or_else(|| {
            Error::Format(format!("checkpoint is missing weight '{}'", p.name))
        })?;
        if e.shape != p.tensor.shape() {
            return Err(Error::Format(format!(
                "shape mismatch for '{}': file {:?}, model {:?}",
                p.name,
                e.shape,
                p.tensor.shape()
            )));
        }
        p.tensor.set_data(e.data.iter().map(|&v| v as f64).collect());
    }
    if let Some(name) = by_name.keys().next() {
        return Err(Error::Format(format!("unexpected weight '{name}' in checkpoint")));
    }
    Ok(())
}
