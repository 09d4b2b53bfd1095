//! Binary container for named tensors.
//!
//! Layout, all integers u64 little-endian, all payloads f64 little-endian:
//!
//! ```text
//! magic "TFU1" | entry count | entries...
//! entry: name length | name (UTF-8) | rank | dims... | data...
//! ```
//!
//! Values round-trip bit-exactly: the payload is the raw IEEE-754 bit
//! pattern of each f64, including negative zeros and subnormals.

use super::Tensor;
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"TFU1";

/// Maximum tensor elements accepted when reading; guards against
/// corrupt headers demanding absurd allocations.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_tensors<W: Write>(w: &mut W, entries: &[(String, &Tensor)]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(entries.len() as u64).to_le_bytes())?;
    for (name, tensor) in entries {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape().len() as u64).to_le_bytes())?;
        for &d in tensor.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor)>> {
    let bad = |details: String| Error::checkpoint(details);
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {:?}, expected {:?}", magic, MAGIC)));
    }
    let count = read_u64(r)?;
    let mut entries = Vec::new();
    for i in 0..count {
        let name_len = read_u64(r)?;
        if name_len > 4096 {
            return Err(bad(format!(
                "entry {i}: name length {name_len} is implausible"
            )));
        }
        let mut name_bytes = vec![0u8; name_len as usize];
        read_exact(r, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| bad(format!("entry {i}: name is not valid UTF-8")))?;
        let rank = read_u64(r)?;
        if rank > 8 {
            return Err(bad(format!("entry {name:?}: rank {rank} is implausible")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let d = read_u64(r)?;
            numel = numel.saturating_mul(d.max(1));
            shape.push(d as usize);
        }
        if numel > MAX_ELEMENTS {
            return Err(bad(format!(
                "entry {name:?}: {numel} elements exceeds reader limit"
            )));
        }
        let total: usize = shape.iter().product();
        let mut data = Vec::with_capacity(total);
        let mut buf = [0u8; 8];
        for _ in 0..total {
            read_exact(r, &mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        entries.push((name, Tensor::new(shape, data)?));
    }
    Ok(entries)
}

pub fn save_tensors(path: &Path, entries: &[(String, &Tensor)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensors(&mut w, entries).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensors(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Checkpoint { details } => {
            Error::checkpoint(format!("{}: {details}", path.display()))
        }
        other => other,
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::checkpoint("file is truncated or not a tensor container".to_string()))
}
