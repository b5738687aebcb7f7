//! Binary tensor-series files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "TFMS"            4 bytes magic
//! version           u32, currently 1
//! K                 u32, tensor order
//! T                 u32, number of observations
//! d_1 .. d_K        K × u32
//! values            T · Πd_k × f64, observation-major, first mode fastest
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, TensorSeries, MAX_ORDER};

pub const MAGIC: &[u8; 4] = b"TFMS";
pub const VERSION: u32 = 1;

pub fn write_series<W: Write>(mut w: W, series: &TensorSeries) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&to_u32(series.order(), "order")?.to_le_bytes())?;
    w.write_all(&to_u32(series.len(), "T")?.to_le_bytes())?;
    for &d in series.dims() {
        w.write_all(&to_u32(d, "dimension")?.to_le_bytes())?;
    }
    for x in series.iter() {
        for v in x.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_series<R: Read>(mut r: R) -> Result<TensorSeries> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not a TFMS file (bad magic)"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::invalid(format!(
            "unsupported TFMS version {version}"
        )));
    }
    let k = read_u32(&mut r)? as usize;
    if k == 0 || k > MAX_ORDER {
        return Err(Error::invalid(format!(
            "tensor order {k} outside 1..={MAX_ORDER}"
        )));
    }
    let t = read_u32(&mut r)? as usize;
    let dims = (0..k)
        .map(|_| read_u32(&mut r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let d: usize = dims
        .iter()
        .try_fold(1usize, |acc, &x| acc.checked_mul(x))
        .ok_or_else(|| Error::invalid("dimensions overflow"))?;
    let mut buf = vec![0u8; d * 8];
    let mut obs = Vec::with_capacity(t);
    for _ in 0..t {
        r.read_exact(&mut buf).map_err(truncated)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        obs.push(Tensor::new(dims.clone(), data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::invalid("trailing bytes after TFMS payload"));
    }
    TensorSeries::new(obs)
}

pub fn save(path: impl AsRef<Path>, series: &TensorSeries) -> Result<()> {
    write_series(BufWriter::new(File::create(path)?), series)
}

pub fn load(path: impl AsRef<Path>) -> Result<TensorSeries> {
    read_series(BufReader::new(File::open(path)?))
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit in u32")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::invalid("truncated TFMS file")
    } else {
        Error::Io(e)
    }
}
