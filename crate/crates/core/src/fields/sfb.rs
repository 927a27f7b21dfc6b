//! SFB dataset files: a flat binary container for batches of equally-shaped
//! grid fields.
//!
//! Layout (all little-endian):
//! magic `SFB1`, u32 record count, u32 channels, u32 n_y, u32 n_x,
//! u32 dtype code (0 = f32), 8 reserved bytes, then each record as raw
//! planar f32 values. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{FsrError, Result};
use crate::fields::{DomainBox, GridField};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SFB1";
const DTYPE_F32: u32 = 0;

pub fn write_sfb<T: Scalar>(path: &Path, fields: &[GridField<T>]) -> Result<()> {
    if fields.is_empty() {
        return Err(FsrError::invalid("sfb-write", "no records"));
    }
    let c = fields[0].channels();
    let (ny, nx) = fields[0].extents();
    for f in fields {
        if f.channels() != c || f.extents() != (ny, nx) {
            return Err(FsrError::invalid(
                "sfb-write",
                "all records must share channels and extents",
            ));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(fields.len() as u32).to_le_bytes())?;
    w.write_all(&(c as u32).to_le_bytes())?;
    w.write_all(&(ny as u32).to_le_bytes())?;
    w.write_all(&(nx as u32).to_le_bytes())?;
    w.write_all(&DTYPE_F32.to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    for f in fields {
        for &v in f.values().data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Counter<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Counter<R> {
    fn read_exact_at(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|_| FsrError::Parse {
            offset: at,
            msg: format!("truncated while reading {}", what),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_at(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }
}

pub fn read_sfb(path: &Path) -> Result<Vec<GridField<f32>>> {
    let mut r = Counter {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact_at(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(FsrError::Parse {
            offset: 0,
            msg: "not an SFB file".to_string(),
        });
    }
    let count = r.read_u32("record count")? as usize;
    let c = r.read_u32("channels")? as usize;
    let ny = r.read_u32("n_y")? as usize;
    let nx = r.read_u32("n_x")? as usize;
    let dtype = r.read_u32("dtype")?;
    if dtype != DTYPE_F32 {
        return Err(FsrError::Parse {
            offset: r.offset - 4,
            msg: format!("unsupported dtype code {}", dtype),
        });
    }
    let mut reserved = [0u8; 8];
    r.read_exact_at(&mut reserved, "reserved bytes")?;

    let per_record = c * ny * nx;
    let mut fields = Vec::with_capacity(count);
    let mut buf = vec![0u8; per_record * 4];
    for rec in 0..count {
        r.read_exact_at(&mut buf, &format!("record {}", rec))?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        fields.push(GridField::new(
            Tensor::new(vec![c, ny, nx], data)?,
            DomainBox::unit(),
        )?);
    }
    Ok(fields)
}
