//! Named parameter storage, Glorot-style initialization, tape binding, and
//! the checkpoint file format.
//!
//! Checkpoint layout: magic `FSRCKPT1`, then for each named entry:
//! u32 LE name length, UTF-8 name, u32 rank, u32 extents, raw f32 LE values.
//! Entries are written in insertion order, so identical training runs produce
//! byte-identical files. Reserved prefixes `__cfg.` and `__opt.` carry model
//! hyperparameters and optimizer state inside the same format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{FsrError, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub struct ParamStore<T> {
    entries: Vec<(String, Arc<Tensor<T>>)>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(FsrError::invalid(
                "param-store",
                format!("duplicate parameter '{}'", name),
            ));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, Arc::new(value)));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<Tensor<T>>> {
        self.index
            .get(name)
            .map(|&i| Arc::clone(&self.entries[i].1))
            .ok_or_else(|| FsrError::invalid("param-store", format!("missing parameter '{}'", name)))
    }

    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| FsrError::invalid("param-store", format!("missing parameter '{}'", name)))?;
        self.entries[i].1 = Arc::new(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arc<Tensor<T>>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Mutable access for the optimizer; clones only if the tensor is shared.
    pub fn update(&mut self, name: &str, f: impl FnOnce(&mut Tensor<T>)) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| FsrError::invalid("param-store", format!("missing parameter '{}'", name)))?;
        let t = Arc::make_mut(&mut self.entries[i].1);
        f(t);
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Parameter handles registered on one tape.
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    pub fn from_map(vars: HashMap<String, Var>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| FsrError::invalid("bound-params", format!("unbound parameter '{}'", name)))
    }
}

/// Register every learnable parameter on `tape` (in insertion order, so node
/// ids are deterministic). Reserved-prefix entries are skipped.
pub fn bind<T: Scalar>(store: &ParamStore<T>, tape: &Tape<T>) -> Bound {
    let mut vars = HashMap::new();
    for (name, tensor) in store.iter() {
        if is_reserved(name) {
            continue;
        }
        vars.insert(name.to_string(), tape.leaf_arc(Arc::clone(tensor), true));
    }
    Bound { vars }
}

pub fn is_reserved(name: &str) -> bool {
    name.starts_with("__cfg.") || name.starts_with("__opt.")
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Uniform in `+-sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of_f64(rng.gen_range(-bound..bound)))
}

/// Dense weight `(d_in, d_out)`.
pub fn init_dense<T: Scalar>(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Tensor<T> {
    glorot(&[d_in, d_out], d_in, d_out, rng)
}

/// Conv kernel `(c_out, c_in, k, k)` with fan counts over receptive fields.
pub fn init_conv<T: Scalar>(c_out: usize, c_in: usize, k: usize, rng: &mut impl Rng) -> Tensor<T> {
    glorot(&[c_out, c_in, k, k], c_in * k * k, c_out * k * k, rng)
}

// ---------------------------------------------------------------------------
// Checkpoint IO
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 8] = b"FSRCKPT1";

pub fn save_checkpoint<T: Scalar>(path: &Path, store: &ParamStore<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    for (name, tensor) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &e in tensor.shape() {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ParamStore<T>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut offset = 0u64;
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, &mut offset, "magic")?;
    if &magic != CKPT_MAGIC {
        return Err(FsrError::Parse {
            offset: 0,
            msg: "not a checkpoint file".to_string(),
        });
    }
    let mut store = ParamStore::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read(&mut len_buf)? {
            0 => break,
            4 => {}
            n => {
                return Err(FsrError::Parse {
                    offset: offset + n as u64,
                    msg: "truncated name length".to_string(),
                })
            }
        }
        offset += 4;
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name_buf = vec![0u8; name_len];
        read_exact(&mut r, &mut name_buf, &mut offset, "name")?;
        let name = String::from_utf8(name_buf).map_err(|_| FsrError::Parse {
            offset,
            msg: "parameter name is not UTF-8".to_string(),
        })?;
        let mut rank_buf = [0u8; 4];
        read_exact(&mut r, &mut rank_buf, &mut offset, "rank")?;
        let rank = u32::from_le_bytes(rank_buf) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut e = [0u8; 4];
            read_exact(&mut r, &mut e, &mut offset, "extent")?;
            shape.push(u32::from_le_bytes(e) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data_buf = vec![0u8; numel * 4];
        read_exact(&mut r, &mut data_buf, &mut offset, &format!("values of '{}'", name))?;
        let data: Vec<T> = data_buf
            .chunks_exact(4)
            .map(|b| T::of_f64(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        store.insert(name, Tensor::new(shape, data)?)?;
    }
    Ok(store)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    let at = *offset;
    r.read_exact(buf).map_err(|_| FsrError::Parse {
        offset: at,
        msg: format!("truncated while reading {}", what),
    })?;
    *offset += buf.len() as u64;
    Ok(())
}
