//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "MLPK"
//! version      u32      currently 1
//! n_dims       u32
//! dims         n_dims x u32
//! hidden       u8       0 = relu, 1 = tanh
//! head         u8       0 = linear, 1 = softmax
//! [n_groups    u32      softmax only
//!  groups      n_groups x u32]
//! n_params     u64
//! params       n_params x f64 (IEEE-754 bits, declared layer order)
//! crc32        u32      over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{Activation, Head, Mlp, NnError};

pub const MAGIC: &[u8; 4] = b"MLPK";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(net: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.dims().len() as u32).to_le_bytes());
    for &d in net.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(match net.hidden() {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    });
    match net.head() {
        Head::Linear => out.push(0),
        Head::Softmax { groups } => {
            out.push(1);
            out.extend_from_slice(&(groups.len() as u32).to_le_bytes());
            for &g in groups {
                out.extend_from_slice(&(g as u32).to_le_bytes());
            }
        }
    }
    out.extend_from_slice(&(net.num_params() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            NnError::Checkpoint(format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Mlp, NnError> {
    if bytes.len() < 8 {
        return Err(NnError::Checkpoint("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(NnError::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let n_dims = r.u32()? as usize;
    if n_dims > 64 {
        return Err(NnError::Checkpoint(format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let hidden = match r.u8()? {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        t => return Err(NnError::Checkpoint(format!("unknown activation tag {t}"))),
    };
    let head = match r.u8()? {
        0 => Head::Linear,
        1 => {
            let n = r.u32()? as usize;
            if n > dims.last().copied().unwrap_or(0) {
                return Err(NnError::Checkpoint("too many softmax groups".into()));
            }
            Head::Softmax { groups: (0..n).map(|_| r.u32().map(|g| g as usize)).collect::<Result<_, _>>()? }
        }
        t => return Err(NnError::Checkpoint(format!("unknown head tag {t}"))),
    };
    let n_params = r.u64()? as usize;
    let raw = r.take(n_params.checked_mul(8).ok_or_else(|| NnError::Checkpoint("size overflow".into()))?)?;
    let params = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if r.pos != body.len() {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    Mlp::from_params(&dims, hidden, head, params)
}

pub fn save(net: &Mlp, path: &Path) -> Result<(), NnError> {
    fs::write(path, encode(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Mlp, NnError> {
    decode(&fs::read(path)?)
}
