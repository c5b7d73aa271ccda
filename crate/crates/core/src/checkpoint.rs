//! Binary checkpoint, format v1. Layout in `docs/checkpoint-format.md`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::model::{Activation, ModelParams};

pub const MAGIC: [u8; 8] = *b"HXCKPT\0\0";
pub const VERSION: u32 = 1;

const TAG_LEAKY_RELU: u32 = 1;

pub fn to_bytes(p: &ModelParams) -> Result<Vec<u8>> {
    p.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    match p.activation {
        Activation::LeakyRelu { negative_slope } => {
            out.extend_from_slice(&TAG_LEAKY_RELU.to_le_bytes());
            out.extend_from_slice(&negative_slope.to_le_bytes());
        }
    }
    out.extend_from_slice(&p.dropout.to_le_bytes());
    out.extend_from_slice(&p.seed.to_le_bytes());
    out.extend_from_slice(&(p.layer_dims.len() as u32).to_le_bytes());
    for &d in &p.layer_dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for w in &p.weights {
        for v in w.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let activation = match r.u32("activation tag")? {
        TAG_LEAKY_RELU => Activation::LeakyRelu {
            negative_slope: r.f64("negative slope")?,
        },
        t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
    };
    let dropout = r.f64("dropout")?;
    let seed = r.u64("seed")?;
    let n = r.u32("layer count")? as usize;
    if !(3..=64).contains(&n) {
        return Err(Error::Checkpoint(format!("implausible layer_dims length {n}")));
    }
    let mut layer_dims = Vec::with_capacity(n);
    for _ in 0..n {
        let d = usize::try_from(r.u64("layer width")?).map_err(|_| Error::Checkpoint("layer width overflows".into()))?;
        layer_dims.push(d);
    }
    let mut weights = Vec::with_capacity(n - 1);
    for (l, w) in layer_dims.windows(2).enumerate() {
        let len = w[0]
            .checked_mul(w[1])
            .ok_or_else(|| Error::Checkpoint(format!("weight {l} size overflows")))?;
        let bytes = r.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("weight size overflows".into()))?, "weights")?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        weights.push(Matrix::from_vec(w[0], w[1], data).map_err(|e| Error::Checkpoint(format!("weight {l}: {e}")))?);
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let p = ModelParams {
        layer_dims,
        weights,
        activation,
        dropout,
        seed,
    };
    p.validate()?;
    Ok(p)
}

pub fn save(p: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let bytes = to_bytes(p)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelParams> {
    from_bytes(&fs::read(path)?)
}
