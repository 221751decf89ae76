//! Little-endian binary checkpoint:
//!
//! ```text
//! "CTFN" | version u32 | preset (u32 len, utf-8) | widths 5×u32 | layers 5×u32
//!        | dilation u32 | c_mid u32 | param count u32
//!        | per param: name (u32 len, utf-8) | ndim u32 | dims ndim×u32 | f32 data
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::{BackboneConfig, ModelConfig, NUM_STAGES};
use super::Ctfn;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CTFN";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub(crate) fn encode<T: Scalar>(model: &Ctfn<T>) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_str(&mut out, &cfg.backbone.preset);
    for w in cfg.backbone.widths {
        put_u32(&mut out, w);
    }
    for l in cfg.backbone.layers {
        put_u32(&mut out, l);
    }
    put_u32(&mut out, cfg.backbone.dilation);
    put_u32(&mut out, cfg.c_mid);
    put_u32(&mut out, model.params().len());
    for p in model.params() {
        put_str(&mut out, &p.name);
        put_u32(&mut out, p.value.shape().len());
        for d in p.value.shape() {
            put_u32(&mut out, *d);
        }
        for v in p.value.data() {
            let v = v.to_f32().expect("finite parameter");
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::format(self.path, "name is not utf-8"))
    }
}

pub(crate) fn decode<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Ctfn<T>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad magic, not a CTFN checkpoint"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"),
        ));
    }
    let preset = r.string()?;
    let mut widths = [0; NUM_STAGES];
    for w in &mut widths {
        *w = r.u32()?;
    }
    let mut layers = [0; NUM_STAGES];
    for l in &mut layers {
        *l = r.u32()?;
    }
    let dilation = r.u32()?;
    let c_mid = r.u32()?;
    let config = ModelConfig {
        backbone: BackboneConfig {
            preset,
            widths,
            layers,
            dilation,
        },
        c_mid,
    };
    let mut model = Ctfn::new(config, 0)?;

    let count = r.u32()?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let ndim = r.u32()?;
        let dims = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let numel: usize = dims.iter().product();
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::format(path, "tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        values.push((name, Tensor::new(&dims, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last parameter"));
    }
    model.load_values(values)?;
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Ctfn<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode(model)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, rebuilding the model from its stored configuration.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Ctfn<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Loads a checkpoint and rejects it unless it was written for `expected`.
pub fn load_checkpoint_expecting<T: Scalar>(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Ctfn<T>> {
    let model = load_checkpoint(path)?;
    if model.config() != expected {
        return Err(Error::ConfigMismatch {
            expected: format!("{expected:?}"),
            found: format!("{:?}", model.config()),
        });
    }
    Ok(model)
}
