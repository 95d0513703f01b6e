//! `.nfsw` checkpoints: magic, dimensions, then every named parameter with
//! its module tag, shape and `f64` payload.

use std::path::Path;

use super::{layout, HarModel, ModelDims, ModelError, Module, Param};
use crate::dataset_io::bytes::{ByteReader, PutLe};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NFSW";
const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(model: &HarModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.put_u16(CHECKPOINT_VERSION);
    for d in model.dims.all() {
        out.put_u32(d as u32);
    }
    out.put_u32(model.params.len() as u32);
    for p in &model.params {
        out.put_u16(p.name.len() as u16);
        out.extend_from_slice(p.name.as_bytes());
        out.put_u8(p.module.tag());
        out.put_u8(p.value.shape().len() as u8);
        for &s in p.value.shape() {
            out.put_u32(s as u32);
        }
        for &v in p.value.data() {
            out.put_f64(v);
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<HarModel, ModelError> {
    let bad = |m: String| ModelError::Checkpoint(m);
    let mut r = ByteReader::new(bytes);
    let trunc = |t: crate::dataset_io::bytes::Truncated| {
        ModelError::Checkpoint(format!("truncated at byte {}: need {} bytes", t.offset, t.needed))
    };
    if r.take(4).map_err(trunc)? != CHECKPOINT_MAGIC {
        return Err(bad("missing NFSW magic".into()));
    }
    let version = r.u16().map_err(trunc)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut d = [0usize; 6];
    for v in &mut d {
        *v = r.u32().map_err(trunc)? as usize;
    }
    let dims = ModelDims {
        input: d[0],
        encoder: d[1],
        decoder: d[2],
        hidden: d[3],
        feature: d[4],
        classes: d[5],
    };
    let expected = layout(&dims);
    let count = r.u32().map_err(trunc)? as usize;
    if count != expected.len() {
        return Err(bad(format!("{count} parameters, expected {}", expected.len())));
    }
    let mut params = Vec::with_capacity(count);
    for (name, module, shape) in expected {
        let len = r.u16().map_err(trunc)? as usize;
        let got = r.take(len).map_err(trunc)?;
        if got != name.as_bytes() {
            return Err(bad(format!(
                "expected parameter {name}, found {}",
                String::from_utf8_lossy(got)
            )));
        }
        let tag = r.u8().map_err(trunc)?;
        if Module::from_tag(tag) != Some(module) {
            return Err(bad(format!("{name}: module tag {tag} does not match")));
        }
        let rank = r.u8().map_err(trunc)? as usize;
        let mut got_shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            got_shape.push(r.u32().map_err(trunc)? as usize);
        }
        if got_shape != shape {
            return Err(bad(format!("{name}: shape {got_shape:?}, expected {shape:?}")));
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.f64().map_err(trunc)?);
        }
        params.push(Param {
            name,
            module,
            value: Tensor::new(shape, data)?,
        });
    }
    if r.remaining() != 0 {
        return Err(bad(format!("{} trailing bytes", r.remaining())));
    }
    Ok(HarModel { dims, params })
}

pub fn save_checkpoint(model: &HarModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)).map_err(|source| ModelError::Io {
        path: path.into(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<HarModel, ModelError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.into(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
