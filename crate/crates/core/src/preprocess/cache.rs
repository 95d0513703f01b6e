//! `.nfsx` cache of assembled inputs. Only the valid rows are stored; the
//! padding is rebuilt on load.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{EmbedParams, ModelInput, PreprocessError, PAD_VALUE};
use crate::dataset_io::bytes::{ByteReader, PutLe};

pub const CACHE_MAGIC: &[u8; 4] = b"NFSX";
const CACHE_VERSION: u16 = 1;

/// Cache key binding a dataset hash to the embedding parameters and pad
/// length.
pub fn cache_key(dataset_hash: &str, params: &EmbedParams, pad_len: usize) -> String {
    let text = format!(
        "{dataset_hash}|dim={}|ref={:e}|dur={:e}|pad={pad_len}",
        params.dim, params.ref_interval_s, params.activity_duration_s
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn encode(inputs: &[ModelInput], key: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.put_u16(CACHE_VERSION);
    out.put_u32(key.len() as u32);
    out.extend_from_slice(key.as_bytes());
    out.put_u32(inputs.len() as u32);
    for x in inputs {
        out.put_u32(x.pad_len as u32);
        out.put_u32(x.n_features as u32);
        out.put_u32(x.valid_len as u32);
        out.put_u8(x.label);
        out.put_u16(x.subject);
        out.put_u8(x.environment);
        out.put_u64(x.sample_id as u64);
        for &v in x.valid() {
            out.put_f64(v);
        }
    }
    out
}

fn decode(bytes: &[u8], expected_key: Option<&str>) -> Result<Vec<ModelInput>, PreprocessError> {
    let mut r = ByteReader::new(bytes);
    let trunc = |t: crate::dataset_io::bytes::Truncated| {
        PreprocessError::Cache(format!(
            "truncated at byte {}: need {} bytes, {} left",
            t.offset, t.needed, t.available
        ))
    };
    if r.take(4).map_err(trunc)? != CACHE_MAGIC {
        return Err(PreprocessError::Cache("missing NFSX magic".into()));
    }
    let version = r.u16().map_err(trunc)?;
    if version != CACHE_VERSION {
        return Err(PreprocessError::Cache(format!("unsupported version {version}")));
    }
    let key_len = r.u32().map_err(trunc)? as usize;
    let key = String::from_utf8_lossy(r.take(key_len).map_err(trunc)?).into_owned();
    if let Some(want) = expected_key {
        if key != want {
            return Err(PreprocessError::Cache(format!("stale cache: key {key} != {want}")));
        }
    }
    let count = r.u32().map_err(trunc)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let pad_len = r.u32().map_err(trunc)? as usize;
        let n_features = r.u32().map_err(trunc)? as usize;
        let valid_len = r.u32().map_err(trunc)? as usize;
        let label = r.u8().map_err(trunc)?;
        let subject = r.u16().map_err(trunc)?;
        let environment = r.u8().map_err(trunc)?;
        let sample_id = r.u64().map_err(trunc)? as usize;
        if valid_len > pad_len {
            return Err(PreprocessError::Cache(format!(
                "record {}: valid length {valid_len} exceeds pad length {pad_len}",
                out.len()
            )));
        }
        let mut data = Vec::with_capacity(pad_len * n_features);
        for _ in 0..valid_len * n_features {
            data.push(r.f64().map_err(trunc)?);
        }
        data.resize(pad_len * n_features, PAD_VALUE);
        out.push(ModelInput {
            data,
            pad_len,
            n_features,
            valid_len,
            label,
            subject,
            environment,
            sample_id,
        });
    }
    if r.remaining() != 0 {
        return Err(PreprocessError::Cache(format!("{} trailing bytes", r.remaining())));
    }
    Ok(out)
}

pub fn write_cache(path: impl AsRef<Path>, inputs: &[ModelInput], key: &str) -> Result<(), PreprocessError> {
    let path = path.as_ref();
    std::fs::write(path, encode(inputs, key)).map_err(|source| PreprocessError::Io {
        path: path.into(),
        source,
    })
}

/// Loads a cache; with `expected_key` set, a cache built from other inputs
/// is rejected.
pub fn read_cache(path: impl AsRef<Path>, expected_key: Option<&str>) -> Result<Vec<ModelInput>, PreprocessError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| PreprocessError::Io {
        path: path.into(),
        source,
    })?;
    decode(&bytes, expected_key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_stale_key() {
        let mut a = ModelInput {
            data: vec![0.25; 3 * 4],
            pad_len: 3,
            n_features: 4,
            valid_len: 2,
            label: 1,
            subject: 9,
            environment: 2,
            sample_id: 11,
        };
        a.data[8..].fill(PAD_VALUE);
        let key = cache_key("abc", &EmbedParams::default(), 3);
        let bytes = encode(std::slice::from_ref(&a), &key);
        assert_eq!(decode(&bytes, Some(&key)).unwrap(), vec![a]);
        assert!(decode(&bytes, Some("other")).is_err());
        assert!(decode(&bytes[..bytes.len() - 1], None).is_err());
        assert_ne!(key, cache_key("abc", &EmbedParams::default(), 4));
    }
}
