use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use super::bytes::{ByteReader, PutLe, Truncated};
use super::DatasetError;
use crate::channel_sim::CsiSample;

pub const MAGIC: &[u8; 4] = b"NFSL";
pub const FORMAT_VERSION: u16 = 1;

/// Header bytes per record: version, P, N, M, activity, subject, environment.
const HEADER_LEN: usize = 2 + 4 + 1 + 2 + 1 + 2 + 1;

/// Serializes `samples`. RSSI and CSI are stored in single precision, so
/// values that are not already `f32`-exact are rounded.
pub fn encode_dataset(samples: &[CsiSample]) -> Result<Vec<u8>, DatasetError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for (index, s) in samples.iter().enumerate() {
        let bad = |reason: String| DatasetError::Encode { index, reason };
        let p = s.n_packets();
        if s.n_antennas > u8::MAX as usize || s.n_subcarriers > u16::MAX as usize {
            return Err(bad(format!(
                "{} antennas x {} subcarriers exceeds the header range",
                s.n_antennas, s.n_subcarriers
            )));
        }
        if p > u32::MAX as usize {
            return Err(bad(format!("{p} packets exceeds the header range")));
        }
        s.validate().map_err(|e| bad(e.to_string()))?;
        out.put_u16(FORMAT_VERSION);
        out.put_u32(p as u32);
        out.put_u8(s.n_antennas as u8);
        out.put_u16(s.n_subcarriers as u16);
        out.put_u8(s.activity_label);
        out.put_u16(s.subject_id);
        out.put_u8(s.environment_id);
        for &t in &s.timestamps_s {
            out.put_f64(t);
        }
        for &r in &s.rssi_dbm {
            out.put_f32(r as f32);
        }
        for c in &s.csi {
            out.put_f32(c.re as f32);
            out.put_f32(c.im as f32);
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<CsiSample>, DatasetError> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4).map_err(|_| DatasetError::BadMagic {
        expected: String::from_utf8_lossy(MAGIC).into_owned(),
        found: bytes.to_vec(),
    })?;
    if magic != MAGIC {
        return Err(DatasetError::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: magic.to_vec(),
        });
    }
    let mut samples = Vec::new();
    while r.remaining() > 0 {
        samples.push(decode_record(&mut r, samples.len())?);
    }
    Ok(samples)
}

fn decode_record(r: &mut ByteReader<'_>, record: usize) -> Result<CsiSample, DatasetError> {
    let start = r.offset();
    let trunc = |t: Truncated| DatasetError::Truncated {
        record,
        offset: t.offset,
        needed: t.needed,
        available: t.available,
    };
    if r.remaining() < HEADER_LEN {
        return Err(trunc(Truncated {
            offset: start,
            needed: HEADER_LEN,
            available: r.remaining(),
        }));
    }
    let version = r.u16().map_err(trunc)?;
    if version != FORMAT_VERSION {
        return Err(DatasetError::Version {
            record,
            offset: start,
            found: version,
        });
    }
    let p = r.u32().map_err(trunc)? as usize;
    let n = r.u8().map_err(trunc)? as usize;
    let m = r.u16().map_err(trunc)? as usize;
    let activity = r.u8().map_err(trunc)?;
    let subject = r.u16().map_err(trunc)?;
    let environment = r.u8().map_err(trunc)?;
    if p < 2 || n == 0 || m == 0 {
        return Err(DatasetError::Malformed {
            record,
            offset: start,
            reason: format!("declares P={p}, N={n}, M={m}"),
        });
    }
    let payload = p * 8 + p * 4 + p * n * m * 8;
    if r.remaining() < payload {
        return Err(trunc(Truncated {
            offset: r.offset(),
            needed: payload,
            available: r.remaining(),
        }));
    }
    let ts_offset = r.offset();
    let mut timestamps = Vec::with_capacity(p);
    for i in 0..p {
        let t = r.f64().map_err(trunc)?;
        if i > 0 && !(t > timestamps[i - 1]) {
            return Err(DatasetError::NonMonotone {
                record,
                offset: ts_offset + 8 * i,
                packet: i,
            });
        }
        timestamps.push(t);
    }
    let mut rssi = Vec::with_capacity(p);
    for _ in 0..p {
        rssi.push(r.f32().map_err(trunc)? as f64);
    }
    let mut csi = Vec::with_capacity(p * n * m);
    for _ in 0..p * n * m {
        let re = r.f32().map_err(trunc)? as f64;
        let im = r.f32().map_err(trunc)? as f64;
        csi.push(Complex64::new(re, im));
    }
    Ok(CsiSample {
        timestamps_s: timestamps,
        rssi_dbm: rssi,
        csi,
        n_antennas: n,
        n_subcarriers: m,
        activity_label: activity,
        subject_id: subject,
        environment_id: environment,
    })
}

/// Writes `samples` to `path` and returns the record count.
pub fn write_dataset(path: impl AsRef<Path>, samples: &[CsiSample]) -> Result<usize, DatasetError> {
    let path = path.as_ref();
    let bytes = encode_dataset(samples)?;
    std::fs::write(path, bytes).map_err(|e| DatasetError::io(path, e))?;
    Ok(samples.len())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<CsiSample>, DatasetError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    decode_dataset(&bytes)
}

/// Hex SHA-256 of the encoded dataset.
pub fn dataset_hash(samples: &[CsiSample]) -> Result<String, DatasetError> {
    Ok(hex::encode(Sha256::digest(encode_dataset(samples)?)))
}
