//! Turns a [`CsiSample`] into the padded `T x S` network input: time
//! embedding of the packet gaps, normalized RSSI and amplitude of the
//! antenna conjugate product, and its phase mapped onto the unit circle.

mod cache;

pub use cache::{cache_key, read_cache, write_cache, CACHE_MAGIC};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel_sim::CsiSample;

/// Fill value of rows past the valid length.
pub const PAD_VALUE: f64 = -1.0;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("conjugate product needs at least 2 antennas, got {0}")]
    TooFewAntennas(usize),
    #[error("timestamps must be strictly increasing (packet {0})")]
    NonMonotone(usize),
    #[error("need at least 2 packets, got {0}")]
    TooFewPackets(usize),
    #[error("pad length {got} is shorter than the {required} rows this sample needs")]
    PadTooShort { required: usize, got: usize },
    #[error("empty dataset")]
    Empty,
    #[error("cache: {0}")]
    Cache(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedParams {
    pub dim: usize,
    pub ref_interval_s: f64,
    pub activity_duration_s: f64,
}

impl Default for EmbedParams {
    fn default() -> Self {
        Self {
            dim: 16,
            ref_interval_s: 0.024,
            activity_duration_s: 2.0,
        }
    }
}

impl EmbedParams {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.dim < 2 || self.dim % 2 != 0 {
            return Err(PreprocessError::Params(format!(
                "embedding dimension must be even and at least 2, got {}",
                self.dim
            )));
        }
        if !(self.ref_interval_s > 0.0) {
            return Err(PreprocessError::Params("reference interval must be positive".into()));
        }
        if !(self.activity_duration_s > 1.0) {
            return Err(PreprocessError::Params(
                "activity duration must exceed 1 so frequencies decrease".into(),
            ));
        }
        Ok(())
    }

    /// Divisor `T^(2j/D) * dt_ref` of the `j`-th (1-based) sin/cos pair.
    pub fn scale(&self, j: usize) -> f64 {
        self.activity_duration_s
            .powf(2.0 * j as f64 / self.dim as f64)
            * self.ref_interval_s
    }

    /// Feature width for `n_antennas x n_subcarriers` CSI.
    pub fn n_features(&self, n_antennas: usize, n_subcarriers: usize) -> usize {
        self.dim + 1 + 3 * (n_antennas - 1) * n_subcarriers
    }
}

/// Padded network input of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    /// `[pad_len x n_features]`, row-major.
    pub data: Vec<f64>,
    pub pad_len: usize,
    pub n_features: usize,
    pub valid_len: usize,
    pub label: u8,
    pub subject: u16,
    pub environment: u8,
    pub sample_id: usize,
}

impl ModelInput {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_features..(r + 1) * self.n_features]
    }

    /// The unpadded `valid_len x n_features` block.
    pub fn valid(&self) -> &[f64] {
        &self.data[..self.valid_len * self.n_features]
    }

    /// Same rows padded (or cut) to `pad_len`; `pad_len` must cover the
    /// valid rows.
    pub fn repad(&self, pad_len: usize) -> Result<Self, PreprocessError> {
        if pad_len < self.valid_len {
            return Err(PreprocessError::PadTooShort {
                required: self.valid_len,
                got: pad_len,
            });
        }
        let mut data = self.valid().to_vec();
        data.resize(pad_len * self.n_features, PAD_VALUE);
        Ok(Self {
            data,
            pad_len,
            ..self.clone()
        })
    }
}

/// `conj(h[p, 0, m]) * h[p, n, m]` for every antenna `n >= 1`, laid out as
/// `[P x (N-1) x M]`.
pub fn conjugate_ratio(
    csi: &[Complex64],
    n_antennas: usize,
    n_subcarriers: usize,
) -> Result<Vec<Complex64>, PreprocessError> {
    if n_antennas < 2 {
        return Err(PreprocessError::TooFewAntennas(n_antennas));
    }
    let stride = n_antennas * n_subcarriers;
    let mut out = Vec::with_capacity(csi.len() / n_antennas * (n_antennas - 1));
    for packet in csi.chunks(stride) {
        let (reference, rest) = packet.split_at(n_subcarriers);
        for ant in rest.chunks(n_subcarriers) {
            out.extend(reference.iter().zip(ant).map(|(r, h)| r.conj() * h));
        }
    }
    Ok(out)
}

/// Unit-circle phase features.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCircle {
    /// Per row of `row_len` inputs: `row_len` sines followed by `row_len`
    /// cosines.
    pub values: Vec<f64>,
    /// Entries with zero magnitude, mapped to angle 0.
    pub zero_magnitude: usize,
}

pub fn phase_circle(h: &[Complex64], row_len: usize) -> PhaseCircle {
    let row_len = row_len.max(1);
    let mut values = vec![0.0; 2 * h.len()];
    let mut zero_magnitude = 0;
    for (src, dst) in h.chunks(row_len).zip(values.chunks_mut(2 * row_len)) {
        let (sin, cos) = dst.split_at_mut(src.len());
        for (i, c) in src.iter().enumerate() {
            let angle = if c.re == 0.0 && c.im == 0.0 {
                zero_magnitude += 1;
                0.0
            } else {
                c.arg()
            };
            sin[i] = angle.sin();
            cos[i] = angle.cos();
        }
    }
    PhaseCircle {
        values,
        zero_magnitude,
    }
}

/// `[P-1 x D]` embedding of the gaps `t[i+1] - t[i]`. Column `2(j-1)` holds
/// `sin(dt / scale(j))` and column `2(j-1)+1` the matching cosine.
pub fn time_embedding(timestamps: &[f64], params: &EmbedParams) -> Result<Vec<f64>, PreprocessError> {
    params.validate()?;
    if timestamps.len() < 2 {
        return Err(PreprocessError::TooFewPackets(timestamps.len()));
    }
    let half = params.dim / 2;
    let scales: Vec<f64> = (1..=half).map(|j| params.scale(j)).collect();
    let mut out = Vec::with_capacity((timestamps.len() - 1) * params.dim);
    for (i, w) in timestamps.windows(2).enumerate() {
        let dt = w[1] - w[0];
        if !(dt >= 0.0) {
            return Err(PreprocessError::NonMonotone(i + 1));
        }
        for s in &scales {
            let a = dt / s;
            out.push(a.sin());
            out.push(a.cos());
        }
    }
    Ok(out)
}

fn min_max(values: &[f64]) -> impl Fn(f64) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    move |v| if span > 0.0 { (v - lo) / span } else { 0.0 }
}

/// Builds the padded input. Row `i` describes packet `i+1` together with the
/// gap that precedes it, so a sample of `P` packets has `P-1` valid rows.
pub fn assemble_input(
    sample: &CsiSample,
    params: &EmbedParams,
    pad_len: usize,
) -> Result<ModelInput, PreprocessError> {
    let p = sample.n_packets();
    if p < 2 {
        return Err(PreprocessError::TooFewPackets(p));
    }
    let valid_len = p - 1;
    if pad_len < valid_len {
        return Err(PreprocessError::PadTooShort {
            required: valid_len,
            got: pad_len,
        });
    }
    let (n, m) = (sample.n_antennas, sample.n_subcarriers);
    let te = time_embedding(&sample.timestamps_s, params)?;
    let ratio = conjugate_ratio(&sample.csi, n, m)?;
    let width = (n - 1) * m;
    let used = &ratio[width..];
    let amps: Vec<f64> = used.iter().map(|c| c.norm()).collect();
    let phase = phase_circle(used, width);
    let rssi_norm = min_max(&sample.rssi_dbm[1..]);
    let amp_norm = min_max(&amps);

    let d = params.dim;
    let s = params.n_features(n, m);
    let mut data = Vec::with_capacity(pad_len * s);
    for i in 0..valid_len {
        data.extend_from_slice(&te[i * d..(i + 1) * d]);
        data.push(rssi_norm(sample.rssi_dbm[i + 1]));
        data.extend(amps[i * width..(i + 1) * width].iter().map(|&a| amp_norm(a)));
        data.extend_from_slice(&phase.values[2 * i * width..2 * (i + 1) * width]);
    }
    data.resize(pad_len * s, PAD_VALUE);
    Ok(ModelInput {
        data,
        pad_len,
        n_features: s,
        valid_len,
        label: sample.activity_label,
        subject: sample.subject_id,
        environment: sample.environment_id,
        sample_id: 0,
    })
}

/// Assembles every sample with `sample_id` set to its dataset index.
pub fn assemble_dataset(
    samples: &[CsiSample],
    params: &EmbedParams,
    pad_len: usize,
) -> Result<Vec<ModelInput>, PreprocessError> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut x = assemble_input(s, params, pad_len)?;
            x.sample_id = i;
            Ok(x)
        })
        .collect()
}

/// Median inter-packet gap over all samples.
pub fn compute_ref_interval(samples: &[CsiSample]) -> Result<f64, PreprocessError> {
    let mut gaps: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.timestamps_s.windows(2).map(|w| w[1] - w[0]))
        .collect();
    if gaps.is_empty() {
        return Err(PreprocessError::Empty);
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    Ok(if n % 2 == 1 {
        gaps[n / 2]
    } else {
        0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
    })
}

/// Rows needed to hold the longest sample.
pub fn pad_len(samples: &[CsiSample]) -> Result<usize, PreprocessError> {
    samples
        .iter()
        .map(|s| s.n_packets().saturating_sub(1))
        .max()
        .ok_or(PreprocessError::Empty)
}
